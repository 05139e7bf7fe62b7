#pragma once

// Independent numerical oracles for the test suite. Nothing here goes through
// the library's adaptive quadrature or RNG: expectations are computed with a
// fixed-grid composite Simpson rule and special functions with their own
// series / continued-fraction evaluations.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

namespace oracle {

// Exponential integral E1(x) = int_x^inf e^-t / t dt, x > 0.
// Series for small x, Lentz continued fraction for large x.
inline double expint_e1(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("expint_e1: x must be positive");
    constexpr double euler_gamma = 0.57721566490153286060651209;
    if (x <= 1.0) {
        double sum = 0.0, term = 1.0;
        for (int k = 1; k <= 60; ++k) {
            term *= -x / k;
            sum += term / k;
            if (std::abs(term / k) < 1e-18) break;
        }
        return -euler_gamma - std::log(x) - sum;
    }
    // E1(x) = e^-x * CF, CF = 1/(x+1- 1/(x+3- 4/(x+5- 9/(x+7- ...))))
    double b = x + 1.0;
    double c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i <= 200; ++i) {
        const double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        const double del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x) * h;
}

// Regularized upper incomplete gamma Q(a,x) = Gamma(a,x)/Gamma(a).
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series, Q = 1 - P
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-17) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Q(a,x) by Lentz continued fraction
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

// CDF of InvGamma(shape a, scale b): P(Y <= y) = Q(a, b/y).
inline double invgamma_cdf(double a, double b, double y) {
    if (y <= 0.0) return 0.0;
    return gamma_q(a, b / y);
}

// Composite Simpson rule with n (even) intervals on [a,b].
template <class F>
double simpson(const F& f, double a, double b, std::size_t n = 1000000) {
    if (n % 2) ++n;
    const double h = (b - a) / static_cast<double>(n);
    double sum = f(a) + f(b);
    for (std::size_t k = 1; k < n; ++k)
        sum += f(a + static_cast<double>(k) * h) * (k % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

// High-precision E[g(Y)], Y ~ InvGamma(a, b), via z = 1/y then z = u/(1-u),
// evaluated with a 10^6-interval Simpson rule. Endpoint values vanish.
template <class G>
double invgamma_expectation(const G& g, double a, double b, std::size_t n = 1000000) {
    const double log_norm = a * std::log(b) - std::lgamma(a);
    auto integrand = [&](double u) {
        if (u <= 0.0 || u >= 1.0) return 0.0;
        const double om = 1.0 - u;
        const double z = u / om;
        const double lw = log_norm + (a - 1.0) * std::log(z) - b * z;
        const double w = std::exp(lw);
        if (w == 0.0) return 0.0;
        return g(1.0 / z) * w / (om * om);
    };
    return simpson(integrand, 0.0, 1.0, n);
}

// Closed-form E[y/(1+y)] under InvGamma(3, b):
//   (b - b^2 + b^3 e^b E1(b)) / 2.
inline double invgamma3_mean_y_over_1py(double b) {
    // e^b E1(b) evaluated without overflow through the continued fraction
    double exb;
    if (b <= 1.0) {
        exb = std::exp(b) * expint_e1(b);
    } else {
        double bb = b + 1.0, c = 1e308, d = 1.0 / bb, h = d;
        for (int i = 1; i <= 200; ++i) {
            const double an = -static_cast<double>(i) * i;
            bb += 2.0;
            d = 1.0 / (an * d + bb);
            c = bb + an / c;
            const double del = c * d;
            h *= del;
            if (std::abs(del - 1.0) < 1e-16) break;
        }
        exb = h;
    }
    return (b - b * b + b * b * b * exb) / 2.0;
}

} // namespace oracle
