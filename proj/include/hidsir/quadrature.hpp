#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

#include "hidsir/errors.hpp"

namespace hidsir::quad {

// Adaptive quadrature with nested Gauss-Legendre pairs (G10 inside G21 in the
// Kronrod style): each interval is scored by |G21 - G10| and the worst
// interval is bisected until the summed error estimate meets the tolerance or
// the evaluation budget runs out.

namespace detail {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
template <std::size_t N>
struct GaussRule {
    std::array<double, N> node{};
    std::array<double, N> weight{};

    GaussRule() {
        constexpr double pi = 3.14159265358979323846;
        for (std::size_t i = 0; i < (N + 1) / 2; ++i) {
            double x = std::cos(pi * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(N) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (std::size_t k = 2; k <= N; ++k) {
                    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = N * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            node[i] = -x;
            node[N - 1 - i] = x;
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            weight[i] = w;
            weight[N - 1 - i] = w;
        }
    }
};

inline const GaussRule<10>& g10() {
    static const GaussRule<10> rule;
    return rule;
}
inline const GaussRule<21>& g21() {
    static const GaussRule<21> rule;
    return rule;
}

struct Interval {
    double a, b, value, error;
    bool operator<(const Interval& o) const { return error < o.error; }
};

template <class F>
Interval evaluate(const F& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double coarse = 0.0, fine = 0.0;
    for (std::size_t i = 0; i < 10; ++i)
        coarse += g10().weight[i] * f(mid + half * g10().node[i]);
    for (std::size_t i = 0; i < 21; ++i)
        fine += g21().weight[i] * f(mid + half * g21().node[i]);
    coarse *= half;
    fine *= half;
    return {a, b, fine, std::abs(fine - coarse)};
}

} // namespace detail

struct Result {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
};

template <class F>
Result integrate(const F& f, double a, double b, double abs_tol = 1e-10,
                 std::size_t max_evaluations = 100000) {
    if (!(b > a)) throw Error("integrate: empty or inverted interval");
    std::priority_queue<detail::Interval> heap;
    heap.push(detail::evaluate(f, a, b));
    std::size_t evals = 31;
    double total = heap.top().value, err = heap.top().error;

    while (err > abs_tol) {
        if (evals + 62 > max_evaluations)
            throw QuadratureFailure("integrate: tolerance not met within evaluation budget");
        const detail::Interval worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        const auto left = detail::evaluate(f, worst.a, mid);
        const auto right = detail::evaluate(f, mid, worst.b);
        evals += 62;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if (!std::isfinite(total))
            throw QuadratureFailure("integrate: non-finite integrand");
    }
    return {total, err, evals};
}

// Integral over (0, inf) through the map z = u/(1-u); the integrand is never
// evaluated at the endpoints (all nodes are interior).
template <class F>
Result integrate_halfline(const F& f, double abs_tol = 1e-10,
                          std::size_t max_evaluations = 100000) {
    auto mapped = [&f](double u) {
        const double om = 1.0 - u;
        const double z = u / om;
        return f(z) / (om * om);
    };
    return integrate(mapped, 0.0, 1.0, abs_tol, max_evaluations);
}

} // namespace hidsir::quad
