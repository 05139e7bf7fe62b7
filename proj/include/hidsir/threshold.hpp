#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hidsir/epidemic.hpp"
#include "hidsir/errors.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/quadrature.hpp"

namespace hidsir {

// Stationary law of the boundary equation: inverse gamma with
//   shape a = 2 c1 / sigma1^2,  scale b = 2 a1 / sigma1^2.
struct InvGammaLaw {
    double shape = 0.0;
    double scale = 0.0;

    double mean() const {
        if (!(shape > 1.0)) throw Error("InvGammaLaw: mean requires shape > 1");
        return scale / (shape - 1.0);
    }

    double log_pdf(double y) const {
        return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(y) -
               scale / y;
    }
    double pdf(double y) const { return y > 0.0 ? std::exp(log_pdf(y)) : 0.0; }
};

inline InvGammaLaw invgamma_from_params(const EpidemicParams& p) {
    if (p.sigma1 == 0.0) throw Error("invgamma_from_params: sigma1 must be nonzero");
    const double s2 = p.sigma1 * p.sigma1;
    return {2.0 * p.c1() / s2, 2.0 * p.a1 / s2};
}

struct Expectation {
    double value = 0.0;
    double error = 0.0;
};

// E[g(Y)] for Y ~ InvGamma(a,b) via the substitution z = 1/y, which turns the
// weight into a Gamma(a, rate b) density with integrable behavior at both
// ends; the half-line is then folded onto (0,1).
template <class G>
Expectation expectation_under_invgamma(const G& g, const InvGammaLaw& law, double abs_tol = 1e-10,
                                       std::size_t max_evaluations = 100000) {
    if (!(law.shape > 0.0) || !(law.scale > 0.0))
        throw Error("expectation_under_invgamma: law parameters must be positive");
    const double a = law.shape, b = law.scale;
    const double log_norm = a * std::log(b) - std::lgamma(a);
    auto integrand = [&](double z) {
        const double lw = log_norm + (a - 1.0) * std::log(z) - b * z;
        return g(1.0 / z) * std::exp(lw);
    };
    const auto r = quad::integrate_halfline(integrand, abs_tol, max_evaluations);
    return {r.value, r.error};
}

enum class Classification { Overcautious, Incautious, Exact };

inline const char* to_string(Classification c) {
    switch (c) {
    case Classification::Overcautious:
        return "Overcautious";
    case Classification::Incautious:
        return "Incautious";
    default:
        return "Exact";
    }
}

// Overcautious if lambda_pre > lambda + tol, incautious if below -tol.
inline Classification classify_prediction(double lambda_pre, double lambda, double tol) {
    if (lambda_pre > lambda + tol) return Classification::Overcautious;
    if (lambda_pre < lambda - tol) return Classification::Incautious;
    return Classification::Exact;
}

struct ThresholdReport {
    double lambda = 0.0;
    double minus_c2 = 0.0;    // -c2
    double f_term = 0.0;      // sum_k mu*_k F_k
    double h_term = 0.0;      // sum_k m_k mu*_k H_k
    double quadrature_error = 0.0;
    double classification_tol = 0.0; // 10 x quadrature error

    struct PerState {
        double m = 0.0;          // state value
        double mu = 0.0;         // stationary weight
        double f_integral = 0.0; // F_k = E[f(m_k, Y, 0)]
        double h_integral = 0.0; // H_k = E[h(m_k, Y, 0)]
        double lambda_pre = 0.0;
        Classification label = Classification::Exact;
    };
    std::vector<PerState> states;
};

namespace detail {

struct StateIntegrals {
    double f_value, h_value, error;
};

inline StateIntegrals incidence_integrals(const IncidenceModel& model, double m,
                                          const InvGammaLaw& law, double abs_tol,
                                          std::size_t budget) {
    const auto fi = expectation_under_invgamma(
        [&](double y) { return model.eval_unchecked(m, y, 0.0).first; }, law, abs_tol, budget);
    const auto hi = expectation_under_invgamma(
        [&](double y) { return model.eval_unchecked(m, y, 0.0).second; }, law, abs_tol, budget);
    return {fi.value, hi.value, fi.error + hi.error};
}

} // namespace detail

// lambda = -c2 + sum_k mu*_k F_k + sum_k m_k mu*_k H_k over a user-supplied
// discrete signal law (states, weights).
inline ThresholdReport lambda_from_weights(const EpidemicParams& params,
                                           const IncidenceModel& model,
                                           const std::vector<double>& states,
                                           const std::vector<double>& weights,
                                           double abs_tol = 1e-10, std::size_t budget = 100000) {
    if (states.size() != weights.size() || states.empty())
        throw Error("lambda_from_weights: states/weights mismatch");
    const InvGammaLaw law = invgamma_from_params(params);

    ThresholdReport rep;
    rep.minus_c2 = -params.c2();
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto ints = detail::incidence_integrals(model, states[k], law, abs_tol, budget);
        ThresholdReport::PerState st;
        st.m = states[k];
        st.mu = weights[k];
        st.f_integral = ints.f_value;
        st.h_integral = ints.h_value;
        st.lambda_pre = rep.minus_c2 + ints.f_value + states[k] * ints.h_value;
        rep.states.push_back(st);
        rep.f_term += weights[k] * ints.f_value;
        rep.h_term += states[k] * weights[k] * ints.h_value;
        rep.quadrature_error += ints.error;
    }
    rep.lambda = rep.minus_c2 + rep.f_term + rep.h_term;
    rep.classification_tol = 10.0 * rep.quadrature_error;
    for (auto& st : rep.states)
        st.label = classify_prediction(st.lambda_pre, rep.lambda, rep.classification_tol);
    return rep;
}

inline ThresholdReport lambda_discrete(const EpidemicParams& params, const IncidenceModel& model,
                                       const ChainSpec& spec, double abs_tol = 1e-10,
                                       std::size_t budget = 100000) {
    return lambda_from_weights(params, model, spec.states, stationary_distribution(spec), abs_tol,
                               budget);
}

inline double lambda_predicted(const EpidemicParams& params, const IncidenceModel& model,
                               double m_k0, double abs_tol = 1e-10, std::size_t budget = 100000) {
    if (m_k0 < 0.0 || m_k0 > 1.0) throw Error("lambda_predicted: m_k0 must lie in [0,1]");
    const InvGammaLaw law = invgamma_from_params(params);
    const auto ints = detail::incidence_integrals(model, m_k0, law, abs_tol, budget);
    return -params.c2() + ints.f_value + m_k0 * ints.h_value;
}

// Sampled check of the monotone-in-x assumption on the boundary rates: for a
// grid of y values, f(x,y,0) and h(x,y,0) must be nondecreasing in x.
inline void require_monotone_in_signal(const IncidenceModel& model,
                                       const std::vector<double>& y_samples,
                                       std::size_t x_samples = 41) {
    for (double y : y_samples) {
        double prev_f = -1.0, prev_h = -1.0;
        for (std::size_t j = 0; j < x_samples; ++j) {
            const double x = static_cast<double>(j) / static_cast<double>(x_samples - 1);
            const auto [f, h] = model.eval_unchecked(x, y, 0.0);
            if (j > 0 && (f < prev_f - 1e-12 || h < prev_h - 1e-12))
                throw AssumptionViolated("incidence rates are not nondecreasing in x");
            prev_f = f;
            prev_h = h;
        }
    }
}

struct PredictionBounds {
    double lambda_pre_low = 0.0;  // prediction frozen at the smallest state
    double lambda = 0.0;
    double lambda_pre_high = 0.0; // prediction frozen at the largest state
    bool sandwiched = false;
};

// Under the monotone assumption the exact threshold is sandwiched between the
// lowest- and highest-state predictions.
inline PredictionBounds monotone_prediction_bounds(const EpidemicParams& params,
                                                   const IncidenceModel& model,
                                                   const ChainSpec& spec, double abs_tol = 1e-10,
                                                   std::size_t budget = 100000) {
    require_monotone_in_signal(model, {0.1, 0.5, 1.0, 2.0, 5.0, 20.0});
    const ThresholdReport rep = lambda_discrete(params, model, spec, abs_tol, budget);
    PredictionBounds out;
    out.lambda = rep.lambda;
    out.lambda_pre_low = rep.states.front().lambda_pre;
    out.lambda_pre_high = rep.states.back().lambda_pre;
    const double slack = rep.classification_tol;
    out.sandwiched = out.lambda_pre_low <= out.lambda + slack &&
                     out.lambda <= out.lambda_pre_high + slack;
    return out;
}

// Invariant density of the scalar two-state filter SDE
//   de = [q2 - (q1+q2) e] dt + g e(1-e) dWbar
// obtained from the stationary Fokker-Planck equation:
//   phi*(x) = C exp(-2 d1/(1-x)) (1-x)^{2(d1-d2-1)} exp(-2 d2/x) x^{2(d2-d1-1)},
// with d1 = q1/g^2, d2 = q2/g^2. The barycenter identity pins the mean of
// phi* at q2/(q1+q2), which this form satisfies.
struct TwoStateFilterDensity {
    double d1 = 0.0;
    double d2 = 0.0;
    double log_norm = 0.0; // log of the normalizing integral of exp(log_shape)
    double norm_error = 0.0;

    double log_shape(double x) const {
        return -2.0 * d1 / (1.0 - x) + 2.0 * (d1 - d2 - 1.0) * std::log(1.0 - x) -
               2.0 * d2 / x + 2.0 * (d2 - d1 - 1.0) * std::log(x);
    }
    double pdf(double x) const {
        if (!(x > 0.0 && x < 1.0)) return 0.0;
        return std::exp(log_shape(x) - log_norm);
    }
    double mass(double lo, double hi, double abs_tol = 1e-10) const {
        lo = std::max(lo, 0.0);
        hi = std::min(hi, 1.0);
        if (!(hi > lo)) return 0.0;
        return quad::integrate([this](double x) { return pdf(x); }, lo, hi, abs_tol).value;
    }
    double mean(double abs_tol = 1e-10) const {
        return quad::integrate([this](double x) { return x * pdf(x); }, 0.0, 1.0, abs_tol).value;
    }
};

inline TwoStateFilterDensity two_state_filter_density(double q1, double q2, double g_gap) {
    if (!(q1 > 0.0) || !(q2 > 0.0))
        throw Error("two_state_filter_density: rates must be positive");
    if (g_gap == 0.0) throw Error("two_state_filter_density: g_gap must be nonzero");

    TwoStateFilterDensity d;
    d.d1 = q1 / (g_gap * g_gap);
    d.d2 = q2 / (g_gap * g_gap);

    // Peak of the log-shape by grid scan + golden-section refinement, so the
    // normalizer is computed at a safe floating-point scale.
    double xbest = 0.5, lbest = d.log_shape(0.5);
    for (int i = 1; i < 2000; ++i) {
        const double x = static_cast<double>(i) / 2000.0;
        if (x <= 0.0 || x >= 1.0) continue;
        const double l = d.log_shape(x);
        if (l > lbest) {
            lbest = l;
            xbest = x;
        }
    }
    double lo = std::max(xbest - 1e-3, 1e-9), hi = std::min(xbest + 1e-3, 1.0 - 1e-9);
    constexpr double inv_phi = 0.6180339887498949;
    for (int it = 0; it < 200; ++it) {
        const double m1 = hi - inv_phi * (hi - lo);
        const double m2 = lo + inv_phi * (hi - lo);
        if (d.log_shape(m1) < d.log_shape(m2))
            lo = m1;
        else
            hi = m2;
    }
    const double lmax = d.log_shape(0.5 * (lo + hi));

    const auto z = quad::integrate([&](double x) { return std::exp(d.log_shape(x) - lmax); },
                                   0.0, 1.0, 1e-12, 200000);
    if (!(z.value > 0.0)) throw QuadratureFailure("two_state_filter_density: zero normalizer");
    d.log_norm = lmax + std::log(z.value);
    d.norm_error = z.error / z.value;
    return d;
}

} // namespace hidsir
