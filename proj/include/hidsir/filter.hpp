#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "hidsir/errors.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/rng.hpp"

namespace hidsir {

// Posterior weights e_k(t) = P(alpha(t) = m_k | observations) on the simplex.
struct FilterState {
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
    static FilterState uniform(std::size_t n) {
        return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
    }
    static FilterState point_mass(std::size_t n, std::size_t k) {
        std::vector<double> w(n, 0.0);
        w[k] = 1.0;
        return {std::move(w)};
    }
};

// Clamp negatives to zero and renormalize; all-nonpositive input maps to the
// uniform distribution.
inline void project_simplex(std::span<double> v) {
    double sum = 0.0;
    for (double& x : v) {
        if (!(x > 0.0)) x = 0.0;
        sum += x;
    }
    if (sum <= 0.0) {
        const double u = 1.0 / static_cast<double>(v.size());
        for (double& x : v) x = u;
        return;
    }
    for (double& x : v) x /= sum;
}

inline std::vector<double> project_simplex(std::vector<double> v) {
    project_simplex(std::span<double>(v));
    return v;
}

inline double gbar(std::span<const double> e, const ChainSpec& spec) {
    double s = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) s += spec.obs[k] * e[k];
    return s;
}

namespace detail {

// Wonham dynamics evaluated at the pre-step state; both written forms share
// these kernels.
//   observation-driven: de_k = [sum_i q_ik e_i - (g_k - gbar) gbar e_k] dt
//                              + (g_k - gbar) e_k dy
//   innovation-driven:  de_k = [sum_i q_ik e_i] dt + (g_k - gbar) e_k dWbar
inline void wonham_drift(std::span<const double> e, const ChainSpec& spec, bool observation_form,
                         std::span<double> out) {
    const std::size_t n = e.size();
    const double gb = gbar(e, spec);
    for (std::size_t k = 0; k < n; ++k) {
        double flow = 0.0;
        for (std::size_t i = 0; i < n; ++i) flow += spec.generator[i][k] * e[i];
        out[k] = observation_form ? flow - (spec.obs[k] - gb) * gb * e[k] : flow;
    }
}

inline void wonham_dispersion(std::span<const double> e, const ChainSpec& spec,
                              std::span<double> out) {
    const double gb = gbar(e, spec);
    for (std::size_t k = 0; k < e.size(); ++k) out[k] = (spec.obs[k] - gb) * e[k];
}

inline void wonham_euler(std::span<const double> e, const ChainSpec& spec, double driver,
                         double dt, bool observation_form, std::span<double> out) {
    const std::size_t n = e.size();
    std::vector<double> mu(n), sig(n);
    wonham_drift(e, spec, observation_form, mu);
    wonham_dispersion(e, spec, sig);
    for (std::size_t k = 0; k < n; ++k) out[k] = e[k] + mu[k] * dt + sig[k] * driver;
}

inline void check_not_collapsed(std::span<const double> e) {
    for (double v : e)
        if (v >= 1e-300) return;
    throw DegenerateFilter("wonham_step: all weights collapsed below 1e-300");
}

} // namespace detail

// One Euler step of the Wonham system driven by the observation increment dy,
// followed by simplex projection.
inline FilterState wonham_step(const FilterState& e, const ChainSpec& spec, double dy,
                               double dt) {
    if (!(dt > 0.0)) throw Error("wonham_step: dt must be positive");
    FilterState out;
    out.weights.resize(e.size());
    detail::wonham_euler(e.weights, spec, dy, dt, /*observation_form=*/true, out.weights);
    detail::check_not_collapsed(out.weights);
    project_simplex(std::span<double>(out.weights));
    return out;
}

// Same dynamics written against the innovation dWbar = dy - gbar(e) dt.
inline FilterState wonham_step_innovation(const FilterState& e, const ChainSpec& spec,
                                          double dwbar, double dt) {
    if (!(dt > 0.0)) throw Error("wonham_step: dt must be positive");
    FilterState out;
    out.weights.resize(e.size());
    detail::wonham_euler(e.weights, spec, dwbar, dt, /*observation_form=*/false, out.weights);
    detail::check_not_collapsed(out.weights);
    project_simplex(std::span<double>(out.weights));
    return out;
}

// dWbar = dy - gbar(e) dt.
inline double innovation_increment(const FilterState& e, const ChainSpec& spec, double dy,
                                   double dt) {
    return dy - gbar(e.weights, spec) * dt;
}

// Empirical measure approximating the general nonlinear filter.
struct ParticleCloud {
    std::vector<double> positions; // in [0,1]
    std::vector<double> weights;   // simplex

    std::size_t size() const { return positions.size(); }
    double ess() const {
        double s2 = 0.0;
        for (double w : weights) s2 += w * w;
        return 1.0 / s2;
    }
    static ParticleCloud equal_weighted(std::vector<double> pos) {
        ParticleCloud c;
        c.weights.assign(pos.size(), 1.0 / static_cast<double>(pos.size()));
        c.positions = std::move(pos);
        return c;
    }
};

// Exact finite-chain transition sampler over a window of length dt: jump
// chains are simulated event by event inside the window.
class ChainTransitionSampler {
public:
    explicit ChainTransitionSampler(ChainSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
    }

    double operator()(double x, double dt, const rng::Stream& s) const {
        std::size_t idx = index_of(x);
        std::uint64_t n = 0;
        double t = 0.0;
        while (true) {
            const double rate = -spec_.generator[idx][idx];
            if (!(rate > 0.0)) break;
            t += -std::log(s.uniform(n++)) / rate;
            if (t > dt) break;
            double u = s.uniform(n++) * rate;
            std::size_t next = idx;
            for (std::size_t k = 0; k < spec_.size(); ++k) {
                if (k == idx) continue;
                u -= spec_.generator[idx][k];
                if (u <= 0.0) {
                    next = k;
                    break;
                }
            }
            if (next == idx) {
                for (std::size_t k = spec_.size(); k-- > 0;)
                    if (k != idx && spec_.generator[idx][k] > 0.0) {
                        next = k;
                        break;
                    }
            }
            idx = next;
        }
        return spec_.states[idx];
    }

    std::size_t index_of(double x) const {
        for (std::size_t k = 0; k < spec_.size(); ++k)
            if (std::abs(x - spec_.states[k]) <= 1e-12) return k;
        throw UnknownState("particle position is not a chain state");
    }

    const ChainSpec& spec() const { return spec_; }

private:
    ChainSpec spec_;
};

namespace detail {

inline void systematic_resample(ParticleCloud& cloud, double u0) {
    const std::size_t n = cloud.size();
    std::vector<double> newpos(n);
    const double step = 1.0 / static_cast<double>(n);
    double u = u0 * step;
    double cum = cloud.weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (u > cum && j + 1 < n) cum += cloud.weights[++j];
        newpos[i] = cloud.positions[j];
        u += step;
    }
    cloud.positions = std::move(newpos);
    cloud.weights.assign(n, step);
}

} // namespace detail

// Bootstrap step: propagate with the transition sampler, reweight by the
// per-step Girsanov factor exp(g(x) dy - g(x)^2 dt / 2) kept in log space,
// normalize, and systematically resample when ess < threshold * N.
//
// `step` indexes the observation increment; propagation draws come from the
// per-(step,particle) substream so arbitrarily many uniforms are available.
template <class TransitionSampler, class ObsFn>
ParticleCloud particle_filter_step(const ParticleCloud& cloud, const TransitionSampler& sampler,
                                   const ObsFn& g, double dy, double dt,
                                   double resample_threshold, std::uint64_t seed,
                                   std::size_t step) {
    if (!(dt > 0.0)) throw Error("particle_filter_step: dt must be positive");
    const std::size_t n = cloud.size();
    if (n == 0) throw Error("particle_filter_step: empty cloud");

    ParticleCloud out = cloud;
    std::vector<double> logw(n);
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const rng::Stream sub(seed, rng::PF_SUBSTREAM_BASE + step * n + i);
        out.positions[i] = sampler(cloud.positions[i], dt, sub);
        const double gx = g(out.positions[i]);
        logw[i] = std::log(cloud.weights[i]) + gx * dy - gx * gx * dt / 2.0;
        max_logw = std::max(max_logw, logw[i]);
    }
    if (!(max_logw > -std::numeric_limits<double>::infinity()))
        throw DegenerateFilter("particle_filter_step: all likelihood factors underflowed");

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.weights[i] = std::exp(logw[i] - max_logw);
        sum += out.weights[i];
    }
    for (double& w : out.weights) w /= sum;

    if (out.ess() < resample_threshold * static_cast<double>(n)) {
        const rng::Stream res(seed, rng::RESAMPLE_STREAM);
        detail::systematic_resample(out, res.uniform(step));
    }
    return out;
}

// L1 distance between the Wonham weights and the cloud's per-state mass.
inline double filter_l1_distance(const FilterState& e, const ParticleCloud& cloud,
                                 const ChainSpec& spec) {
    std::vector<double> mass(spec.size(), 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::size_t k = SIZE_MAX;
        for (std::size_t s = 0; s < spec.size(); ++s)
            if (std::abs(cloud.positions[i] - spec.states[s]) <= 1e-12) {
                k = s;
                break;
            }
        if (k == SIZE_MAX) throw UnknownState("filter_l1_distance: off-grid particle");
        mass[k] += cloud.weights[i];
    }
    double d = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) d += std::abs(e.weights[k] - mass[k]);
    return d;
}

// The scalar two-state filter SDE for e(t) = P(alpha(t) = m_1 | observations):
//   de = [q2 - (q1+q2) e] dt + g_gap e (1-e) dWbar,
// with g_gap = g_1 - g_2. One driving channel; state clamped to [0,1].
class TwoStateFilterSde {
public:
    TwoStateFilterSde(double q1, double q2, double g_gap) : q1_(q1), q2_(q2), g_(g_gap) {
        if (!(q1 > 0.0) || !(q2 > 0.0)) throw Error("TwoStateFilterSde: rates must be positive");
        if (g_gap == 0.0) throw Error("TwoStateFilterSde: g_gap must be nonzero");
    }

    std::size_t dimension() const { return 1; }
    std::size_t channels() const { return 1; }
    void drift(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = q2_ - (q1_ + q2_) * x[0];
    }
    void diffusion(std::size_t, double, std::span<const double> x, std::span<double> out) const {
        out[0] = g_ * x[0] * (1.0 - x[0]);
    }
    int constrain(std::span<double> x) const {
        int c = 0;
        if (x[0] < 0.0) {
            x[0] = 0.0;
            c = 1;
        } else if (x[0] > 1.0) {
            x[0] = 1.0;
            c = 1;
        }
        return c;
    }

private:
    double q1_, q2_, g_;
};

} // namespace hidsir
