#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "hidsir/epidemic.hpp"
#include "hidsir/errors.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/sde.hpp"

namespace hidsir {

// Order-insensitive reduction for pooled statistics.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 32) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

struct LyapunovEstimate {
    double slope = 0.0;
    double stderr_ = 0.0;
    double window_start = 0.0;
    double window_end = 0.0;
    bool truncated = false; // window ended at the first positivity clamp
};

namespace detail {

inline double ols_slope(std::span<const double> t, std::span<const double> y) {
    const std::size_t n = t.size();
    double tm = 0.0, ym = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        tm += t[k];
        ym += y[k];
    }
    tm /= static_cast<double>(n);
    ym /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        num += (t[k] - tm) * (y[k] - ym);
        den += (t[k] - tm) * (t[k] - tm);
    }
    if (den == 0.0) return 0.0;
    return num / den;
}

} // namespace detail

// Least-squares slope of ln I(t) over the tail window. Paths that hit the
// positivity floor are truncated at the first clamped point and the burn-in
// is rescaled onto the effective window so extinct paths keep a usable fit
// range. The residuals of ln I are strongly autocorrelated, so the stderr is
// estimated from K sub-window slopes rather than raw OLS residuals.
inline LyapunovEstimate lyapunov_slope(const SimPath& path, double burn_in,
                                       std::size_t i_component = 1,
                                       double floor = POSITIVITY_FLOOR) {
    const std::size_t n = path.n_points();
    std::size_t end = n; // one past the last usable point
    bool truncated = false;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = path.value(k, i_component);
        if (!(v > floor)) {
            end = std::max<std::size_t>(k, 1);
            truncated = true;
            break;
        }
    }
    if (end < 2) throw InsufficientData("lyapunov_slope: path extinct at start");

    const double horizon = path.grid.horizon();
    const double frac = horizon > 0.0 ? std::clamp(burn_in / horizon, 0.0, 0.95) : 0.0;
    const double t_end = path.grid.time(end - 1);
    const double t_start = path.grid.t0 + frac * (t_end - path.grid.t0);

    std::vector<double> ts, ys;
    ts.reserve(end);
    ys.reserve(end);
    for (std::size_t k = 0; k < end; ++k) {
        const double t = path.grid.time(k);
        if (t < t_start) continue;
        ts.push_back(t);
        ys.push_back(std::log(path.value(k, i_component)));
    }
    if (ts.size() < 100) throw InsufficientData("lyapunov_slope: fewer than 100 grid points");

    LyapunovEstimate est;
    est.slope = detail::ols_slope(ts, ys);
    est.window_start = ts.front();
    est.window_end = ts.back();
    est.truncated = truncated;

    constexpr std::size_t K = 8;
    const std::size_t block = ts.size() / K;
    std::vector<double> bslopes;
    for (std::size_t b = 0; b < K && block >= 4; ++b) {
        std::span<const double> tb(ts.data() + b * block, block);
        std::span<const double> yb(ys.data() + b * block, block);
        bslopes.push_back(detail::ols_slope(tb, yb));
    }
    if (bslopes.size() >= 2) {
        double m = pairwise_sum(bslopes) / static_cast<double>(bslopes.size());
        double var = 0.0;
        for (double s : bslopes) var += (s - m) * (s - m);
        var /= static_cast<double>(bslopes.size() - 1);
        est.stderr_ = std::sqrt(var / static_cast<double>(bslopes.size()));
    }
    return est;
}

// Time averages of S and I over [burn_in, T].
inline std::pair<double, double> permanence_means(const SimPath& path, double burn_in) {
    if (path.dim < 2) throw Error("permanence_means: path must carry (S, I)");
    std::vector<double> s, i;
    for (std::size_t k = 0; k < path.n_points(); ++k) {
        if (path.grid.time(k) < path.grid.t0 + burn_in) continue;
        s.push_back(path.value(k, 0));
        i.push_back(path.value(k, 1));
    }
    if (s.empty()) throw InsufficientData("permanence_means: no points beyond burn-in");
    const double n = static_cast<double>(s.size());
    return {pairwise_sum(s) / n, pairwise_sum(i) / n};
}

struct MomentCheck {
    double p = 0.0;
    double quarter_means[4] = {0.0, 0.0, 0.0, 0.0}; // E(S+I)^{1+p} per horizon quarter
    double estimate = 0.0;                          // final quarter
    double relative_drift = 0.0;                    // (q4 - q3) / q3
    bool bounded = false;                           // |relative_drift| < 10%
};

// Pooled running estimate of E (S+I)^{1+p}; the exponent must satisfy the
// moment-bound constraint 0 < p < 2 min(b1,b2) / max(sigma1^2, sigma2^2).
inline MomentCheck moment_check(std::span<const SimPath> paths, double p,
                                const EpidemicParams& params) {
    const double smax2 = std::max(params.sigma1 * params.sigma1, params.sigma2 * params.sigma2);
    const double p_max = 2.0 * std::min(params.b1, params.b2) / smax2;
    if (!(p > 0.0) || !(p < p_max))
        throw AssumptionViolated("moment_check: exponent outside (0, 2*min(b1,b2)/sigma*^2)");
    if (paths.empty()) throw InsufficientData("moment_check: empty path collection");

    MomentCheck out;
    out.p = p;
    std::vector<double> acc[4];
    for (const SimPath& path : paths) {
        if (path.dim < 2) throw Error("moment_check: path must carry (S, I)");
        const std::size_t n = path.n_points();
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t q = std::min<std::size_t>(4 * k / n, 3);
            acc[q].push_back(std::pow(path.value(k, 0) + path.value(k, 1), 1.0 + p));
        }
    }
    for (int q = 0; q < 4; ++q) {
        if (acc[q].empty()) throw InsufficientData("moment_check: empty horizon quarter");
        out.quarter_means[q] = pairwise_sum(acc[q]) / static_cast<double>(acc[q].size());
    }
    out.estimate = out.quarter_means[3];
    out.relative_drift = (out.quarter_means[3] - out.quarter_means[2]) / out.quarter_means[2];
    out.bounded = std::abs(out.relative_drift) < 0.10;
    return out;
}

struct GridSpec2D {
    double s_lo = 0.0, s_hi = 1.0;
    double i_lo = 0.0, i_hi = 1.0;
    std::size_t n_s = 50, n_i = 50;
};

// Pooled normalized 2D occupation histogram of (S, I). Samples outside the
// grid are counted in the nearest edge bin so no mass is lost.
struct OccupationHistogram {
    GridSpec2D grid;
    std::vector<double> density; // n_s x n_i, row-major in S

    double ds() const { return (grid.s_hi - grid.s_lo) / static_cast<double>(grid.n_s); }
    double di() const { return (grid.i_hi - grid.i_lo) / static_cast<double>(grid.n_i); }
    double at(std::size_t bs, std::size_t bi) const { return density[bs * grid.n_i + bi]; }
    double s_center(std::size_t bs) const {
        return grid.s_lo + (static_cast<double>(bs) + 0.5) * ds();
    }
    double i_center(std::size_t bi) const {
        return grid.i_lo + (static_cast<double>(bi) + 0.5) * di();
    }

    std::vector<double> s_marginal() const {
        std::vector<double> m(grid.n_s, 0.0);
        for (std::size_t bs = 0; bs < grid.n_s; ++bs)
            for (std::size_t bi = 0; bi < grid.n_i; ++bi) m[bs] += at(bs, bi) * di();
        return m;
    }
};

inline OccupationHistogram occupation_histogram(std::span<const SimPath> paths,
                                                const GridSpec2D& grid, double burn_in) {
    if (!(grid.s_hi > grid.s_lo) || !(grid.i_hi > grid.i_lo) || grid.n_s == 0 || grid.n_i == 0)
        throw Error("occupation_histogram: bad grid spec");
    OccupationHistogram h;
    h.grid = grid;
    h.density.assign(grid.n_s * grid.n_i, 0.0);

    std::size_t total = 0;
    for (const SimPath& path : paths) {
        if (path.dim < 2) throw Error("occupation_histogram: path must carry (S, I)");
        for (std::size_t k = 0; k < path.n_points(); ++k) {
            if (path.grid.time(k) < path.grid.t0 + burn_in) continue;
            const double s = path.value(k, 0), i = path.value(k, 1);
            auto bin = [](double v, double lo, double hi, std::size_t n) {
                if (v <= lo) return std::size_t{0};
                if (v >= hi) return n - 1;
                return std::min<std::size_t>(
                    static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n)),
                    n - 1);
            };
            h.density[bin(s, grid.s_lo, grid.s_hi, grid.n_s) * grid.n_i +
                      bin(i, grid.i_lo, grid.i_hi, grid.n_i)] += 1.0;
            ++total;
        }
    }
    if (total == 0) throw InsufficientData("occupation_histogram: no samples beyond burn-in");
    const double norm = static_cast<double>(total) * h.ds() * h.di();
    for (double& d : h.density) d /= norm;
    return h;
}

enum class Verdict { Extinction, Permanence, Indeterminate };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::Extinction:
        return "Extinction";
    case Verdict::Permanence:
        return "Permanence";
    default:
        return "Indeterminate";
    }
}

struct VerdictRecord {
    Verdict verdict = Verdict::Indeterminate;
    double slope = 0.0;
    double slope_stderr = 0.0;
    double lambda = 0.0;
    double i_mean = 0.0;
    double floor = 0.0;
};

// Extinction: slope and lambda both negative and compatible within 3 stderr.
// Permanence: lambda > 0 and the mean infection level clears the floor.
inline VerdictRecord extinction_verdict(const LyapunovEstimate& estimate, double i_mean,
                                        double lambda, double permanence_floor) {
    VerdictRecord rec;
    rec.slope = estimate.slope;
    rec.slope_stderr = estimate.stderr_;
    rec.lambda = lambda;
    rec.i_mean = i_mean;
    rec.floor = permanence_floor;
    if (lambda < 0.0 && estimate.slope < 0.0 &&
        std::abs(estimate.slope - lambda) <= 3.0 * estimate.stderr_)
        rec.verdict = Verdict::Extinction;
    else if (lambda > 0.0 && i_mean >= permanence_floor)
        rec.verdict = Verdict::Permanence;
    return rec;
}

// |time-average of sum_k l(m_k) e_k(t) - sum_k l(m_k) mu*_k| per test
// function. `e_offset` locates the filter block inside the path state.
inline std::vector<double>
barycenter_deviation(const SimPath& filter_path, const ChainSpec& spec,
                     std::span<const std::function<double(double)>> test_fns, double burn_in,
                     std::size_t e_offset = 0) {
    const std::size_t n = spec.size();
    if (filter_path.dim < e_offset + n) throw Error("barycenter_deviation: path/filter mismatch");
    const auto mu = stationary_distribution(spec);

    std::vector<double> out;
    for (const auto& l : test_fns) {
        std::vector<double> lm(n);
        for (std::size_t k = 0; k < n; ++k) lm[k] = l(spec.states[k]);

        std::vector<double> samples;
        for (std::size_t k = 0; k < filter_path.n_points(); ++k) {
            if (filter_path.grid.time(k) < filter_path.grid.t0 + burn_in) continue;
            double v = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                v += lm[j] * filter_path.value(k, e_offset + j);
            samples.push_back(v);
        }
        if (samples.empty())
            throw InsufficientData("barycenter_deviation: no points beyond burn-in");
        double target = 0.0;
        for (std::size_t j = 0; j < n; ++j) target += lm[j] * mu[j];
        out.push_back(
            std::abs(pairwise_sum(samples) / static_cast<double>(samples.size()) - target));
    }
    return out;
}

} // namespace hidsir
