#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "hidsir/errors.hpp"
#include "hidsir/rng.hpp"

namespace hidsir {

// Uniform time grid t_k = t0 + k*dt, k = 0..n_steps. Grid points are always
// computed by multiplication, never by accumulation.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 1e-3;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, std::size_t n_steps_) : t0(t0_), dt(dt_), n_steps(n_steps_) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("TimeGrid: dt must be positive");
        if (n_steps < 1) throw Error("TimeGrid: n_steps must be >= 1");
        if (!(t0 >= 0.0)) throw Error("TimeGrid: t0 must be non-negative");
    }

    static TimeGrid over(double t0, double horizon, double dt) {
        const auto n = static_cast<std::size_t>(std::llround(horizon / dt));
        return TimeGrid(t0, dt, n < 1 ? 1 : n);
    }

    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double horizon() const { return static_cast<double>(n_steps) * dt; }
};

// Source of per-channel Brownian increments, addressed by (channel, step).
template <class N>
concept NoiseSource = requires(N n, std::size_t c, std::size_t k) {
    { n.increment(c, k) } -> std::convertible_to<double>;
    { n.channels() } -> std::convertible_to<std::size_t>;
};

// Lazy counter-based source: increment(c,k) = N(0,dt), channel c = stream c.
class BrownianSource {
public:
    BrownianSource(std::size_t n_channels, const TimeGrid& grid, std::uint64_t seed)
        : sqrt_dt_(std::sqrt(grid.dt)) {
        for (std::size_t c = 0; c < n_channels; ++c)
            seqs_.emplace_back(rng::Stream(seed, c));
    }

    double increment(std::size_t channel, std::size_t step) {
        return seqs_[channel](step) * sqrt_dt_;
    }
    std::size_t channels() const { return seqs_.size(); }

private:
    double sqrt_dt_;
    std::vector<rng::NormalSequence> seqs_;
};

// Materialized increments, channel-major; regeneration from the same seed is
// bit-identical (same streams as BrownianSource).
struct NoiseBundle {
    std::uint64_t seed = 0;
    TimeGrid grid;
    std::vector<std::vector<double>> increments; // [channel][step]

    double increment(std::size_t channel, std::size_t step) const {
        return increments[channel][step];
    }
    std::size_t channels() const { return increments.size(); }
};

inline NoiseBundle brownian_increments(std::size_t n_channels, const TimeGrid& grid,
                                       std::uint64_t seed) {
    if (n_channels < 1) throw Error("brownian_increments: need at least one channel");
    NoiseBundle out;
    out.seed = seed;
    out.grid = grid;
    out.increments.resize(n_channels);
    BrownianSource src(n_channels, grid, seed);
    for (std::size_t c = 0; c < n_channels; ++c) {
        out.increments[c].resize(grid.n_steps);
        for (std::size_t k = 0; k < grid.n_steps; ++k) out.increments[c][k] = src.increment(c, k);
    }
    return out;
}

// A fixed-step SDE system: drift/diffusion may depend on the step index (for
// piecewise-constant exogenous inputs sampled on the grid). diffusion() fills
// a channel-major (channels x dim) matrix. constrain() projects a state back
// to the admissible region and returns the number of adjusted components.
template <class S>
concept SdeSystemModel = requires(const S s, std::size_t step, double t, std::span<const double> x,
                                  std::span<double> out, std::span<double> xmut) {
    { s.dimension() } -> std::convertible_to<std::size_t>;
    { s.channels() } -> std::convertible_to<std::size_t>;
    s.drift(step, t, x, out);
    s.diffusion(step, t, x, out);
    { s.constrain(xmut) } -> std::convertible_to<int>;
};

// std::function-backed system for tests and one-off models.
class GenericSdeSystem {
public:
    using Field = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
    using Constraint = std::function<int(std::span<double> x)>;

    GenericSdeSystem(std::size_t dim, std::size_t n_channels, Field drift, Field diffusion,
                     Constraint constraint = nullptr)
        : dim_(dim), channels_(n_channels), drift_(std::move(drift)),
          diffusion_(std::move(diffusion)), constraint_(std::move(constraint)) {}

    std::size_t dimension() const { return dim_; }
    std::size_t channels() const { return channels_; }
    void drift(std::size_t, double t, std::span<const double> x, std::span<double> out) const {
        drift_(t, x, out);
    }
    void diffusion(std::size_t, double t, std::span<const double> x, std::span<double> out) const {
        diffusion_(t, x, out);
    }
    int constrain(std::span<double> x) const { return constraint_ ? constraint_(x) : 0; }

private:
    std::size_t dim_, channels_;
    Field drift_, diffusion_;
    Constraint constraint_;
};

// Positivity floor: Euler steps may cross zero even though the exact solution
// cannot. Exact zeros are preserved so that the I=0 boundary stays absorbing.
// Only sign violations count as clamp events; lifting a sub-floor positive
// value back to the floor is silent maintenance (an extinct component parks
// at the floor indefinitely).
inline constexpr double POSITIVITY_FLOOR = 1e-12;

inline int clamp_positive(double& v, double floor = POSITIVITY_FLOOR) {
    if (v == 0.0) return 0;
    if (v <= 0.0) {
        v = floor;
        return 1;
    }
    if (v < floor) v = floor;
    return 0;
}

struct SimPath {
    TimeGrid grid;
    std::size_t dim = 0;
    std::vector<double> states; // (n_steps+1) x dim, row-major
    std::size_t clamp_count = 0;
    std::size_t first_clamp_step = SIZE_MAX;

    std::span<const double> state(std::size_t k) const {
        return {states.data() + k * dim, dim};
    }
    double value(std::size_t k, std::size_t comp) const { return states[k * dim + comp]; }
    std::size_t n_points() const { return grid.n_steps + 1; }
};

namespace detail {

inline void check_finite(std::span<const double> x, std::size_t step) {
    for (double v : x)
        if (!std::isfinite(v)) throw NonFiniteState(step);
}

} // namespace detail

// One Euler-Maruyama step: constrain(x + drift*dt + sum_c diffusion_c * dW_c).
// `scratch` must hold dim*(channels+1) doubles.
template <SdeSystemModel S>
int euler_maruyama_step(const S& sys, std::size_t step, double t, double dt,
                        std::span<const double> dW, std::span<const double> x,
                        std::span<double> out, std::span<double> scratch) {
    const std::size_t dim = sys.dimension();
    const std::size_t nc = sys.channels();
    std::span<double> mu = scratch.subspan(0, dim);
    std::span<double> sig = scratch.subspan(dim, dim * nc);
    sys.drift(step, t, x, mu);
    sys.diffusion(step, t, x, sig);
    for (std::size_t i = 0; i < dim; ++i) {
        double v = x[i] + mu[i] * dt;
        for (std::size_t c = 0; c < nc; ++c) v += sig[c * dim + i] * dW[c];
        out[i] = v;
    }
    const int clamped = sys.constrain(out);
    detail::check_finite(out, step);
    return clamped;
}

// Convenience single-step entry point (allocates its own scratch).
template <SdeSystemModel S>
std::vector<double> euler_maruyama_step(const S& sys, std::span<const double> x, double t,
                                        double dt, std::span<const double> dW) {
    std::vector<double> out(sys.dimension());
    std::vector<double> scratch(sys.dimension() * (sys.channels() + 1));
    euler_maruyama_step(sys, 0, t, dt, dW, x, out, scratch);
    return out;
}

// Integrate and hand each grid point to `observe(step, t, state)`; step 0 is
// the initial condition. Returns total clamp count / first clamped step.
template <SdeSystemModel S, NoiseSource N, class Observer>
std::pair<std::size_t, std::size_t> simulate_reduce(const S& sys, std::span<const double> init,
                                                    const TimeGrid& grid, N&& noise,
                                                    Observer&& observe) {
    const std::size_t dim = sys.dimension();
    const std::size_t nc = sys.channels();
    if (init.size() != dim) throw Error("simulate: init dimension mismatch");
    if (noise.channels() < nc) throw Error("simulate: noise source has too few channels");

    std::vector<double> x(init.begin(), init.end());
    std::vector<double> next(dim);
    std::vector<double> scratch(dim * (nc + 1));
    std::vector<double> dW(nc);

    detail::check_finite(x, 0);
    observe(std::size_t{0}, grid.t0, std::span<const double>(x));

    std::size_t clamp_count = 0;
    std::size_t first_clamp = SIZE_MAX;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        for (std::size_t c = 0; c < nc; ++c) dW[c] = noise.increment(c, k);
        const int clamped =
            euler_maruyama_step(sys, k, grid.time(k), grid.dt, dW, x, next, scratch);
        if (clamped > 0) {
            clamp_count += static_cast<std::size_t>(clamped);
            if (first_clamp == SIZE_MAX) first_clamp = k + 1;
        }
        x.swap(next);
        observe(k + 1, grid.time(k + 1), std::span<const double>(x));
    }
    return {clamp_count, first_clamp};
}

template <SdeSystemModel S, NoiseSource N>
SimPath simulate_path(const S& sys, std::span<const double> init, const TimeGrid& grid,
                      N&& noise) {
    SimPath path;
    path.grid = grid;
    path.dim = sys.dimension();
    path.states.resize((grid.n_steps + 1) * path.dim);
    auto [clamps, first] = simulate_reduce(
        sys, init, grid, noise, [&](std::size_t k, double, std::span<const double> x) {
            std::copy(x.begin(), x.end(), path.states.begin() + k * path.dim);
        });
    path.clamp_count = clamps;
    path.first_clamp_step = first;
    return path;
}

template <SdeSystemModel S>
SimPath simulate_path(const S& sys, std::span<const double> init, const TimeGrid& grid,
                      std::uint64_t seed) {
    BrownianSource noise(sys.channels(), grid, seed);
    return simulate_path(sys, init, grid, noise);
}

} // namespace hidsir
