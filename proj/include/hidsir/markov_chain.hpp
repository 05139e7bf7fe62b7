#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hidsir/errors.hpp"
#include "hidsir/rng.hpp"
#include "hidsir/sde.hpp"

namespace hidsir {

// Finite-state signal chain on values m_1 < ... < m_n in [0,1] with generator
// Q (row sums zero) and observation map g_k = g(m_k).
struct ChainSpec {
    std::vector<double> states;           // m_k, strictly increasing, in [0,1]
    std::vector<std::vector<double>> generator; // Q, n x n
    std::vector<double> obs;              // g_k

    std::size_t size() const { return states.size(); }
    double rate(std::size_t i, std::size_t k) const { return generator[i][k]; }

    void validate() const {
        const std::size_t n = states.size();
        if (n < 1) throw Error("ChainSpec: empty state set");
        if (obs.size() != n) throw Error("ChainSpec: obs map size mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            if (!(states[k] >= 0.0 && states[k] <= 1.0))
                throw Error("ChainSpec: states must lie in [0,1]");
            if (k > 0 && !(states[k] > states[k - 1]))
                throw Error("ChainSpec: states must be strictly increasing");
        }
        if (generator.size() != n) throw Error("ChainSpec: generator must be n x n");
        for (std::size_t i = 0; i < n; ++i) {
            if (generator[i].size() != n) throw Error("ChainSpec: generator must be n x n");
            double row = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                row += generator[i][k];
                if (i != k && generator[i][k] < 0.0)
                    throw Error("ChainSpec: off-diagonal rates must be >= 0");
            }
            if (std::abs(row) > 1e-10 * std::max(1.0, -generator[i][i]))
                throw Error("ChainSpec: generator rows must sum to 0");
        }
    }

    // Strong connectivity of the positive off-diagonal rate graph.
    bool irreducible() const {
        const std::size_t n = size();
        if (n == 1) return -generator[0][0] == 0.0; // single absorbing state is its own class
        auto reach = [&](bool forward) {
            std::vector<char> seen(n, 0);
            std::vector<std::size_t> stack{0};
            seen[0] = 1;
            while (!stack.empty()) {
                const std::size_t i = stack.back();
                stack.pop_back();
                for (std::size_t k = 0; k < n; ++k) {
                    const double q = forward ? generator[i][k] : generator[k][i];
                    if (i != k && q > 0.0 && !seen[k]) {
                        seen[k] = 1;
                        stack.push_back(k);
                    }
                }
            }
            return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
        };
        return reach(true) && reach(false);
    }

    // Two-state helper used by the worked examples: Q = [[-q1,q1],[q2,-q2]].
    static ChainSpec two_state(double q1, double q2, std::vector<double> states,
                               std::vector<double> obs) {
        ChainSpec spec;
        spec.states = std::move(states);
        spec.obs = std::move(obs);
        spec.generator = {{-q1, q1}, {q2, -q2}};
        spec.validate();
        return spec;
    }
};

// mu* with mu*Q = 0, sum = 1; solved directly from the augmented system with
// the normalization row replacing one redundant balance equation.
inline std::vector<double> stationary_distribution(const ChainSpec& spec) {
    spec.validate();
    if (!spec.irreducible())
        throw ReducibleChain("stationary_distribution: positive-rate graph not strongly connected");
    const std::size_t n = spec.size();

    // A = Q^T with last row replaced by ones; b = (0,...,0,1).
    std::vector<std::vector<double>> A(n, std::vector<double>(n));
    std::vector<double> b(n, 0.0);
    for (std::size_t r = 0; r + 1 < n; ++r)
        for (std::size_t c = 0; c < n; ++c) A[r][c] = spec.generator[c][r];
    for (std::size_t c = 0; c < n; ++c) A[n - 1][c] = 1.0;
    b[n - 1] = 1.0;

    // Gaussian elimination with partial pivoting; n is small.
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (A[piv][col] == 0.0) throw ReducibleChain("stationary_distribution: singular system");
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> mu(n);
    for (std::size_t r = n; r-- > 0;) {
        double v = b[r];
        for (std::size_t c = r + 1; c < n; ++c) v -= A[r][c] * mu[c];
        mu[r] = v / A[r][r];
    }

    double resid = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += mu[i] * spec.generator[i][k];
        resid = std::max(resid, std::abs(dot));
    }
    if (resid >= 1e-12) throw Error("stationary_distribution: residual exceeds 1e-12");
    for (double v : mu)
        if (!(v > 0.0)) throw ReducibleChain("stationary_distribution: non-positive component");
    return mu;
}

// Piecewise-constant chain trajectory: state index i_j on [t_j, t_{j+1}).
struct ChainPath {
    std::vector<double> jump_times;   // starts at t0
    std::vector<std::size_t> indices; // one per segment

    std::size_t index_at(double t) const {
        // last segment with jump_time <= t
        auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
        const std::size_t seg = static_cast<std::size_t>(it - jump_times.begin());
        return indices[seg == 0 ? 0 : seg - 1];
    }

    // Left-endpoint sample on the grid (Ito convention): entry k is the state
    // index at t_k for k = 0..n_steps.
    std::vector<std::size_t> sample_on_grid(const TimeGrid& grid) const {
        std::vector<std::size_t> out(grid.n_steps + 1);
        std::size_t seg = 0;
        for (std::size_t k = 0; k <= grid.n_steps; ++k) {
            const double t = grid.time(k);
            while (seg + 1 < jump_times.size() && jump_times[seg + 1] <= t) ++seg;
            out[k] = indices[seg];
        }
        return out;
    }
};

// Exponential holding times with rate -q_ii, jump law proportional to the
// off-diagonal row. Deterministic in (spec, init, grid, seed).
inline ChainPath simulate_ctmc(const ChainSpec& spec, std::size_t init_index,
                               const TimeGrid& grid, std::uint64_t seed) {
    spec.validate();
    if (!spec.irreducible()) throw ReducibleChain("simulate_ctmc: reducible generator");
    if (init_index >= spec.size()) throw Error("simulate_ctmc: invalid initial index");

    const double t_end = grid.time(grid.n_steps);
    rng::Stream stream(seed, rng::CTMC_STREAM);
    std::uint64_t n = 0;

    ChainPath path;
    path.jump_times.push_back(grid.t0);
    path.indices.push_back(init_index);

    double t = grid.t0;
    std::size_t idx = init_index;
    while (true) {
        const double rate = -spec.generator[idx][idx];
        if (!(rate > 0.0)) break; // absorbing (cannot happen for irreducible n>1)
        t += -std::log(stream.uniform(n++)) / rate;
        if (t > t_end) break;
        // next state ~ off-diagonal weights
        double u = stream.uniform(n++) * rate;
        std::size_t next = idx;
        for (std::size_t k = 0; k < spec.size(); ++k) {
            if (k == idx) continue;
            u -= spec.generator[idx][k];
            if (u <= 0.0) {
                next = k;
                break;
            }
        }
        if (next == idx) { // numerical leftover; take last positive-rate target
            for (std::size_t k = spec.size(); k-- > 0;)
                if (k != idx && spec.generator[idx][k] > 0.0) {
                    next = k;
                    break;
                }
        }
        idx = next;
        path.jump_times.push_back(t);
        path.indices.push_back(idx);
    }
    return path;
}

// Observation increments dy_k = g(alpha(t_k)) dt + dW_k (left endpoints).
inline std::vector<double> observation_increments(const ChainPath& alpha, const ChainSpec& spec,
                                                  const TimeGrid& grid, const NoiseBundle& noise,
                                                  std::size_t channel = 0) {
    if (noise.channels() <= channel || noise.increments[channel].size() < grid.n_steps)
        throw Error("observation_increments: noise channel misaligned with grid");
    const auto idx = alpha.sample_on_grid(grid);
    std::vector<double> dy(grid.n_steps);
    for (std::size_t k = 0; k < grid.n_steps; ++k)
        dy[k] = spec.obs[idx[k]] * grid.dt + noise.increment(channel, k);
    return dy;
}

} // namespace hidsir
