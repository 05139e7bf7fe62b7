#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hidsir/config.hpp"
#include "hidsir/csv.hpp"
#include "hidsir/epidemic.hpp"
#include "hidsir/errors.hpp"
#include "hidsir/filter.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/rng.hpp"
#include "hidsir/sde.hpp"
#include "hidsir/threshold.hpp"
#include "hidsir/trajectory.hpp"
#include "hidsir/version.hpp"

namespace hidsir {

// Seed-level parallelism: bodies must be independent (no shared mutable
// state); results are collected per index so output order is deterministic.
template <class Fn>
void parallel_for(std::size_t n, Fn&& body, std::size_t max_threads = 0) {
    std::size_t hw = max_threads ? max_threads : std::thread::hardware_concurrency();
    if (hw <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    hw = std::min(hw, n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < hw; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += hw) body(i);
        });
    for (auto& t : pool) t.join();
}

// One co-simulated scenario: hidden truth, its observations, and the filtered
// system driven by the same Brownian motions and those observations.
struct Cosim {
    TimeGrid grid;
    std::vector<std::size_t> alpha_index; // state index at each grid point
    std::vector<double> y;                // cumulative observation path
    SimPath hidden;                       // (S, I)
    SimPath filtered;                     // (S, I, e_1..e_n)
};

namespace detail {

// Channel 2 carries the externally supplied observation increments.
class ObservationDrivenNoise {
public:
    ObservationDrivenNoise(std::size_t brownian_channels, const TimeGrid& grid,
                           std::uint64_t seed, std::span<const double> dy)
        : brownian_(brownian_channels, grid, seed), dy_(dy), n_brownian_(brownian_channels) {}

    double increment(std::size_t channel, std::size_t step) {
        return channel < n_brownian_ ? brownian_.increment(channel, step) : dy_[step];
    }
    std::size_t channels() const { return n_brownian_ + 1; }

private:
    BrownianSource brownian_;
    std::span<const double> dy_;
    std::size_t n_brownian_;
};

inline std::size_t draw_alpha_index(const ExperimentConfig& cfg, std::uint64_t seed,
                                    const std::vector<double>& mu) {
    if (cfg.init_alpha) return *cfg.init_alpha;
    const double u = rng::Stream(seed, rng::INIT_STREAM).uniform(0);
    double cum = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        cum += mu[k];
        if (u <= cum) return k;
    }
    return mu.size() - 1;
}

inline std::vector<double> filter_init(const ExperimentConfig& cfg,
                                       const std::vector<double>& mu) {
    return cfg.init_filter ? *cfg.init_filter : mu;
}

} // namespace detail

inline Cosim run_cosim(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TimeGrid grid = cfg.grid();
    const auto mu = stationary_distribution(cfg.chain);

    Cosim out;
    out.grid = grid;

    const auto alpha = simulate_ctmc(cfg.chain, detail::draw_alpha_index(cfg, seed, mu), grid,
                                     seed);
    out.alpha_index = alpha.sample_on_grid(grid);

    // Observation increments dy = g(alpha) dt + dW, W on channel 2.
    const double sqrt_dt = std::sqrt(grid.dt);
    rng::NormalSequence wseq{rng::Stream(seed, 2)};
    std::vector<double> dy(grid.n_steps);
    for (std::size_t k = 0; k < grid.n_steps; ++k)
        dy[k] = cfg.chain.obs[out.alpha_index[k]] * grid.dt + wseq(k) * sqrt_dt;
    out.y.resize(grid.n_steps + 1);
    out.y[0] = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) out.y[k + 1] = out.y[k] + dy[k];

    std::vector<double> alpha_values(out.alpha_index.size());
    for (std::size_t k = 0; k < out.alpha_index.size(); ++k)
        alpha_values[k] = cfg.chain.states[out.alpha_index[k]];

    const HiddenSystem hidden(cfg.params, cfg.incidence, std::move(alpha_values),
                              cfg.positivity_floor);
    const double init_si[2] = {cfg.init_s, cfg.init_i};
    {
        BrownianSource noise(2, grid, seed);
        out.hidden = simulate_path(hidden, std::span<const double>(init_si, 2), grid, noise);
    }

    const FilteredSystem filtered(cfg.params, cfg.incidence, cfg.chain,
                                  FilteredSystem::Driver::Observation, cfg.positivity_floor);
    std::vector<double> init_f = {cfg.init_s, cfg.init_i};
    for (double w : detail::filter_init(cfg, mu)) init_f.push_back(w);
    detail::ObservationDrivenNoise noise(2, grid, seed, dy);
    out.filtered = simulate_path(filtered, init_f, grid, noise);
    return out;
}

// Standalone filtered system driven by a self-generated innovation Brownian
// motion on channel 2; the reported y is reconstructed as dy = gbar dt + dWbar.
inline Cosim run_innovation(const ExperimentConfig& cfg, std::uint64_t seed) {
    const TimeGrid grid = cfg.grid();
    const auto mu = stationary_distribution(cfg.chain);

    Cosim out;
    out.grid = grid;

    const FilteredSystem filtered(cfg.params, cfg.incidence, cfg.chain,
                                  FilteredSystem::Driver::Innovation, cfg.positivity_floor);
    std::vector<double> init_f = {cfg.init_s, cfg.init_i};
    for (double w : detail::filter_init(cfg, mu)) init_f.push_back(w);
    BrownianSource noise(3, grid, seed);
    out.filtered = simulate_path(filtered, init_f, grid, noise);

    out.y.resize(grid.n_steps + 1);
    out.y[0] = 0.0;
    const double sqrt_dt = std::sqrt(grid.dt);
    rng::NormalSequence wseq{rng::Stream(seed, 2)};
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double gb = gbar(out.filtered.state(k).subspan(2), cfg.chain);
        out.y[k + 1] = out.y[k] + gb * grid.dt + wseq(k) * sqrt_dt;
    }
    return out;
}

inline SimPath run_predicted(const ExperimentConfig& cfg, std::size_t state_index,
                             std::uint64_t seed) {
    const TimeGrid grid = cfg.grid();
    const PredictedSystem sys(cfg.params, cfg.incidence, cfg.chain.states.at(state_index),
                              cfg.positivity_floor);
    const double init_si[2] = {cfg.init_s, cfg.init_i};
    BrownianSource noise(2, grid, seed);
    return simulate_path(sys, std::span<const double>(init_si, 2), grid, noise);
}

namespace detail {

inline void provenance(CsvWriter& w, const ExperimentConfig& cfg, std::uint64_t seed) {
    w.comment("config=" + cfg.config_hash + " seed=" + std::to_string(seed) + " tool=hidden-sir " +
              std::string(VERSION));
}

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline void write_path_csv(const ExperimentConfig& cfg, const std::string& name,
                           std::uint64_t seed, const SimPath& path,
                           std::span<const std::string> columns,
                           const std::function<void(std::size_t, std::vector<double>&)>& fill) {
    CsvWriter w(out_path(cfg, name));
    provenance(w, cfg, seed);
    w.header(columns);
    std::vector<double> row(columns.size());
    const std::size_t n = path.n_points();
    for (std::size_t k = 0; k < n; ++k) {
        if (k % cfg.output_stride != 0 && k != n - 1) continue;
        row[0] = path.grid.time(k);
        fill(k, row);
        w.row(row);
    }
}

} // namespace detail

inline void write_hidden_csv(const ExperimentConfig& cfg, std::uint64_t seed, const Cosim& cs) {
    std::vector<std::string> cols = {"t", "S", "I", "alpha", "y"};
    detail::write_path_csv(cfg, "paths_hidden_" + std::to_string(seed) + ".csv", seed, cs.hidden,
                           cols, [&](std::size_t k, std::vector<double>& row) {
                               row[1] = cs.hidden.value(k, 0);
                               row[2] = cs.hidden.value(k, 1);
                               row[3] = cfg.chain.states[cs.alpha_index[k]];
                               row[4] = cs.y[k];
                           });
}

inline void write_filtered_csv(const ExperimentConfig& cfg, std::uint64_t seed, const Cosim& cs) {
    std::vector<std::string> cols = {"t", "S", "I"};
    for (std::size_t k = 1; k <= cfg.chain.size(); ++k) cols.push_back("e_" + std::to_string(k));
    cols.push_back("y");
    detail::write_path_csv(cfg, "paths_filtered_" + std::to_string(seed) + ".csv", seed,
                           cs.filtered, cols, [&](std::size_t k, std::vector<double>& row) {
                               for (std::size_t c = 0; c < cs.filtered.dim; ++c)
                                   row[1 + c] = cs.filtered.value(k, c);
                               row.back() = cs.y[k];
                           });
}

inline void write_predicted_csv(const ExperimentConfig& cfg, std::size_t state_index,
                                std::uint64_t seed, const SimPath& path) {
    std::vector<std::string> cols = {"t", "S", "I"};
    detail::write_path_csv(cfg,
                           "paths_predicted" + std::to_string(state_index) + "_" +
                               std::to_string(seed) + ".csv",
                           seed, path, cols, [&](std::size_t k, std::vector<double>& row) {
                               row[1] = path.value(k, 0);
                               row[2] = path.value(k, 1);
                           });
}

inline void run_simulate(const ExperimentConfig& cfg) {
    for (std::size_t i = 0; i < cfg.seed_count; ++i) {
        const std::uint64_t seed = rng::path_seed(cfg.base_seed, i);
        if (cfg.cosim_observation) {
            const Cosim cs = run_cosim(cfg, seed);
            write_hidden_csv(cfg, seed, cs);
            write_filtered_csv(cfg, seed, cs);
        } else {
            const Cosim cs = run_innovation(cfg, seed);
            write_filtered_csv(cfg, seed, cs);
        }
        for (std::size_t k : cfg.predicted_states)
            write_predicted_csv(cfg, k, seed, run_predicted(cfg, k, seed));
    }
}

inline void write_threshold_report(const ExperimentConfig& cfg, const ThresholdReport& rep,
                                   std::ostream& echo) {
    const std::string path = detail::out_path(cfg, "threshold.txt");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path);
    auto kv = [&](const std::string& k, const std::string& v) {
        out << k << "=" << v << "\n";
        echo << k << "=" << v << "\n";
    };
    kv("tool_version", VERSION);
    kv("config_hash", cfg.config_hash);
    kv("lambda", format_double(rep.lambda));
    kv("quadrature_error", format_double(rep.quadrature_error));
    kv("classification_tol", format_double(rep.classification_tol));
    kv("minus_c2", format_double(rep.minus_c2));
    kv("f_term", format_double(rep.f_term));
    kv("h_term", format_double(rep.h_term));
    kv("n_states", std::to_string(rep.states.size()));
    for (std::size_t k = 0; k < rep.states.size(); ++k) {
        const auto& st = rep.states[k];
        const std::string sfx = "_" + std::to_string(k);
        kv("m" + sfx, format_double(st.m));
        kv("mu" + sfx, format_double(st.mu));
        kv("F" + sfx, format_double(st.f_integral));
        kv("H" + sfx, format_double(st.h_integral));
        kv("lambda_pre" + sfx, format_double(st.lambda_pre));
        kv("classification" + sfx, to_string(st.label));
    }
}

inline ThresholdReport run_threshold(const ExperimentConfig& cfg, std::ostream& echo) {
    const ThresholdReport rep = lambda_discrete(cfg.params, cfg.incidence, cfg.chain);
    write_threshold_report(cfg, rep, echo);
    return rep;
}

// Per-system pooled verdict statistics for the compare experiment.
struct SystemSummary {
    std::string name;
    double lambda = 0.0; // exact threshold (hidden/filtered) or lambda_pre
    std::size_t seeds_used = 0;
    std::size_t extinct_seeds = 0; // paths that reached the positivity floor
    double slope_mean = 0.0;
    double slope_se = 0.0;
    double i_mean = 0.0;     // pooled mean of per-seed last-half averages
    double i_mean_min = 0.0; // worst seed
    VerdictRecord verdict;
    std::optional<Classification> label; // predicted systems only
};

namespace detail {

struct SeedStats {
    std::optional<double> slope;
    bool extinct = false;
    double i_mean_last_half = 0.0;
};

inline SeedStats seed_stats(const ExperimentConfig& cfg, const SimPath& path) {
    SeedStats st;
    try {
        const auto est = lyapunov_slope(path, cfg.burn_in(), 1, cfg.positivity_floor);
        st.slope = est.slope;
        st.extinct = est.truncated;
    } catch (const InsufficientData&) {
        st.slope = std::nullopt; // extinct almost immediately; no usable window
        st.extinct = true;
    }
    st.i_mean_last_half = permanence_means(path, 0.5 * cfg.horizon).second;
    return st;
}

inline SystemSummary pool(const ExperimentConfig& cfg, std::string name, double lambda,
                          const std::vector<SeedStats>& stats) {
    SystemSummary s;
    s.name = std::move(name);
    s.lambda = lambda;
    std::vector<double> slopes, imeans;
    for (const auto& st : stats) {
        if (st.slope) slopes.push_back(*st.slope);
        imeans.push_back(st.i_mean_last_half);
        s.extinct_seeds += st.extinct;
    }
    s.seeds_used = slopes.size();
    if (!slopes.empty()) {
        s.slope_mean = pairwise_sum(slopes) / static_cast<double>(slopes.size());
        if (slopes.size() > 1) {
            double var = 0.0;
            for (double v : slopes) var += (v - s.slope_mean) * (v - s.slope_mean);
            var /= static_cast<double>(slopes.size() - 1);
            s.slope_se = std::sqrt(var / static_cast<double>(slopes.size()));
        }
    }
    s.i_mean = pairwise_sum(imeans) / static_cast<double>(imeans.size());
    s.i_mean_min = *std::min_element(imeans.begin(), imeans.end());
    LyapunovEstimate pooled;
    pooled.slope = s.slope_mean;
    pooled.stderr_ = s.slope_se;
    s.verdict = extinction_verdict(pooled, s.i_mean, lambda, cfg.analysis.permanence_floor);
    return s;
}

} // namespace detail

inline std::vector<SystemSummary> run_compare(const ExperimentConfig& cfg, std::ostream& echo) {
    const ThresholdReport rep = lambda_discrete(cfg.params, cfg.incidence, cfg.chain);

    const std::size_t n_pred = cfg.predicted_states.size();
    std::vector<detail::SeedStats> hidden_stats(cfg.seed_count), filtered_stats(cfg.seed_count);
    std::vector<std::vector<detail::SeedStats>> pred_stats(n_pred);
    for (auto& v : pred_stats) v.resize(cfg.seed_count);

    parallel_for(cfg.seed_count, [&](std::size_t i) {
        const std::uint64_t seed = rng::path_seed(cfg.base_seed, i);
        const Cosim cs = run_cosim(cfg, seed);
        hidden_stats[i] = detail::seed_stats(cfg, cs.hidden);
        filtered_stats[i] = detail::seed_stats(cfg, cs.filtered);
        for (std::size_t p = 0; p < n_pred; ++p)
            pred_stats[p][i] =
                detail::seed_stats(cfg, run_predicted(cfg, cfg.predicted_states[p], seed));
    });

    std::vector<SystemSummary> out;
    out.push_back(detail::pool(cfg, "hidden", rep.lambda, hidden_stats));
    out.push_back(detail::pool(cfg, "filtered", rep.lambda, filtered_stats));
    for (std::size_t p = 0; p < n_pred; ++p) {
        const std::size_t k = cfg.predicted_states[p];
        SystemSummary s = detail::pool(cfg, "predicted" + std::to_string(k),
                                       rep.states[k].lambda_pre, pred_stats[p]);
        s.label = rep.states[k].label;
        out.push_back(s);
    }

    CsvWriter w(detail::out_path(cfg, "verdicts.csv"));
    detail::provenance(w, cfg, cfg.base_seed);
    w.header({"system", "lambda", "slope", "slope_stderr", "i_mean", "i_mean_min", "seeds_used",
              "extinct_seeds", "verdict", "classification"});
    for (const auto& s : out) {
        std::string line = s.name;
        for (double v : {s.lambda, s.slope_mean, s.slope_se, s.i_mean, s.i_mean_min,
                         static_cast<double>(s.seeds_used),
                         static_cast<double>(s.extinct_seeds)})
            line += "," + format_double(v);
        line += std::string(",") + to_string(s.verdict.verdict);
        line += std::string(",") + (s.label ? to_string(*s.label) : "-");
        w.raw_line(line);
        echo << line << "\n";
    }
    return out;
}

inline void run_sweep(const ExperimentConfig& cfg, std::ostream& echo) {
    if (!cfg.sweep) throw ConfigError("sweep: section required for the sweep experiment");
    const SweepSpec& sw = *cfg.sweep;

    CsvWriter w(detail::out_path(cfg, "sweep.csv"));
    detail::provenance(w, cfg, cfg.base_seed);
    w.header({"param", "value", "lambda", "minus_c2", "f_term", "h_term", "quadrature_error",
              "lambda_pre_low", "lambda_pre_high"});
    for (std::size_t s = 0; s < sw.steps; ++s) {
        const double v = sw.from + (sw.to - sw.from) * static_cast<double>(s) /
                                       static_cast<double>(sw.steps - 1);
        EpidemicParams p = cfg.params;
        if (sw.param == "a1")
            p.a1 = v;
        else if (sw.param == "b1")
            p.b1 = v;
        else if (sw.param == "b2")
            p.b2 = v;
        else if (sw.param == "sigma1")
            p.sigma1 = v;
        else
            p.sigma2 = v;
        p.validate();
        const ThresholdReport rep = lambda_discrete(p, cfg.incidence, cfg.chain);
        w.row(sw.param, std::vector<double>{v, rep.lambda, rep.minus_c2, rep.f_term, rep.h_term,
                                            rep.quadrature_error, rep.states.front().lambda_pre,
                                            rep.states.back().lambda_pre});
        echo << sw.param << "=" << format_double(v) << " lambda=" << format_double(rep.lambda)
             << "\n";
    }
}

namespace detail {

inline OccupationHistogram pooled_histogram(const ExperimentConfig& cfg,
                                            std::span<const SimPath> paths) {
    GridSpec2D grid;
    grid.n_s = cfg.analysis.bins_s;
    grid.n_i = cfg.analysis.bins_i;
    double s_max = 0.0, i_max = 0.0;
    for (const auto& p : paths)
        for (std::size_t k = 0; k < p.n_points(); ++k) {
            s_max = std::max(s_max, p.value(k, 0));
            i_max = std::max(i_max, p.value(k, 1));
        }
    grid.s_hi = cfg.analysis.s_max.value_or(s_max * 1.0000001);
    grid.i_hi = cfg.analysis.i_max.value_or(std::max(i_max * 1.0000001, 1e-9));
    return occupation_histogram(paths, grid, cfg.burn_in());
}

inline void write_density_csv(const ExperimentConfig& cfg, const std::string& name,
                              const OccupationHistogram& h) {
    CsvWriter w(out_path(cfg, name));
    provenance(w, cfg, cfg.base_seed);
    w.comment("bin centers; ds=" + format_double(h.ds()) + " di=" + format_double(h.di()));
    w.header({"S_bin", "I_bin", "density"});
    for (std::size_t bs = 0; bs < h.grid.n_s; ++bs)
        for (std::size_t bi = 0; bi < h.grid.n_i; ++bi)
            w.row({h.s_center(bs), h.i_center(bi), h.at(bs, bi)});
}

} // namespace detail

// density.csv holds the hidden-system occupation density; each configured
// prediction system gets its own density_predicted<k>.csv alongside.
inline OccupationHistogram run_density(const ExperimentConfig& cfg) {
    std::vector<SimPath> paths(cfg.seed_count);
    parallel_for(cfg.seed_count, [&](std::size_t i) {
        paths[i] = run_cosim(cfg, rng::path_seed(cfg.base_seed, i)).hidden;
    });
    const OccupationHistogram h = detail::pooled_histogram(cfg, paths);
    detail::write_density_csv(cfg, "density.csv", h);

    for (std::size_t k : cfg.predicted_states) {
        parallel_for(cfg.seed_count, [&](std::size_t i) {
            paths[i] = run_predicted(cfg, k, rng::path_seed(cfg.base_seed, i));
        });
        detail::write_density_csv(cfg, "density_predicted" + std::to_string(k) + ".csv",
                                  detail::pooled_histogram(cfg, paths));
    }
    return h;
}

// Dispatch; returns the process exit code contract (0 ok; ConfigError -> 2
// and numerical failures -> 3 are mapped by the caller).
inline void run_experiment(const ExperimentConfig& cfg, std::ostream& echo) {
    switch (cfg.kind) {
    case ExperimentKind::Simulate:
        run_simulate(cfg);
        break;
    case ExperimentKind::Threshold:
        run_threshold(cfg, echo);
        break;
    case ExperimentKind::Compare:
        run_compare(cfg, echo);
        break;
    case ExperimentKind::Sweep:
        run_sweep(cfg, echo);
        break;
    case ExperimentKind::Density:
        run_density(cfg);
        break;
    }
}

} // namespace hidsir
