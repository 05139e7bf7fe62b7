#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hidsir/csv.hpp"
#include "hidsir/epidemic.hpp"
#include "hidsir/errors.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/sde.hpp"

namespace hidsir {

enum class ExperimentKind { Simulate, Threshold, Compare, Sweep, Density };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::Simulate:
        return "simulate";
    case ExperimentKind::Threshold:
        return "threshold";
    case ExperimentKind::Compare:
        return "compare";
    case ExperimentKind::Sweep:
        return "sweep";
    default:
        return "density";
    }
}

struct SweepSpec {
    std::string param; // one of a1, b1, b2, sigma1, sigma2
    double from = 0.0;
    double to = 0.0;
    std::size_t steps = 2;
};

struct AnalysisSpec {
    double burn_in_fraction = 0.10;
    double permanence_floor = 0.01; // pilot-recorded, see presets
    std::size_t bins_s = 60;
    std::size_t bins_i = 60;
    std::optional<double> s_max;
    std::optional<double> i_max;
    double moment_p = 0.5;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Simulate;
    EpidemicParams params;
    ChainSpec chain;
    IncidenceModel incidence = IncidenceModel::bilinear(0.0);

    double t0 = 0.0;
    double dt = 1e-3;
    double horizon = 100.0;

    std::size_t seed_count = 8;
    std::uint64_t base_seed = 84628114;

    double init_s = 0.5;
    double init_i = 0.1;
    std::optional<std::vector<double>> init_filter; // empty => stationary
    std::optional<std::size_t> init_alpha;          // empty => stationary draw

    bool cosim_observation = true; // false => self-generated innovation
    std::vector<std::size_t> predicted_states;

    AnalysisSpec analysis;
    std::optional<SweepSpec> sweep;

    std::size_t output_stride = 100;
    double positivity_floor = POSITIVITY_FLOOR;

    std::string out_dir = "out";
    std::string config_hash; // FNV-1a of the canonical document

    TimeGrid grid() const { return TimeGrid::over(t0, horizon, dt); }
    double burn_in() const { return analysis.burn_in_fraction * horizon; }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(path + ": unknown key '" + it.key() + "'");
    }
}

inline double require_number(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) throw ConfigError(path + "." + key + ": missing");
    if (!obj[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return obj[key].get<double>();
}

inline double number_or(const json& obj, const std::string& path, const char* key,
                        double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return obj[key].get<double>();
}

inline std::vector<double> require_vector(const json& obj, const std::string& path,
                                          const char* key) {
    if (!obj.contains(key) || !obj[key].is_array())
        throw ConfigError(path + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : obj[key]) {
        if (!v.is_number()) throw ConfigError(path + "." + key + ": expected numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline EpidemicParams parse_params(const json& j) {
    reject_unknown_keys(j, "params", {"a1", "b1", "b2", "sigma1", "sigma2"});
    EpidemicParams p;
    p.a1 = require_number(j, "params", "a1");
    p.b1 = require_number(j, "params", "b1");
    p.b2 = require_number(j, "params", "b2");
    p.sigma1 = require_number(j, "params", "sigma1");
    p.sigma2 = require_number(j, "params", "sigma2");
    if (!(p.a1 > 0.0)) throw ConfigError("params.a1: must be positive");
    if (!(p.b1 > 0.0)) throw ConfigError("params.b1: must be positive");
    if (!(p.b2 > 0.0)) throw ConfigError("params.b2: must be positive");
    if (p.sigma1 == 0.0) throw ConfigError("params.sigma1: must be nonzero");
    if (p.sigma2 == 0.0) throw ConfigError("params.sigma2: must be nonzero");
    return p;
}

inline ChainSpec parse_chain(const json& j) {
    reject_unknown_keys(j, "chain", {"states", "generator", "obs"});
    ChainSpec spec;
    spec.states = require_vector(j, "chain", "states");
    spec.obs = require_vector(j, "chain", "obs");
    if (!j.contains("generator") || !j["generator"].is_array())
        throw ConfigError("chain.generator: expected a square matrix");
    for (const auto& row : j["generator"]) {
        if (!row.is_array()) throw ConfigError("chain.generator: expected a square matrix");
        std::vector<double> r;
        for (const auto& v : row) {
            if (!v.is_number()) throw ConfigError("chain.generator: expected numbers");
            r.push_back(v.get<double>());
        }
        spec.generator.push_back(std::move(r));
    }
    try {
        spec.validate();
        if (!spec.irreducible())
            throw ConfigError("chain.generator: not irreducible");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("chain: ") + e.what());
    }
    return spec;
}

inline IncidenceModel parse_incidence(const json& j, const ChainSpec& chain) {
    reject_unknown_keys(j, "incidence",
                        {"family", "m1", "m2", "beta", "beta_table", "gamma_table"});
    if (!j.contains("family") || !j["family"].is_string())
        throw ConfigError("incidence.family: missing");
    const std::string fam = j["family"].get<std::string>();
    try {
        if (fam == "tabulated") {
            auto m1 = require_vector(j, "incidence", "m1");
            auto m2 = require_vector(j, "incidence", "m2");
            if (m1.size() != chain.size() || m2.size() != chain.size())
                throw ConfigError("incidence.m1/m2: one entry per chain state required");
            return IncidenceModel::tabulated(chain.states, std::move(m1), std::move(m2));
        }
        IncidenceModel model = IncidenceModel::bilinear(0.0);
        if (fam == "bilinear")
            model = IncidenceModel::bilinear(require_number(j, "incidence", "beta"));
        else if (fam == "holling2")
            model = IncidenceModel::holling2(require_number(j, "incidence", "beta"),
                                             require_number(j, "incidence", "m1"));
        else if (fam == "beddington")
            model = IncidenceModel::beddington(require_number(j, "incidence", "beta"),
                                               require_number(j, "incidence", "m1"),
                                               require_number(j, "incidence", "m2"));
        else
            throw ConfigError("incidence.family: unknown family '" + fam + "'");
        if (j.contains("beta_table")) {
            auto bt = require_vector(j, "incidence", "beta_table");
            std::vector<double> gt(bt.size(), 0.0);
            if (j.contains("gamma_table")) gt = require_vector(j, "incidence", "gamma_table");
            if (bt.size() != chain.size() || gt.size() != chain.size())
                throw ConfigError("incidence.beta_table: one entry per chain state required");
            model.with_tables(chain.states, std::move(bt), std::move(gt));
        }
        return model;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("incidence: ") + e.what());
    }
}

} // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    using detail::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: not a valid JSON document: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::reject_unknown_keys(j, "config",
                                {"kind", "params", "chain", "incidence", "grid", "seeds", "init",
                                 "mode", "analysis", "sweep", "output", "positivity_floor"});

    ExperimentConfig cfg;
    if (j.contains("kind")) {
        const std::string k = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
        if (k == "simulate")
            cfg.kind = ExperimentKind::Simulate;
        else if (k == "threshold")
            cfg.kind = ExperimentKind::Threshold;
        else if (k == "compare")
            cfg.kind = ExperimentKind::Compare;
        else if (k == "sweep")
            cfg.kind = ExperimentKind::Sweep;
        else if (k == "density")
            cfg.kind = ExperimentKind::Density;
        else
            throw ConfigError("kind: expected simulate|threshold|compare|sweep|density");
    }

    if (!j.contains("params")) throw ConfigError("params: missing");
    cfg.params = detail::parse_params(j["params"]);
    if (!j.contains("chain")) throw ConfigError("chain: missing");
    cfg.chain = detail::parse_chain(j["chain"]);
    if (!j.contains("incidence")) throw ConfigError("incidence: missing");
    cfg.incidence = detail::parse_incidence(j["incidence"], cfg.chain);

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        detail::reject_unknown_keys(g, "grid", {"t0", "dt", "horizon"});
        cfg.t0 = detail::number_or(g, "grid", "t0", cfg.t0);
        cfg.dt = detail::number_or(g, "grid", "dt", cfg.dt);
        cfg.horizon = detail::number_or(g, "grid", "horizon", cfg.horizon);
        if (!(cfg.dt > 0.0)) throw ConfigError("grid.dt: must be positive");
        if (!(cfg.horizon > 0.0)) throw ConfigError("grid.horizon: must be positive");
        if (!(cfg.t0 >= 0.0)) throw ConfigError("grid.t0: must be nonnegative");
    }

    if (j.contains("seeds")) {
        const auto& s = j["seeds"];
        detail::reject_unknown_keys(s, "seeds", {"count", "base"});
        const double c = detail::number_or(s, "seeds", "count",
                                           static_cast<double>(cfg.seed_count));
        if (!(c >= 1.0)) throw ConfigError("seeds.count: must be >= 1");
        cfg.seed_count = static_cast<std::size_t>(c);
        cfg.base_seed = static_cast<std::uint64_t>(
            detail::number_or(s, "seeds", "base", static_cast<double>(cfg.base_seed)));
    }

    if (j.contains("init")) {
        const auto& ini = j["init"];
        detail::reject_unknown_keys(ini, "init", {"s", "i", "filter", "alpha"});
        cfg.init_s = detail::number_or(ini, "init", "s", cfg.init_s);
        cfg.init_i = detail::number_or(ini, "init", "i", cfg.init_i);
        if (cfg.init_s < 0.0) throw ConfigError("init.s: must be nonnegative");
        if (cfg.init_i < 0.0) throw ConfigError("init.i: must be nonnegative");
        if (ini.contains("filter")) {
            if (ini["filter"].is_string()) {
                if (ini["filter"].get<std::string>() != "stationary")
                    throw ConfigError("init.filter: expected \"stationary\" or a weight array");
            } else {
                auto w = detail::require_vector(ini, "init", "filter");
                if (w.size() != cfg.chain.size())
                    throw ConfigError("init.filter: one weight per chain state required");
                cfg.init_filter = project_simplex(std::move(w));
            }
        }
        if (ini.contains("alpha")) {
            if (ini["alpha"].is_string()) {
                if (ini["alpha"].get<std::string>() != "stationary")
                    throw ConfigError("init.alpha: expected \"stationary\" or a state index");
            } else {
                const double a = detail::require_number(ini, "init", "alpha");
                if (a < 0.0 || a >= static_cast<double>(cfg.chain.size()))
                    throw ConfigError("init.alpha: state index out of range");
                cfg.init_alpha = static_cast<std::size_t>(a);
            }
        }
    }

    if (j.contains("mode")) {
        const auto& m = j["mode"];
        detail::reject_unknown_keys(m, "mode", {"observation", "predicted_states"});
        if (m.contains("observation")) {
            const std::string o =
                m["observation"].is_string() ? m["observation"].get<std::string>() : "";
            if (o == "cosim")
                cfg.cosim_observation = true;
            else if (o == "innovation")
                cfg.cosim_observation = false;
            else
                throw ConfigError("mode.observation: expected cosim|innovation");
        }
        if (m.contains("predicted_states")) {
            for (const double v : detail::require_vector(m, "mode", "predicted_states")) {
                if (v < 0.0 || v >= static_cast<double>(cfg.chain.size()))
                    throw ConfigError("mode.predicted_states: state index out of range");
                cfg.predicted_states.push_back(static_cast<std::size_t>(v));
            }
        }
    } else {
        cfg.predicted_states = {0, cfg.chain.size() - 1};
    }

    if (j.contains("analysis")) {
        const auto& a = j["analysis"];
        detail::reject_unknown_keys(a, "analysis",
                                    {"burn_in_fraction", "permanence_floor", "bins_s", "bins_i",
                                     "s_max", "i_max", "moment_p"});
        cfg.analysis.burn_in_fraction =
            detail::number_or(a, "analysis", "burn_in_fraction", cfg.analysis.burn_in_fraction);
        if (cfg.analysis.burn_in_fraction < 0.0 || cfg.analysis.burn_in_fraction >= 1.0)
            throw ConfigError("analysis.burn_in_fraction: must lie in [0,1)");
        cfg.analysis.permanence_floor =
            detail::number_or(a, "analysis", "permanence_floor", cfg.analysis.permanence_floor);
        cfg.analysis.bins_s = static_cast<std::size_t>(
            detail::number_or(a, "analysis", "bins_s", static_cast<double>(cfg.analysis.bins_s)));
        cfg.analysis.bins_i = static_cast<std::size_t>(
            detail::number_or(a, "analysis", "bins_i", static_cast<double>(cfg.analysis.bins_i)));
        if (a.contains("s_max")) cfg.analysis.s_max = detail::require_number(a, "analysis", "s_max");
        if (a.contains("i_max")) cfg.analysis.i_max = detail::require_number(a, "analysis", "i_max");
        cfg.analysis.moment_p =
            detail::number_or(a, "analysis", "moment_p", cfg.analysis.moment_p);
    }

    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        detail::reject_unknown_keys(s, "sweep", {"param", "from", "to", "steps"});
        SweepSpec sw;
        if (!s.contains("param") || !s["param"].is_string())
            throw ConfigError("sweep.param: missing");
        sw.param = s["param"].get<std::string>();
        static const char* allowed[] = {"a1", "b1", "b2", "sigma1", "sigma2"};
        bool ok = false;
        for (const char* p : allowed) ok = ok || sw.param == p;
        if (!ok) throw ConfigError("sweep.param: expected one of a1,b1,b2,sigma1,sigma2");
        sw.from = detail::require_number(s, "sweep", "from");
        sw.to = detail::require_number(s, "sweep", "to");
        const double st = detail::number_or(s, "sweep", "steps", 2.0);
        if (!(st >= 2.0)) throw ConfigError("sweep.steps: must be >= 2");
        sw.steps = static_cast<std::size_t>(st);
        cfg.sweep = sw;
    }

    if (j.contains("output")) {
        const auto& o = j["output"];
        detail::reject_unknown_keys(o, "output", {"stride"});
        const double st = detail::number_or(o, "output", "stride",
                                            static_cast<double>(cfg.output_stride));
        if (!(st >= 1.0)) throw ConfigError("output.stride: must be >= 1");
        cfg.output_stride = static_cast<std::size_t>(st);
    }

    cfg.positivity_floor =
        detail::number_or(j, "config", "positivity_floor", cfg.positivity_floor);
    if (!(cfg.positivity_floor > 0.0))
        throw ConfigError("positivity_floor: must be positive");

    cfg.config_hash = hash_hex(fnv1a(j.dump()));
    return cfg;
}

// Built-in parameter sets for the two worked examples.
inline const char* preset_text(const std::string& name) {
    // a1=0.5 b1=1 sigma1=1 b2=2 sigma2=0.5; m1=(0.1,4), m2(1)=0.1; q1=5, q2=25
    static const char* example1 = R"json({
  "params":    {"a1": 0.5, "b1": 1.0, "b2": 2.0, "sigma1": 1.0, "sigma2": 0.5},
  "chain":     {"states": [0.0, 1.0], "generator": [[-5.0, 5.0], [25.0, -25.0]], "obs": [0.0, 1.0]},
  "incidence": {"family": "tabulated", "m1": [0.1, 4.0], "m2": [0.0, 0.1]},
  "grid":      {"t0": 0.0, "dt": 0.001, "horizon": 100.0},
  "seeds":     {"count": 8, "base": 84628114},
  "init":      {"s": 0.5, "i": 0.1},
  "mode":      {"observation": "cosim", "predicted_states": [0, 1]},
  "analysis":  {"burn_in_fraction": 0.1, "permanence_floor": 0.01, "bins_s": 60, "bins_i": 60},
  "sweep":     {"param": "b2", "from": 0.1, "to": 20.0, "steps": 25},
  "output":    {"stride": 100}
})json";
    // a1=10 b1=1 sigma1=1 b2=3 sigma2=1; m1=(0.1,2), m2(1)=0.1; q1=10, q2=1
    static const char* example2 = R"json({
  "params":    {"a1": 10.0, "b1": 1.0, "b2": 3.0, "sigma1": 1.0, "sigma2": 1.0},
  "chain":     {"states": [0.0, 1.0], "generator": [[-10.0, 10.0], [1.0, -1.0]], "obs": [0.0, 1.0]},
  "incidence": {"family": "tabulated", "m1": [0.1, 2.0], "m2": [0.0, 0.1]},
  "grid":      {"t0": 0.0, "dt": 0.001, "horizon": 100.0},
  "seeds":     {"count": 8, "base": 84628114},
  "init":      {"s": 10.0, "i": 0.1},
  "mode":      {"observation": "cosim", "predicted_states": [0, 1]},
  "analysis":  {"burn_in_fraction": 0.1, "permanence_floor": 0.01, "bins_s": 60, "bins_i": 60},
  "sweep":     {"param": "b2", "from": 0.1, "to": 20.0, "steps": 25},
  "output":    {"stride": 100}
})json";
    if (name == "example1") return example1;
    if (name == "example2") return example2;
    throw ConfigError("preset: unknown preset '" + name + "' (expected example1|example2)");
}

inline ExperimentConfig load_preset(const std::string& name) {
    return parse_config(preset_text(name));
}

} // namespace hidsir
