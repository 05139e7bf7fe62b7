#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "hidsir/config.hpp"
#include "hidsir/experiment.hpp"

using namespace hidsir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::path("test_out") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("presets carry the worked-example parameter sets verbatim") {
    const auto c1 = load_preset("example1");
    CHECK(c1.params.a1 == 0.5);
    CHECK(c1.params.b1 == 1.0);
    CHECK(c1.params.b2 == 2.0);
    CHECK(c1.params.sigma1 == 1.0);
    CHECK(c1.params.sigma2 == 0.5);
    CHECK(c1.chain.generator[0][1] == 5.0);  // q1
    CHECK(c1.chain.generator[1][0] == 25.0); // q2
    CHECK(c1.incidence.f_table() == std::vector<double>{0.1, 4.0});
    CHECK(c1.incidence.h_table()[1] == 0.1);

    const auto c2 = load_preset("example2");
    CHECK(c2.params.a1 == 10.0);
    CHECK(c2.params.b2 == 3.0);
    CHECK(c2.params.sigma2 == 1.0);
    CHECK(c2.chain.generator[0][1] == 10.0); // q1
    CHECK(c2.chain.generator[1][0] == 1.0);  // q2
    CHECK(c2.incidence.f_table() == std::vector<double>{0.1, 2.0});

    CHECK_THROWS_AS(load_preset("example3"), ConfigError);
}

TEST_CASE("config validation failures carry the field path") {
    auto base = std::string(preset_text("example1"));
    SUBCASE("negative a1") {
        auto bad = base;
        bad.replace(bad.find("\"a1\": 0.5"), 9, "\"a1\": -1.0");
        try {
            parse_config(bad);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("a1") != std::string::npos);
        }
    }
    SUBCASE("unknown keys are rejected") {
        auto bad = base;
        bad.replace(bad.find("\"params\""), 8, "\"parms\"");
        try {
            parse_config(bad);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("parms") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_config(R"({"params": {"a1": 1, "b1": 1, "b2": 1,
            "sigma1": 1, "sigma2": 1, "bogus": 2},
            "chain": {"states":[0,1], "generator":[[-1,1],[1,-1]], "obs":[0,1]},
            "incidence": {"family":"bilinear", "beta": 1}})"),
                        ConfigError);
    }
    SUBCASE("reducible chain is a config error") {
        auto bad = base;
        const std::string gen = "\"generator\": [[-5.0, 5.0], [25.0, -25.0]]";
        bad.replace(bad.find(gen), gen.size(), "\"generator\": [[0.0, 0.0], [0.0, 0.0]]");
        CHECK_THROWS_AS(parse_config(bad), ConfigError);
    }
    SUBCASE("not JSON at all") {
        CHECK_THROWS_AS(parse_config("params { a1 = 1 }"), ConfigError);
    }
}

TEST_CASE("threshold experiment writes the report record") {
    auto cfg = load_preset("example2");
    cfg.kind = ExperimentKind::Threshold;
    cfg.out_dir = fresh_dir("threshold_ex2").string();
    std::ostringstream echo;
    run_threshold(cfg, echo);

    const auto kv = parse_kv(slurp(fs::path(cfg.out_dir) / "threshold.txt"));
    CHECK(std::abs(std::stod(kv.at("lambda")) - 14.8522) < 0.01);
    CHECK(std::stod(kv.at("lambda_pre_0")) == doctest::Approx(-2.5).epsilon(1e-9));
    CHECK(std::abs(std::stod(kv.at("lambda_pre_1")) - 16.5874) < 0.01);
    CHECK(kv.at("classification_0") == "Incautious");
    CHECK(kv.at("classification_1") == "Overcautious");
    CHECK(kv.at("n_states") == "2");
    CHECK(kv.count("config_hash") == 1);
}

TEST_CASE("simulate experiment is byte-identical across reruns") {
    auto cfg = load_preset("example1");
    cfg.kind = ExperimentKind::Simulate;
    cfg.seed_count = 1;
    cfg.horizon = 5.0;
    cfg.output_stride = 10;

    cfg.out_dir = fresh_dir("sim_a").string();
    run_simulate(cfg);
    auto cfg2 = cfg;
    cfg2.out_dir = fresh_dir("sim_b").string();
    run_simulate(cfg2);

    const char* names[] = {"paths_hidden_84628114.csv", "paths_filtered_84628114.csv",
                           "paths_predicted0_84628114.csv", "paths_predicted1_84628114.csv"};
    for (const char* n : names) {
        const auto a = slurp(fs::path(cfg.out_dir) / n);
        const auto b = slurp(fs::path(cfg2.out_dir) / n);
        CHECK(a == b);
        CHECK(a.find("t,S,I") != std::string::npos);
        CHECK(a.rfind("# config=", 0) == 0); // provenance comment first
    }

    // filtered CSV carries the simplex columns and the shared observation path
    const auto filtered = slurp(fs::path(cfg.out_dir) / "paths_filtered_84628114.csv");
    CHECK(filtered.find("e_1,e_2,y") != std::string::npos);
}

TEST_CASE("innovation mode emits only filtered paths") {
    auto cfg = load_preset("example1");
    cfg.kind = ExperimentKind::Simulate;
    cfg.cosim_observation = false;
    cfg.seed_count = 1;
    cfg.horizon = 2.0;
    cfg.predicted_states.clear();
    cfg.out_dir = fresh_dir("sim_innov").string();
    run_simulate(cfg);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "paths_filtered_84628114.csv"));
    CHECK(!fs::exists(fs::path(cfg.out_dir) / "paths_hidden_84628114.csv"));
}

TEST_CASE("compare experiment labels the worked example correctly") {
    auto cfg = load_preset("example1");
    cfg.kind = ExperimentKind::Compare;
    cfg.seed_count = 6;
    cfg.horizon = 60.0;
    cfg.out_dir = fresh_dir("compare_ex1").string();
    std::ostringstream echo;
    const auto rows = run_compare(cfg, echo);

    REQUIRE(rows.size() == 4);
    CHECK(rows[0].name == "hidden");
    CHECK(rows[1].name == "filtered");
    CHECK(rows[0].verdict.verdict == Verdict::Extinction);
    CHECK(rows[1].verdict.verdict == Verdict::Extinction);
    REQUIRE(rows[2].label.has_value());
    CHECK(*rows[2].label == Classification::Incautious);  // m_k0 = 0
    REQUIRE(rows[3].label.has_value());
    CHECK(*rows[3].label == Classification::Overcautious); // m_k0 = 1
    CHECK(fs::exists(fs::path(cfg.out_dir) / "verdicts.csv"));
}

TEST_CASE("sweep experiment emits a monotone lambda column for b2") {
    auto cfg = load_preset("example2");
    cfg.kind = ExperimentKind::Sweep;
    SweepSpec sw;
    sw.param = "b2";
    sw.from = 1.0;
    sw.to = 5.0;
    sw.steps = 5;
    cfg.sweep = sw;
    cfg.out_dir = fresh_dir("sweep_b2").string();
    std::ostringstream echo;
    run_sweep(cfg, echo);

    const auto text = slurp(fs::path(cfg.out_dir) / "sweep.csv");
    std::istringstream in(text);
    std::string line;
    std::vector<double> lambdas;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("param", 0) == 0) continue;
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ','); // param name
        std::getline(row, cell, ','); // value
        std::getline(row, cell, ','); // lambda
        lambdas.push_back(std::stod(cell));
    }
    REQUIRE(lambdas.size() == 5);
    for (std::size_t k = 1; k < lambdas.size(); ++k) CHECK(lambdas[k] < lambdas[k - 1]);
}

TEST_CASE("density experiment writes a normalized histogram") {
    auto cfg = load_preset("example2");
    cfg.kind = ExperimentKind::Density;
    cfg.seed_count = 2;
    cfg.horizon = 20.0;
    cfg.analysis.bins_s = 20;
    cfg.analysis.bins_i = 20;
    cfg.out_dir = fresh_dir("density_ex2").string();
    const auto h = run_density(cfg);

    double total = 0.0;
    for (double d : h.density) total += d * h.ds() * h.di();
    CHECK(std::abs(total - 1.0) < 1e-12);
    const auto text = slurp(fs::path(cfg.out_dir) / "density.csv");
    CHECK(text.find("S_bin,I_bin,density") != std::string::npos);
}

TEST_CASE("three-state chains run through the whole pipeline") {
    const std::string text = R"json({
      "params":    {"a1": 1.0, "b1": 1.0, "b2": 2.0, "sigma1": 0.8, "sigma2": 0.5},
      "chain":     {"states": [0.0, 0.5, 1.0],
                    "generator": [[-4.0, 3.0, 1.0], [2.0, -5.0, 3.0], [1.0, 4.0, -5.0]],
                    "obs": [0.0, 0.5, 1.0]},
      "incidence": {"family": "tabulated", "m1": [0.2, 1.0, 3.0], "m2": [0.0, 0.05, 0.1]},
      "grid":      {"dt": 0.001, "horizon": 5.0},
      "seeds":     {"count": 1, "base": 99}
    })json";
    const auto cfg = parse_config(text);
    REQUIRE(cfg.chain.size() == 3);

    SUBCASE("threshold decomposition and sandwich") {
        const auto rep = lambda_discrete(cfg.params, cfg.incidence, cfg.chain);
        REQUIRE(rep.states.size() == 3);
        CHECK(rep.lambda == rep.minus_c2 + rep.f_term + rep.h_term);
        CHECK(rep.states.front().lambda_pre <= rep.lambda + rep.classification_tol);
        CHECK(rep.lambda <= rep.states.back().lambda_pre + rep.classification_tol);
    }

    SUBCASE("cosimulation keeps the 3-simplex invariant") {
        const Cosim cs = run_cosim(cfg, 99);
        REQUIRE(cs.filtered.dim == 5);
        for (std::size_t k = 0; k < cs.filtered.n_points(); ++k) {
            double sum = 0.0;
            for (std::size_t j = 2; j < 5; ++j) {
                CHECK(cs.filtered.value(k, j) >= 0.0);
                sum += cs.filtered.value(k, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }

    SUBCASE("particle filter follows the 3-state wonham filter") {
        const auto mu = stationary_distribution(cfg.chain);
        const ChainTransitionSampler sampler(cfg.chain);
        const TimeGrid grid = TimeGrid::over(0.0, 2.0, 1e-3);
        const auto alpha = simulate_ctmc(cfg.chain, 0, grid, 7);
        const auto idx = alpha.sample_on_grid(grid);
        rng::NormalSequence w{rng::Stream(7, 2)};
        const double sqrt_dt = std::sqrt(grid.dt);

        const std::size_t n_particles = 3000;
        std::vector<double> pos(n_particles);
        for (std::size_t i = 0; i < n_particles; ++i) {
            const double u = rng::Stream(7, rng::PF_STREAM).uniform(i);
            pos[i] = u < mu[0] ? 0.0 : (u < mu[0] + mu[1] ? 0.5 : 1.0);
        }
        auto cloud = ParticleCloud::equal_weighted(std::move(pos));
        FilterState e{{mu[0], mu[1], mu[2]}};
        double l1 = 0.0;
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            const double dy = cfg.chain.obs[idx[k]] * grid.dt + w(k) * sqrt_dt;
            e = wonham_step(e, cfg.chain, dy, grid.dt);
            cloud = particle_filter_step(
                cloud, sampler, [](double x) { return x; }, dy, grid.dt, 0.5, 7, k);
            l1 += filter_l1_distance(e, cloud, cfg.chain);
        }
        CHECK(l1 / static_cast<double>(grid.n_steps) < 0.1);
    }
}

TEST_CASE("config hash is stable and seed-independent fields reach the outputs") {
    const auto a = parse_config(preset_text("example1"));
    const auto b = parse_config(preset_text("example1"));
    CHECK(a.config_hash == b.config_hash);
    const auto c = parse_config(preset_text("example2"));
    CHECK(a.config_hash != c.config_hash);
}
