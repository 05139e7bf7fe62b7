#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "hidsir/filter.hpp"
#include "hidsir/markov_chain.hpp"
#include "hidsir/sde.hpp"

using namespace hidsir;

namespace {

ChainSpec example1_chain() { return ChainSpec::two_state(5, 25, {0.0, 1.0}, {0.0, 1.0}); }

// Co-simulated truth and observation increments for filter tests.
struct Scenario {
    std::vector<std::size_t> alpha_idx;
    std::vector<double> dy;
};

Scenario make_scenario(const ChainSpec& spec, const TimeGrid& grid, std::uint64_t seed) {
    Scenario sc;
    const auto alpha = simulate_ctmc(spec, 0, grid, seed);
    sc.alpha_idx = alpha.sample_on_grid(grid);
    const double sqrt_dt = std::sqrt(grid.dt);
    rng::NormalSequence w{rng::Stream(seed, 2)};
    sc.dy.resize(grid.n_steps);
    for (std::size_t k = 0; k < grid.n_steps; ++k)
        sc.dy[k] = spec.obs[sc.alpha_idx[k]] * grid.dt + w(k) * sqrt_dt;
    return sc;
}

} // namespace

TEST_CASE("project_simplex") {
    SUBCASE("already on the simplex") {
        auto v = project_simplex(std::vector<double>{0.5, 0.5});
        CHECK(v[0] == 0.5);
        CHECK(v[1] == 0.5);
    }
    SUBCASE("clamp then renormalize") {
        auto v = project_simplex(std::vector<double>{-0.1, 1.2});
        CHECK(v[0] == 0.0);
        CHECK(v[1] == 1.0);
    }
    SUBCASE("scale invariance") {
        auto v = project_simplex(std::vector<double>{1.0, 1.0, 3.0}); // 5 x (0.2,0.2,0.6)
        CHECK(v[0] == 0.2);
        CHECK(v[1] == 0.2);
        CHECK(v[2] == 0.6);
    }
    SUBCASE("all nonpositive maps to uniform") {
        auto v = project_simplex(std::vector<double>{-1.0, -2.0});
        CHECK(v[0] == 0.5);
        CHECK(v[1] == 0.5);
    }
    SUBCASE("random vectors land on the simplex and the map is idempotent") {
        rng::Stream s(11, 0);
        for (std::uint64_t i = 0; i < 100; ++i) {
            std::vector<double> v(4);
            for (std::size_t j = 0; j < 4; ++j) v[j] = s.uniform(4 * i + j) * 4.0 - 1.0;
            const auto p = project_simplex(v);
            double sum = 0.0;
            for (double x : p) {
                CHECK(x >= 0.0);
                sum += x;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
            // reprojection renormalizes by 1 +- few ulps; idempotent to
            // machine precision
            const auto p2 = project_simplex(p);
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(std::abs(p2[j] - p[j]) <= 1e-14 * (1.0 + std::abs(p[j])));
        }
    }
}

TEST_CASE("wonham fixed points") {
    SUBCASE("uninformative observation with frozen chain") {
        ChainSpec spec;
        spec.states = {0.2, 0.8};
        spec.obs = {1.0, 1.0}; // g_1 = g_2
        spec.generator = {{0.0, 0.0}, {0.0, 0.0}};
        const FilterState e{{0.5, 0.5}};
        const auto out = wonham_step(e, spec, 0.37, 1e-3);
        CHECK(out.weights[0] == 0.5);
        CHECK(out.weights[1] == 0.5);
    }
    SUBCASE("point mass is invariant when the chain is frozen") {
        ChainSpec spec;
        spec.states = {0.2, 0.8};
        spec.obs = {0.0, 1.0};
        spec.generator = {{0.0, 0.0}, {0.0, 0.0}};
        auto e = FilterState::point_mass(2, 1);
        for (int k = 0; k < 100; ++k) e = wonham_step(e, spec, 0.2 - 0.01 * k, 1e-3);
        CHECK(e.weights[0] == 0.0);
        CHECK(e.weights[1] == 1.0);
    }
}

TEST_CASE("simplex invariant after every wonham step") {
    const auto spec = example1_chain();
    const TimeGrid grid = TimeGrid::over(0.0, 20.0, 1e-3);
    const auto sc = make_scenario(spec, grid, 314);
    FilterState e{{0.5, 0.5}};
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        e = wonham_step(e, spec, sc.dy[k], grid.dt);
        double sum = 0.0;
        for (double w : e.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("observation form and innovation form stay consistent") {
    const auto spec = example1_chain();
    const TimeGrid grid = TimeGrid::over(0.0, 10.0, 1e-3);
    const auto sc = make_scenario(spec, grid, 2718);
    FilterState ey{{0.5, 0.5}}, ei{{0.5, 0.5}};
    double max_gap = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double dwbar = innovation_increment(ei, spec, sc.dy[k], grid.dt);
        ey = wonham_step(ey, spec, sc.dy[k], grid.dt);
        ei = wonham_step_innovation(ei, spec, dwbar, grid.dt);
        max_gap = std::max(max_gap, std::abs(ey.weights[0] - ei.weights[0]));
    }
    CHECK(max_gap < 1e-9);
}

TEST_CASE("two-state filter stays in the open interval (pre-projection)") {
    const auto spec = example1_chain();
    const TimeGrid grid = TimeGrid::over(0.0, 100.0, 1e-3);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto sc = make_scenario(spec, grid, seed);
        std::vector<double> e = {0.5, 0.5};
        std::vector<double> raw(2);
        double min_raw = 1.0;
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            detail::wonham_euler(e, spec, sc.dy[k], grid.dt, true, raw);
            min_raw = std::min({min_raw, raw[0], raw[1]});
            e = raw;
            project_simplex(std::span<double>(e));
        }
        CHECK(min_raw > 0.0);
    }
}

TEST_CASE("barycenter: long-run average of the filter matches mu*") {
    const auto spec = example1_chain();
    const auto mu = stationary_distribution(spec);
    const TimeGrid grid = TimeGrid::over(0.0, 2000.0, 1e-3);
    const auto sc = make_scenario(spec, grid, 99);
    FilterState e{{0.5, 0.5}};
    double sum0 = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        e = wonham_step(e, spec, sc.dy[k], grid.dt);
        sum0 += e.weights[0];
    }
    CHECK(sum0 / static_cast<double>(grid.n_steps) == doctest::Approx(mu[0]).epsilon(0.025));
}

TEST_CASE("innovation increments") {
    ChainSpec spec = example1_chain();
    SUBCASE("gbar = 0 passes dy through") {
        const FilterState e{{1.0, 0.0}}; // gbar = g_1 = 0
        CHECK(innovation_increment(e, spec, 0.123, 1e-3) == 0.123);
    }
    SUBCASE("dy = gbar dt cancels") {
        const FilterState e{{0.25, 0.75}};
        const double gb = 0.75;
        CHECK(innovation_increment(e, spec, gb * 1e-3, 1e-3) == doctest::Approx(0.0));
    }
    SUBCASE("quadratic variation of the innovation path is about T") {
        const TimeGrid grid = TimeGrid::over(0.0, 100.0, 1e-3);
        const auto sc = make_scenario(spec, grid, 555);
        FilterState e{{0.5, 0.5}};
        double qv = 0.0;
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            const double dw = innovation_increment(e, spec, sc.dy[k], grid.dt);
            qv += dw * dw;
            e = wonham_step(e, spec, sc.dy[k], grid.dt);
        }
        CHECK(qv == doctest::Approx(100.0).epsilon(0.02));
    }
}

TEST_CASE("wonham estimate beats the best constant predictor") {
    const auto spec = example1_chain();
    const auto mu = stationary_distribution(spec);
    const double alpha_bar = mu[0] * spec.states[0] + mu[1] * spec.states[1];
    const TimeGrid grid = TimeGrid::over(0.0, 50.0, 1e-3);

    double mse_filter = 0.0, mse_const = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 100; seed < 200; ++seed) {
        const auto sc = make_scenario(spec, grid, seed);
        FilterState e{{mu[0], mu[1]}};
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            e = wonham_step(e, spec, sc.dy[k], grid.dt);
            const double truth = spec.states[sc.alpha_idx[k + 1]];
            const double est = e.weights[0] * spec.states[0] + e.weights[1] * spec.states[1];
            mse_filter += (est - truth) * (est - truth);
            mse_const += (alpha_bar - truth) * (alpha_bar - truth);
            ++n;
        }
    }
    CHECK(mse_filter / n <= mse_const / n);
}

TEST_CASE("particle filter basics") {
    const auto spec = example1_chain();
    const ChainTransitionSampler sampler(spec);

    SUBCASE("uninformative likelihood keeps uniform weights") {
        auto cloud = ParticleCloud::equal_weighted({0.0, 1.0, 0.0, 1.0});
        const auto out = particle_filter_step(
            cloud, sampler, [](double) { return 0.0; }, 0.3, 1e-3, 0.0, 1, 0);
        for (double w : out.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-14));
    }
    SUBCASE("single particle keeps weight one") {
        auto cloud = ParticleCloud::equal_weighted({1.0});
        const auto out = particle_filter_step(
            cloud, sampler, [](double x) { return x; }, -0.5, 1e-3, 0.5, 1, 0);
        CHECK(out.weights[0] == 1.0);
        CHECK(out.ess() == 1.0);
    }
    SUBCASE("propagated positions stay on the chain states") {
        auto cloud = ParticleCloud::equal_weighted(std::vector<double>(256, 0.0));
        const auto out = particle_filter_step(
            cloud, sampler, [](double x) { return x; }, 0.01, 0.1, 0.5, 9, 3);
        for (double p : out.positions) CHECK((p == 0.0 || p == 1.0));
    }
    SUBCASE("deterministic in (seed, step)") {
        auto cloud = ParticleCloud::equal_weighted(std::vector<double>(64, 1.0));
        const auto a = particle_filter_step(
            cloud, sampler, [](double x) { return x; }, 0.02, 0.01, 0.5, 4, 7);
        const auto b = particle_filter_step(
            cloud, sampler, [](double x) { return x; }, 0.02, 0.01, 0.5, 4, 7);
        CHECK(a.positions == b.positions);
        CHECK(a.weights == b.weights);
    }
    SUBCASE("all likelihood factors underflowing is an error") {
        auto cloud = ParticleCloud::equal_weighted({0.0, 1.0});
        CHECK_THROWS_AS(particle_filter_step(
                            cloud, sampler, [](double) { return 1.0; },
                            -std::numeric_limits<double>::infinity(), 1e-3, 0.5, 1, 0),
                        DegenerateFilter);
    }
}

TEST_CASE("filter l1 distance") {
    const auto spec = example1_chain();
    SUBCASE("identical distributions") {
        auto cloud = ParticleCloud::equal_weighted({0.0, 1.0});
        const FilterState e{{0.5, 0.5}};
        CHECK(filter_l1_distance(e, cloud, spec) == 0.0);
    }
    SUBCASE("disjoint point masses") {
        ParticleCloud cloud;
        cloud.positions = {0.0};
        cloud.weights = {1.0};
        const FilterState e{{0.0, 1.0}};
        CHECK(filter_l1_distance(e, cloud, spec) == 2.0);
    }
    SUBCASE("uniform vs point mass") {
        auto cloud = ParticleCloud::equal_weighted({0.0, 1.0});
        const FilterState e{{1.0, 0.0}};
        CHECK(filter_l1_distance(e, cloud, spec) == 1.0);
    }
    SUBCASE("off-grid particle") {
        ParticleCloud cloud;
        cloud.positions = {0.5};
        cloud.weights = {1.0};
        const FilterState e{{0.5, 0.5}};
        CHECK_THROWS_AS(filter_l1_distance(e, cloud, spec), UnknownState);
    }
}

TEST_CASE("particle filter tracks the wonham filter") {
    const auto spec = example1_chain();
    const auto mu = stationary_distribution(spec);
    const ChainTransitionSampler sampler(spec);
    const TimeGrid grid = TimeGrid::over(0.0, 5.0, 1e-3);
    const auto sc = make_scenario(spec, grid, 4242);

    const std::size_t n_particles = 2000;
    std::vector<double> pos(n_particles);
    for (std::size_t i = 0; i < n_particles; ++i)
        pos[i] = rng::Stream(4242, rng::PF_STREAM).uniform(i) < mu[0] ? 0.0 : 1.0;
    auto cloud = ParticleCloud::equal_weighted(std::move(pos));
    FilterState e{{mu[0], mu[1]}};

    double l1_sum = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        e = wonham_step(e, spec, sc.dy[k], grid.dt);
        cloud = particle_filter_step(
            cloud, sampler, [&](double x) { return x; }, sc.dy[k], grid.dt, 0.5, 4242, k);
        l1_sum += filter_l1_distance(e, cloud, spec);
    }
    CHECK(l1_sum / static_cast<double>(grid.n_steps) < 0.08);
}

TEST_CASE("particle filter error shrinks monotonically as N doubles from 1e2 to 1e4") {
    const auto spec = example1_chain();
    const auto mu = stationary_distribution(spec);
    const ChainTransitionSampler sampler(spec);
    const TimeGrid grid = TimeGrid::over(0.0, 0.5, 2e-3);
    const std::size_t sizes[] = {100, 200, 400, 800, 1600, 3200, 6400, 12800};
    constexpr std::size_t n_levels = 8;

    double pooled[n_levels] = {};
    const std::size_t n_seeds = 50;
    for (std::uint64_t seed = 900; seed < 900 + n_seeds; ++seed) {
        const auto sc = make_scenario(spec, grid, seed);
        for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
            std::vector<double> pos(sizes[lvl]);
            for (std::size_t i = 0; i < sizes[lvl]; ++i)
                pos[i] = rng::Stream(seed, rng::PF_STREAM).uniform(i) < mu[0] ? 0.0 : 1.0;
            auto cloud = ParticleCloud::equal_weighted(std::move(pos));
            FilterState e{{mu[0], mu[1]}};
            double l1 = 0.0;
            for (std::size_t k = 0; k < grid.n_steps; ++k) {
                e = wonham_step(e, spec, sc.dy[k], grid.dt);
                cloud = particle_filter_step(
                    cloud, sampler, [](double x) { return x; }, sc.dy[k], grid.dt, 0.5, seed, k);
                l1 += filter_l1_distance(e, cloud, spec);
            }
            pooled[lvl] += l1 / static_cast<double>(grid.n_steps);
        }
    }
    for (std::size_t lvl = 1; lvl < n_levels; ++lvl) CHECK(pooled[lvl] < pooled[lvl - 1]);
}

TEST_CASE("particle filter accepts a continuous-state transition sampler") {
    // Reflected Brownian proposal on [0,1]: the general-signal surface has no
    // exact reference filter, but the cloud must stay valid.
    auto reflected = [](double x, double dt, const rng::Stream& s) {
        const double u1 = s.uniform(0), u2 = s.uniform(1);
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        double y = x + 0.5 * std::sqrt(dt) * z;
        y = std::fmod(std::abs(y), 2.0);
        return y > 1.0 ? 2.0 - y : y;
    };
    std::vector<double> pos(500);
    for (std::size_t i = 0; i < pos.size(); ++i)
        pos[i] = rng::Stream(1, rng::PF_STREAM).uniform(i);
    auto cloud = ParticleCloud::equal_weighted(std::move(pos));

    rng::NormalSequence w{rng::Stream(5150, 2)};
    const double dt = 0.01;
    for (std::size_t k = 0; k < 200; ++k) {
        const double dy = 0.4 * dt + w(k) * std::sqrt(dt);
        cloud = particle_filter_step(
            cloud, reflected, [](double x) { return x; }, dy, dt, 0.5, 5150, k);
        double sum = 0.0;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            CHECK(cloud.positions[i] >= 0.0);
            CHECK(cloud.positions[i] <= 1.0);
            sum += cloud.weights[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cloud.ess() >= 1.0);
        CHECK(cloud.ess() <= static_cast<double>(cloud.size()) * (1.0 + 1e-12));
    }
}

TEST_CASE("two-state filter sde matches the wonham filter component") {
    // With g(x) = x the gap g_1 - g_2 = -1 and the scalar SDE tracks e = P(alpha = 0).
    const auto spec = example1_chain();
    const TimeGrid grid = TimeGrid::over(0.0, 5.0, 1e-3);
    const auto sc = make_scenario(spec, grid, 31337);

    FilterState e{{0.5, 0.5}};
    const TwoStateFilterSde sde(5.0, 25.0, -1.0);
    double es = 0.5;
    std::vector<double> scratch(2);
    double max_gap = 0.0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double dwbar = innovation_increment(e, spec, sc.dy[k], grid.dt);
        e = wonham_step(e, spec, sc.dy[k], grid.dt);
        double state[1] = {es};
        double out[1];
        const double dW[1] = {dwbar};
        euler_maruyama_step(sde, k, grid.time(k), grid.dt, dW, std::span<const double>(state, 1),
                            std::span<double>(out, 1), scratch);
        es = out[0];
        max_gap = std::max(max_gap, std::abs(es - e.weights[0]));
    }
    CHECK(max_gap < 1e-9);
}
