#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evcorridor/evalkit.hpp"
#include "evcorridor/stats.hpp"

using namespace evc;

namespace {

double t_pdf(double x, double nu) {
    double c = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * M_PI);
    return std::exp(c - (nu + 1) / 2 * std::log1p(x * x / nu));
}

// Two-tailed p by composite Simpson over [0, |t|].
double t_two_tailed_simpson(double t, double nu) {
    const int n = 200000;
    const double a = 0.0, b = std::fabs(t), h = (b - a) / n;
    double s = t_pdf(a, nu) + t_pdf(b, nu);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * t_pdf(a + i * h, nu);
    return 1.0 - 2.0 * s * h / 3.0;
}

double gini_pairs(const std::vector<double>& x) {
    double num = 0, sum = 0;
    for (double a : x) {
        sum += a;
        for (double b : x) num += std::fabs(a - b);
    }
    return num / (2.0 * x.size() * sum);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = mean(x), my = mean(y), sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Welch, WorkedExample) {
    auto r = welch_t({88, 90, 87, 91, 89}, {95, 97, 94, 96, 98});
    EXPECT_NEAR(r.t, -7.0, 1e-12);
    EXPECT_NEAR(r.dof, 8.0, 1e-12);
    EXPECT_NEAR(r.p, t_two_tailed_simpson(-7.0, 8.0), 1e-6);
    EXPECT_LT(r.p, 0.001);
}

TEST(Welch, UnequalVariancesAgainstOracle) {
    std::vector<double> a{1.2, 3.4, 2.2, 5.1, 0.3, 2.9, 4.4}, b{2.0, 2.1, 1.9, 2.2};
    auto r = welch_t(a, b);
    double va = stddev(a) * stddev(a) / a.size(), vb = stddev(b) * stddev(b) / b.size();
    double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
    double nu = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
    EXPECT_NEAR(r.t, t, 1e-12);
    EXPECT_NEAR(r.dof, nu, 1e-9);
    EXPECT_NEAR(r.p, t_two_tailed_simpson(t, nu), 1e-6);
}

TEST(Welch, DegenerateSamples) {
    EXPECT_DOUBLE_EQ(welch_t({2, 2, 2}, {2, 2}).p, 1.0);
    auto r = welch_t({1, 1, 1}, {2, 2, 2});
    EXPECT_DOUBLE_EQ(r.p, 0.0);
    EXPECT_TRUE(std::isinf(r.t));
}

TEST(Spearman, SwappedPair) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {1, 2, 4, 3}), 0.8);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {40, 30, 20, 10}), -1.0);
}

TEST(Spearman, EqualsPearsonOfRanksWithoutTies) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> x(50), y(50);
    for (int i = 0; i < 50; ++i) x[i] = u(rng), y[i] = x[i] + 0.3 * u(rng);
    EXPECT_NEAR(spearman(x, y), pearson(average_ranks(x), average_ranks(y)), 1e-12);
}

TEST(Ranks, TiesShareAverage) {
    EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Gini, Examples) {
    EXPECT_DOUBLE_EQ(gini({0, 0, 0, 1}), 0.75);
    EXPECT_DOUBLE_EQ(gini({3, 3, 3}), 0.0);
    EXPECT_DOUBLE_EQ(gini({0, 0}), 0.0);
    EXPECT_THROW(gini({1, -1}), std::invalid_argument);
}

TEST(Gini, MatchesPairwiseOracle) {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> e(1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(1 + trial * 7);
        for (double& v : x) v = e(rng);
        EXPECT_NEAR(gini(x), gini_pairs(x), 1e-12);
    }
}

TEST(Stats, MeanAndSampleStd) {
    EXPECT_DOUBLE_EQ(mean({1, 2, 3, 4}), 2.5);
    EXPECT_NEAR(stddev({2, 4, 4, 4, 5, 5, 7, 9}), std::sqrt(32.0 / 7.0), 1e-12);
    EXPECT_EQ(stddev({3}), 0.0);
}

TEST(Acd, HandExample) {
    EXPECT_FALSE(acd(10.0, 0.0).has_value());
    EXPECT_DOUBLE_EQ(*acd(10.0, 4.0), 2.5);
}

TEST(Evalkit, ReplayedDelayMatchesStream) {
    CorridorEnv env(Scenario{});
    env.set_record_trace(true);
    auto p = make_policy(PolicyKind::FixedTimeEVP);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        env.reset(seed);
        while (!env.done()) env.step(p->act(env));
        double streamed = 0;
        for (const auto& r : env.trace()) streamed += r.delay_veh_s;
        EXPECT_NEAR(replay_delay(env.trace(), env.network().spec.dt), streamed, 1e-6);
        EXPECT_NEAR(env.metrics().total_delay_veh_s, streamed, 1e-6);
    }
}

TEST(Evalkit, ZoneDecompositionAgainstSampling) {
    CorridorEnv env(Scenario{});
    env.set_record_trace(true);
    auto p = make_policy(PolicyKind::UniformRandom);
    env.reset(4);
    p->reset(4);
    while (!env.done()) env.step(p->act(env));
    const double dt = env.network().spec.dt;
    for (int zc : {1, 2}) {
        auto z = per_intersection_decomposition(env.route(), env.trace(), dt, zc);
        double sum = z.between_s;
        for (double x : z.zone_time_s) sum += x;
        EXPECT_NEAR(sum, z.total_s, 1e-9);
        EXPECT_NEAR(z.total_s, env.trace().size() * dt, 1e-9);

        // Oracle: fine time sampling of the piecewise-linear path.
        std::vector<double> oracle(env.route().K(), 0.0);
        const int sub = 2000;
        double p0 = 0.0;
        for (const auto& r : env.trace()) {
            for (int k = 0; k < sub; ++k) {
                double pos = p0 + (r.ev_pos - p0) * (k + 0.5) / sub;
                for (int i = 0; i < env.route().K(); ++i)
                    if (pos >= z.zone_lo[i] && pos < z.zone_hi[i]) {
                        oracle[i] += dt / sub;
                        break;
                    }
            }
            p0 = r.ev_pos;
        }
        for (int i = 0; i < env.route().K(); ++i) EXPECT_NEAR(z.zone_time_s[i], oracle[i], 0.02 * dt) << zc << " " << i;
    }
}

TEST(Evalkit, SpacetimeRows) {
    CorridorEnv env(Scenario{});
    env.set_record_trace(true);
    auto p = make_policy(PolicyKind::FixedTimeEVP);
    env.reset(1);
    while (!env.done()) env.step(p->act(env));
    auto rows = spacetime_export(env.route(), env.trace(), 5.0);
    ASSERT_EQ(rows.size(), env.trace().size());
    for (size_t k = 0; k < rows.size(); ++k) {
        EXPECT_DOUBLE_EQ(rows[k].pos_m, env.trace()[k].ev_pos);
        for (int i = 0; i < env.route().K(); ++i)
            EXPECT_EQ(rows[k].ev_green[i], rows[k].phases[i] == env.route().ev_phase[i]);
    }
    std::ostringstream os;
    write_spacetime_csv(os, rows);
    const std::string csv = os.str();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(rows.size()) + 1);
}

TEST(Evalkit, RunEpisodesSharesSeeds) {
    Scenario sc;
    auto a = run_episodes(sc, policy_runner(PolicyKind::GreedyPreempt), {0, 1}, 3);
    auto b = run_episodes(sc, policy_runner(PolicyKind::FixedTimeEVP), {0, 1}, 3);
    ASSERT_EQ(a.size(), 6u);
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_EQ(a[i].seed, episode_seed(a[i].seed_group, i % 3));
    }
    Summary s = summarize(a);
    EXPECT_EQ(s.episodes, 6);
    EXPECT_NEAR(s.ett_mean, mean(ett_values(a)), 1e-12);
}

TEST(Evalkit, SweepMarksFailedPoints) {
    SweepSpec spec;
    spec.values = {1, 2};
    spec.seeds = {0};
    spec.episodes_per_seed = 2;
    auto pts = run_sweep(spec, Scenario{}, [](double v, Scenario&) -> EpisodeRunner {
        if (v == 2) throw std::runtime_error("boom");
        return policy_runner(PolicyKind::GreedyPreempt);
    });
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_FALSE(pts[0].failed);
    EXPECT_TRUE(pts[1].failed);
    EXPECT_EQ(pts[1].error, "boom");
    std::ostringstream os;
    write_sweep_records(os, spec, pts);
    EXPECT_NE(os.str().find("boom"), std::string::npos);
    EXPECT_EQ(parse_axis(axis_name(SweepAxis::Context)), SweepAxis::Context);
}
