#include "hedge/asymptotics.hpp"
#include "hedge/evaluation.hpp"
#include "hedge/rng.hpp"
#include "checks.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

using namespace hedge;

namespace {

EvalConfig config(std::size_t n, std::uint64_t seed = 3) {
    EvalConfig c;
    c.n_paths = n;
    c.seed = seed;
    c.workers = 1;
    return c;
}

// Emits NaN from a given step on.
class BrokenEngine final : public StrategyEngine {
public:
    std::string name() const override { return "broken"; }
    std::unique_ptr<EngineSession> start(std::size_t) const override { return std::make_unique<Session>(); }

private:
    struct Session final : EngineSession {
        void rates(const StepBatch& step, std::span<double> out) override {
            for (auto& r : out) r = step.m >= 2 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
        }
    };
};

}  // namespace

TEST(Evaluation, ZeroStrategyWithoutRiskHasZeroGoal) {
    auto market = fixtures::quadratic_market(10.0);
    market.phi_init = 0.0;
    market.xi_vol = 0.0;
    const TimeGrid grid(10.0, 20);
    const auto r = evaluate(ZeroEngine(), market, fixtures::quadratic_cost(), grid, config(100));
    EXPECT_EQ(r.j_mean, 0.0);
    EXPECT_EQ(r.j_std, 0.0);
    EXPECT_EQ(r.terminal_mse, 0.0);
}

TEST(Evaluation, ZeroStrategyMatchesClosedFormExpectation) {
    const auto market = fixtures::quadratic_market(10.0);
    const TimeGrid grid(10.0, 20);
    const auto r = evaluate(ZeroEngine(), market, fixtures::quadratic_cost(), grid, config(20000));
    const double phi = market.phi_init;
    double mean_t = 0.0;
    for (std::size_t m = 0; m <= grid.n_steps(); ++m) mean_t += grid.time(m) / static_cast<double>(grid.n_steps() + 1);
    const double expected = phi * market.mu - 0.5 * market.gamma * market.sigma * market.sigma * phi * phi -
                            0.5 * market.gamma * market.xi_vol * market.xi_vol * mean_t;
    EXPECT_NEAR(r.j_mean, expected, 4.0 * r.j_stderr);
    EXPECT_NEAR(r.ci_high - r.ci_low, 2.0 * 1.959963984540054 * r.j_stderr, 1e-6 * r.j_stderr);
}

TEST(Evaluation, GroundTruthMatchesExactMomentRecursion) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 168);
    const double exact = checks::feedback_expected_goal(market, cost.lambda, grid);
    EXPECT_NEAR(exact, 4.2548e9, 1e5);
    const auto r = evaluate(GroundTruthEngine(market, cost, grid), market, cost, grid, config(20000));
    EXPECT_NEAR(r.j_mean, exact, 4.0 * r.j_stderr);
}

TEST(Evaluation, ConstantRateGoalMatchesHandComputation) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 5);
    const double c = 1e9;
    const auto r = evaluate(ConstantRateEngine(c), market, cost, grid, config(1, 8));
    const auto batch = sample_brownian(grid, 1, 8);
    double phi = market.phi_init, w = 0.0, sum = 0.0;
    for (std::size_t m = 0; m <= grid.n_steps(); ++m) {
        const double rate = m < grid.n_steps() ? c : 0.0;
        sum += phi * market.mu - 0.5 * market.gamma * std::pow(market.sigma * phi + market.xi_vol * w, 2) -
               cost.lambda * 0.5 * rate * rate;
        if (m < grid.n_steps()) {
            phi += rate * grid.dt();
            w += batch.increment(0, m);
        }
    }
    EXPECT_NEAR(r.j_mean, sum / 6.0, 1e-12 * std::abs(sum));
    EXPECT_NEAR(r.terminal_mse, std::pow(c / market.shares, 2), 1e-15);
}

TEST(Evaluation, ResultsDoNotDependOnChunkingOrWorkers) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 30);
    const GroundTruthEngine gt(market, cost, grid);
    const auto base = evaluate(gt, market, cost, grid, config(3000));
    for (std::size_t chunk : {7u, 1000u, 4096u}) {
        for (std::size_t workers : {1u, 3u}) {
            auto c = config(3000);
            c.chunk = chunk;
            c.workers = workers;
            const auto r = evaluate(gt, market, cost, grid, c);
            EXPECT_EQ(r.j_mean, base.j_mean) << chunk << " " << workers;
            EXPECT_EQ(r.j_std, base.j_std) << chunk << " " << workers;
            EXPECT_EQ(r.terminal_mse, base.terminal_mse) << chunk << " " << workers;
        }
    }
}

TEST(Evaluation, StandardErrorShrinksWithSquareRootOfPaths) {
    const auto market = fixtures::quadratic_market(10.0);
    const TimeGrid grid(10.0, 20);
    const auto a = evaluate(ZeroEngine(), market, fixtures::quadratic_cost(), grid, config(4000));
    const auto b = evaluate(ZeroEngine(), market, fixtures::quadratic_cost(), grid, config(16000));
    EXPECT_NEAR(a.j_stderr / b.j_stderr, 2.0, 0.2);
    EXPECT_NEAR(a.j_stderr, a.j_std / std::sqrt(4000.0), 1e-12 * a.j_stderr);
}

TEST(Evaluation, RejectsInvalidConfigAndGrid) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    EXPECT_THROW(evaluate(ZeroEngine(), market, cost, TimeGrid(10.0, 5), config(0)), std::invalid_argument);
    const GroundTruthEngine gt(market, cost, TimeGrid(10.0, 5));
    EXPECT_THROW(evaluate(gt, market, cost, TimeGrid(10.0, 6), config(10)), std::invalid_argument);
}

TEST(RunningStats, MergeEqualsSequentialAccumulation) {
    Xoshiro256pp g(4);
    RunningStats all, left, right;
    for (int i = 0; i < 1000; ++i) {
        const double x = 1e9 + 1e7 * g.uniform();
        all.add(x);
        (i < 300 ? left : right).add(x);
    }
    left.merge(right);
    EXPECT_EQ(left.count, all.count);
    EXPECT_NEAR(left.mean, all.mean, 1e-12 * all.mean);
    EXPECT_NEAR(left.variance(), all.variance(), 1e-9 * all.variance());
    RunningStats empty;
    empty.merge(all);
    EXPECT_EQ(empty.mean, all.mean);
    EXPECT_EQ(RunningStats{}.variance(), 0.0);
}

TEST(Comparison, SelfComparisonHasZeroGap) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 20);
    const GroundTruthEngine gt(market, cost, grid);
    const auto cmp = compare({&gt, &gt}, market, cost, grid, config(500));
    for (const auto& g : cmp.gaps) EXPECT_EQ(g.gap, 0.0);
    EXPECT_EQ(cmp.pathwise[0][1], 0.0);
    EXPECT_NEAR(cmp.sqrt_lambda_over_t, std::sqrt(cost.lambda) / 10.0, 1e-20);
    EXPECT_THROW(compare({&gt}, market, cost, grid, config(10)), std::invalid_argument);
}

TEST(Comparison, GroundTruthDominatesAlternatives) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 50);
    const GroundTruthEngine gt(market, cost, grid);
    const ZeroEngine zero;
    const ConstantRateEngine constant(-1e9);
    auto lo_sol = std::make_shared<const ErgodicSolution>(solve_ergodic_ode(cost, ergodic_params(market, cost)));
    const LeadingOrderEngine lo(market, cost, lo_sol);
    const auto cmp = compare({&zero, &gt, &constant, &lo}, market, cost, grid, config(4000));
    for (const auto& g : cmp.gaps) {
        EXPECT_EQ(g.reference, "ground_truth");
        if (g.strategy != "ground_truth") EXPECT_GT(g.gap, 0.0) << g.strategy;
    }
    EXPECT_EQ(cmp.pathwise[0][1], 1.0);
    EXPECT_THROW(pathwise_distance(gt, zero, market, cost, grid, config(10)), std::domain_error);
    EXPECT_TRUE(std::isnan(cmp.pathwise[1][0]));
}

TEST(Comparison, FailingEngineGetsNanRowWhileOthersContinue) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 5);
    const ZeroEngine zero;
    const BrokenEngine broken;
    const auto cmp = compare({&zero, &broken}, market, cost, grid, config(50));
    EXPECT_FALSE(cmp.reports[0].failed);
    EXPECT_TRUE(std::isfinite(cmp.reports[0].j_mean));
    EXPECT_TRUE(cmp.reports[1].failed);
    EXPECT_TRUE(std::isnan(cmp.reports[1].j_mean));
    EXPECT_FALSE(cmp.reports[1].error.empty());

    const std::string row = report_csv_row(cmp.reports[1]);
    EXPECT_EQ(row.rfind("broken,", 0), 0u);
    EXPECT_NE(row.find("NaN"), std::string::npos);
    EXPECT_EQ(to_json(cmp.reports[1]).at("j_mean"), "NaN");
    EXPECT_EQ(report_csv_header(), "method,T,N,j_mean,j_std,j_stderr,terminal_mse,n_paths");
}

TEST(Profile, ConstantRateQuantilesCollapse) {
    const auto market = fixtures::quadratic_market(10.0);
    const TimeGrid grid(10.0, 4);
    const auto p = path_profile(ConstantRateEngine(2.0), market, fixtures::quadratic_cost(), grid, 50, 1);
    ASSERT_EQ(p.rate_mean.size(), 4u);
    ASSERT_EQ(p.phi_mean.size(), 5u);
    for (std::size_t m = 0; m < 4; ++m) {
        EXPECT_EQ(p.rate_q05[m], 2.0);
        EXPECT_EQ(p.rate_q95[m], 2.0);
    }
    EXPECT_NEAR(p.phi_q50[4], market.phi_init + 2.0 * 10.0, 1e-3);

    const std::string file = fixtures::temp_dir("profile") + "/p.csv";
    write_profile_csv(file, p);
    std::ifstream in(file);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t,rate_mean,rate_q05,rate_q50,rate_q95,phi_mean,phi_q05,phi_q50,phi_q95");
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    EXPECT_EQ(lines, 5u);
}
