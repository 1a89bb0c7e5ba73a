#include "hedge/asymptotics.hpp"
#include "hedge/errors.hpp"
#include "hedge/evaluation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

using namespace hedge;

namespace {

const ErgodicSolution& quadratic_solution() {
    static const ErgodicSolution sol = solve_ergodic_ode(
        fixtures::quadratic_cost(), ergodic_params(fixtures::quadratic_market(10.0), fixtures::quadratic_cost()));
    return sol;
}

const ErgodicSolution& power_solution() {
    static const ErgodicSolution sol =
        solve_ergodic_ode(fixtures::power_cost(), ergodic_params(fixtures::power_market(10.0), fixtures::power_cost()));
    return sol;
}

}  // namespace

TEST(Ergodic, QuadraticMatchesClosedForm) {
    const auto& sol = quadratic_solution();
    const auto& p = sol.params();
    const double slope = -std::sqrt(p.gamma * p.sigma * p.sigma * p.lambda);
    double worst = 0.0;
    for (int i = 1; i <= 200; ++i) {
        const double x = sol.x_max() * i / 200.0;
        worst = std::max(worst, std::abs(sol.g(x) - slope * x) / std::abs(slope * x));
    }
    EXPECT_LT(worst, 1e-6);
    EXPECT_LT(std::abs(sol.slope0() / slope - 1.0), 1e-6);
}

TEST(Ergodic, SolutionIsOddMonotoneAndMeanReverting) {
    for (const auto* sol : {&quadratic_solution(), &power_solution()}) {
        EXPECT_EQ(sol->g(0.0), 0.0);
        for (int i = 1; i <= 100; ++i) {
            const double x = sol->x_max() * i / 100.0;
            EXPECT_EQ(sol->g(-x), -sol->g(x));
            EXPECT_LT(sol->g(x), 0.0);
        }
        for (std::size_t i = 1; i < sol->n_nodes(); ++i) {
            EXPECT_LE(sol->v_nodes()[i], sol->v_nodes()[i - 1]);
            EXPECT_LE(sol->dv_nodes()[i], 0.0);
        }
    }
}

TEST(Ergodic, PowerSolutionApproachesAsymptote) {
    const auto& sol = power_solution();
    EXPECT_NEAR(sol.asymptote_ratio(), 1.0, 0.05);
    EXPECT_LT(sol.max_midpoint_residual(), 1e-6);
}

TEST(Ergodic, LargerRangeReproducesPrefixExactly) {
    ShootingConfig small;
    small.u_max = 6.0;
    const auto params = ergodic_params(fixtures::power_market(10.0), fixtures::power_cost());
    const auto a = solve_ergodic_ode(fixtures::power_cost(), params, small);
    const auto& b = power_solution();
    ASSERT_LT(a.n_nodes(), b.n_nodes());
    for (std::size_t i = 0; i < a.n_nodes(); ++i) {
        EXPECT_EQ(a.v_nodes()[i], b.v_nodes()[i]) << "node " << i;
        EXPECT_EQ(a.dv_nodes()[i], b.dv_nodes()[i]) << "node " << i;
    }
}

TEST(Ergodic, RescalesAcrossLambda) {
    const auto& sol = power_solution();
    const double lambda = sol.params().lambda;
    const auto params = [&] {
        auto p = sol.params();
        p.lambda = 4.0 * lambda;
        return p;
    }();
    const auto direct = solve_ergodic_ode(sol.cost(), params);
    const double x = 0.3 * direct.x_max();
    EXPECT_NEAR(sol.g(x, 4.0 * lambda) / direct.g(x), 1.0, 1e-12);
}

TEST(Ergodic, SaveLoadRoundTrip) {
    const auto& sol = power_solution();
    const std::string file = fixtures::temp_dir("ergodic") + "/g.txt";
    save_ergodic(file, sol);
    const auto back = load_ergodic(file);
    EXPECT_EQ(back.v_nodes(), sol.v_nodes());
    EXPECT_EQ(back.dv_nodes(), sol.dv_nodes());
    EXPECT_EQ(back.params().lambda, sol.params().lambda);
    EXPECT_EQ(back.g(0.37 * sol.x_max()), sol.g(0.37 * sol.x_max()));
}

TEST(Ergodic, RejectsDegenerateInputs) {
    auto p = ergodic_params(fixtures::quadratic_market(10.0), fixtures::quadratic_cost());
    p.abar = 0.0;
    EXPECT_THROW(solve_ergodic_ode(fixtures::quadratic_cost(), p), std::invalid_argument);
    p = ergodic_params(fixtures::quadratic_market(10.0), fixtures::quadratic_cost());
    p.lambda = 0.0;
    EXPECT_THROW(solve_ergodic_ode(fixtures::quadratic_cost(), p), std::invalid_argument);
    ShootingConfig bad;
    bad.slope_lo = -1e-3;
    bad.slope_hi = 0.0;
    EXPECT_THROW(solve_ergodic_ode(fixtures::quadratic_cost(),
                                   ergodic_params(fixtures::quadratic_market(10.0), fixtures::quadratic_cost()), bad),
                 BracketFailure);
}

TEST(LeadingOrder, RateRevertsTowardsTargetAndThrowsBeyondRange) {
    const auto& sol = power_solution();
    const double lambda = sol.params().lambda;
    const double d = 0.2 * sol.x_max();
    EXPECT_LT(leading_order_rate(sol, 1e10 + d, 1e10, lambda), 0.0);
    EXPECT_GT(leading_order_rate(sol, 1e10 - d, 1e10, lambda), 0.0);
    EXPECT_EQ(leading_order_rate(sol, 1e10, 1e10, lambda), 0.0);
    EXPECT_THROW(leading_order_rate(sol, 2.0 * sol.x_max(), 0.0, lambda), ExtrapolationBeyondGrid);
}

TEST(LeadingOrder, EngineGrowsRangeOnDemand) {
    ShootingConfig small;
    small.u_max = 4.0;
    const auto market = fixtures::power_market(10.0);
    const auto cost = fixtures::power_cost();
    auto sol = std::make_shared<const ErgodicSolution>(solve_ergodic_ode(cost, ergodic_params(market, cost), small));
    const double far = 3.0 * sol->x_max();
    LeadingOrderEngine engine(market, cost, sol);
    const double rate = engine.rate(0.0, 0.0, far, 0.0);
    EXPECT_TRUE(std::isfinite(rate));
    EXPECT_LT(rate, 0.0);
    EXPECT_GE(engine.solution()->x_max(), far);
    EXPECT_EQ(engine.rate(0.0, 0.0, 0.5 * sol->x_max(), 0.0),
              leading_order_rate(*sol, 0.5 * sol->x_max(), 0.0, cost.lambda));
}

TEST(LeadingOrder, DeviationSdeHasOrnsteinUhlenbeckVariance) {
    const auto& sol = quadratic_solution();
    const auto& p = sol.params();
    const double kappa = std::sqrt(p.gamma * p.sigma * p.sigma / p.lambda);
    const TimeGrid grid(200.0, 2000);
    const std::size_t n = 4000;
    const auto batch = sample_brownian(grid, n, 5);
    const auto delta = simulate_delta_sde(sol, batch, 0.0);
    RunningStats stats;
    for (std::size_t i = 0; i < n; ++i) stats.add(delta[i * (grid.n_steps() + 1) + grid.n_steps()]);
    const double expected = p.abar * p.abar / (2.0 * kappa);
    EXPECT_NEAR(stats.variance() / expected, 1.0, 0.1);
    EXPECT_NEAR(stats.mean / std::sqrt(expected), 0.0, 0.1);
}

TEST(GroundTruth, FeedbackAndExplicitFormsAgree) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    const TimeGrid grid(10.0, 500);
    GroundTruthEngine feedback(market, cost, grid, GroundTruthForm::feedback);
    GroundTruthEngine explicit_form(market, cost, grid, GroundTruthForm::explicit_formula);
    EvalConfig cfg;
    cfg.n_paths = 2000;
    cfg.seed = 3;
    EXPECT_LT(pathwise_distance(explicit_form, feedback, market, cost, grid, cfg), 1e-6);
}

TEST(GroundTruth, FiniteHorizonFeedbackVanishesAtMaturity) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    EXPECT_EQ(quadratic_finite_horizon_g(cost, 10.0, 1e9, market.gamma, market.sigma, 10.0), 0.0);
    const double slope = -std::sqrt(market.gamma * market.sigma * market.sigma * cost.lambda);
    EXPECT_NEAR(quadratic_finite_horizon_g(cost, 0.0, 1e9, market.gamma, market.sigma, 2520.0) / (slope * 1e9), 1.0,
                1e-12);
    EXPECT_THROW(quadratic_finite_horizon_g(fixtures::power_cost(), 0.0, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST(GroundTruth, RejectsPowerCostsAndMismatchedGrid) {
    const auto market = fixtures::quadratic_market(10.0);
    EXPECT_THROW(GroundTruthEngine(market, fixtures::power_cost(), TimeGrid(10.0, 10)), std::invalid_argument);
    GroundTruthEngine gt(market, fixtures::quadratic_cost(), TimeGrid(10.0, 10));
    EXPECT_THROW(gt.check_grid(TimeGrid(10.0, 20)), std::invalid_argument);
}

TEST(GroundTruth, TerminalRateShrinksWithStep) {
    const auto market = fixtures::quadratic_market(10.0);
    const auto cost = fixtures::quadratic_cost();
    EvalConfig cfg;
    cfg.n_paths = 4000;
    double prev = 0.0;
    for (std::size_t n : {50u, 100u, 200u}) {
        const TimeGrid grid(10.0, n);
        const auto r = evaluate(GroundTruthEngine(market, cost, grid), market, cost, grid, cfg);
        if (prev > 0.0) EXPECT_NEAR(prev / r.terminal_mse, 4.0, 0.4) << "N=" << n;
        prev = r.terminal_mse;
    }
}
