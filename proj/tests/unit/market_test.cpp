#include "hedge/market.hpp"
#include "hedge/rng.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace hedge;
using hedge::fixtures::rel_err;

namespace {

std::vector<CostSpec> cost_family() {
    return {CostSpec::quadratic(1.0), CostSpec::power(1.5, 1.0), CostSpec::power(1.2, 1.0), CostSpec::power(1.9, 1.0),
            CostSpec::power(2.0, 1.0)};
}

}  // namespace

TEST(Cost, ValuesOfQuadraticAndPower) {
    const auto q = CostSpec::quadratic(1.0);
    EXPECT_EQ(cost_value(q, 3.0), 4.5);
    EXPECT_EQ(cost_marginal(q, -3.0), -3.0);
    const auto p = CostSpec::power(1.5, 1.0);
    EXPECT_NEAR(cost_value(p, 4.0), 8.0 / 1.5, 1e-14);
    EXPECT_NEAR(cost_marginal(p, -4.0), -2.0, 1e-15);
    EXPECT_NEAR(cost_marginal_inverse(p, -2.0), -4.0, 1e-14);
    EXPECT_EQ(cost_value(p, 0.0), 0.0);
}

TEST(Cost, MarginalInverseRoundTrip) {
    Xoshiro256pp gen(5);
    for (const auto& c : cost_family()) {
        for (int i = 0; i < 2000; ++i) {
            const double x = std::ldexp(2.0 * gen.uniform() - 1.0, static_cast<int>(gen() % 40) - 20);
            const double back = cost_marginal_inverse(c, cost_marginal(c, x));
            EXPECT_LT(rel_err(back, x), 1e-12) << "q=" << c.exponent() << " x=" << x;
        }
    }
}

TEST(Cost, FenchelYoungEqualityAtConjugatePoints) {
    // G(x) + G*(y) = x y when y = G'(x).
    Xoshiro256pp gen(8);
    for (const auto& c : cost_family()) {
        for (int i = 0; i < 2000; ++i) {
            const double x = std::ldexp(2.0 * gen.uniform() - 1.0, static_cast<int>(gen() % 30) - 15);
            const double y = cost_marginal(c, x);
            EXPECT_LT(rel_err(cost_value(c, x) + cost_legendre(c, y), x * y), 1e-10);
        }
    }
}

TEST(Cost, FenchelYoungInequalityOffConjugatePoints) {
    Xoshiro256pp gen(9);
    for (const auto& c : cost_family()) {
        for (int i = 0; i < 2000; ++i) {
            const double x = 10.0 * (2.0 * gen.uniform() - 1.0);
            const double y = 10.0 * (2.0 * gen.uniform() - 1.0);
            EXPECT_GE(cost_value(c, x) + cost_legendre(c, y) - x * y, -1e-12 * (1.0 + std::abs(x * y)));
        }
    }
}

TEST(Cost, LegendreInverse) {
    for (const auto& c : cost_family()) {
        for (double y : {0.0, 0.3, 1.0, 7.5}) {
            EXPECT_LT(std::abs(cost_legendre_inverse(c, cost_legendre(c, y)) - y), 1e-12 * (1.0 + y));
        }
        EXPECT_THROW(cost_legendre_inverse(c, -1e-3), std::domain_error);
    }
}

TEST(Cost, InverseDerivativeConvention) {
    EXPECT_EQ(cost_marginal_inverse_derivative(CostSpec::quadratic(1.0), 0.0), 1.0);
    EXPECT_EQ(cost_marginal_inverse_derivative(CostSpec::power(1.5, 1.0), 0.0), 0.0);
    const auto p = CostSpec::power(1.5, 1.0);
    const double y = 0.7, h = 1e-6;
    const double fd = (cost_marginal_inverse(p, y + h) - cost_marginal_inverse(p, y - h)) / (2 * h);
    EXPECT_NEAR(cost_marginal_inverse_derivative(p, y), fd, 1e-8);
}

TEST(Cost, ValidateRejectsOutOfRangeExponent) {
    EXPECT_THROW(CostSpec::power(2.5, 1.0).validate(), std::invalid_argument);
    EXPECT_THROW(CostSpec::power(1.0, 1.0).validate(), std::invalid_argument);
    EXPECT_THROW(CostSpec::quadratic(-1.0).validate(), std::invalid_argument);
    EXPECT_NO_THROW(CostSpec::power(2.0, 0.0).validate());
}

TEST(Cost, LiquidityScalesLambda) {
    auto c = CostSpec::quadratic(2.0);
    EXPECT_EQ(c.lambda_at(0.0, 0.0), 2.0);
    c.liquidity = Liquidity::constant(3.0);
    EXPECT_EQ(c.lambda_at(1.0, 5.0), 6.0);
    c.liquidity = Liquidity::process([](double t, double w) { return 1.0 + t + w * w; });
    EXPECT_EQ(c.lambda_at(1.0, 2.0), 12.0);
    EXPECT_THROW(Liquidity::constant(0.0), std::invalid_argument);
}

TEST(Market, CalibratedFrictionlessQuantities) {
    const auto m = fixtures::quadratic_market(10.0);
    EXPECT_NO_THROW(m.validate());
    EXPECT_DOUBLE_EQ(m.phi_bar(0.0), m.shares / 2.0);
    EXPECT_NEAR(m.delta_phi0(), 0.0, 1e-15 * m.shares);
    EXPECT_DOUBLE_EQ(m.a_bar(), -2.19e10 / 1.88);
    EXPECT_EQ(m.b_bar(), 0.0);
    EXPECT_DOUBLE_EQ(m.phi_bar(2.0) - m.phi_bar(0.0), 2.0 * m.a_bar());
    const auto p = fixtures::power_market(10.0);
    EXPECT_EQ(p.xi_vol, 2.33e10);
    EXPECT_EQ(calibrated_cost(CostKind::power).q, 1.5);
    EXPECT_EQ(calibrated_cost(CostKind::power).lambda, 5.22e-6);
}

TEST(Market, ValidateRejectsNonPositive) {
    auto m = fixtures::quadratic_market(10.0);
    m.sigma = 0.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m = fixtures::quadratic_market(10.0);
    m.horizon = -1.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Market, GoalIntegrandAtHalfShares) {
    // phi = s/2, xi = 0, no trading: s mu / 2 - gamma sigma^2 s^2 / 8 = gamma sigma^2 s^2 / 8.
    const auto m = fixtures::quadratic_market(10.0);
    const double v = goal_integrand(m, m.shares / 2.0, 0.0, 0.0, 1.0);
    const double expected = m.gamma * m.sigma * m.sigma * m.shares * m.shares / 8.0;
    EXPECT_LT(rel_err(v, expected), 1e-14);
    EXPECT_NEAR(expected, 4.438e9, 1e6);
}

TEST(Grid, EndpointsAndSpacing) {
    const TimeGrid g(10.0, 168);
    EXPECT_EQ(g.time(0), 0.0);
    EXPECT_EQ(g.time(168), 10.0);
    EXPECT_DOUBLE_EQ(g.dt(), 10.0 / 168);
    EXPECT_EQ(g.times().size(), 169u);
    EXPECT_THROW(TimeGrid(0.0, 3), std::invalid_argument);
    EXPECT_THROW(TimeGrid(1.0, 0), std::invalid_argument);
}

TEST(Paths, OffsetBatchesRegenerateIdenticalPaths) {
    const TimeGrid g(1.0, 20);
    const auto all = sample_brownian(g, 10, 99);
    const auto tail = sample_brownian(g, 4, 99, 6);
    for (std::size_t p = 0; p < 4; ++p) {
        for (std::size_t m = 0; m < 20; ++m) EXPECT_EQ(all.increment(6 + p, m), tail.increment(p, m));
    }
    EXPECT_THROW(sample_brownian(g, 0, 1), std::invalid_argument);
}

TEST(Paths, IncrementMoments) {
    const TimeGrid g(2.0, 8);
    const auto b = sample_brownian(g, 40000, 3);
    double s = 0.0, s2 = 0.0;
    for (double x : b.all_increments()) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(b.all_increments().size());
    EXPECT_NEAR(s / n, 0.0, 5.0 * std::sqrt(g.dt() / n));
    EXPECT_NEAR(s2 / n / g.dt(), 1.0, 0.02);
}

TEST(Paths, BrownianAccumulatesLeftToRight) {
    const TimeGrid g(1.0, 5);
    const auto b = sample_brownian(g, 2, 1);
    const auto w = b.brownian_path(1);
    EXPECT_EQ(w[0], 0.0);
    double acc = 0.0;
    for (std::size_t m = 0; m < 5; ++m) {
        acc += b.increment(1, m);
        EXPECT_EQ(w[m + 1], acc);
        EXPECT_EQ(b.brownian(1, m + 1), acc);
    }
}

TEST(Paths, NegatedAndRefined) {
    const TimeGrid g(1.0, 6);
    const auto b = sample_brownian(g, 3, 5);
    const auto n = b.negated();
    EXPECT_EQ(n.increment(2, 4), -b.increment(2, 4));
    const auto r = b.refined(17);
    EXPECT_EQ(r.n_steps(), 12u);
    EXPECT_DOUBLE_EQ(r.dt(), g.dt() / 2);
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t m = 0; m < 6; ++m) {
            EXPECT_NEAR(r.increment(p, 2 * m) + r.increment(p, 2 * m + 1), b.increment(p, m), 1e-15);
        }
    }
}

TEST(Paths, FrictionlessPathFollowsEndowment) {
    const auto m = fixtures::quadratic_market(1.0);
    const TimeGrid g(1.0, 4);
    const auto b = sample_brownian(g, 2, 7);
    const auto f = frictionless_path(m, b);
    EXPECT_EQ(f.a_bar, m.a_bar());
    for (std::size_t k = 0; k <= 4; ++k) EXPECT_DOUBLE_EQ(f.at(1, k), m.phi_bar(b.brownian(1, k)));
}
