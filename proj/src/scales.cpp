#include "hedge/scales.hpp"

#include <cmath>

namespace hedge {

Scales Scales::make(const MarketParams& market, const CostSpec& cost) {
    Scales s;
    s.position = market.shares;
    s.time = market.horizon;
    s.brownian = std::sqrt(market.horizon);
    s.rate = market.shares / market.horizon;
    s.y = cost.lambda > 0.0 ? cost.lambda * cost_marginal(cost, s.rate) : 1.0;
    s.z = s.y / s.brownian;
    const double gs2 = market.gamma * market.sigma * market.sigma;
    const double abar = market.a_bar();
    s.goal = abar != 0.0 ? gs2 * abar * abar * market.horizon : gs2 * market.shares * market.shares;
    return s;
}

}  // namespace hedge
