#pragma once

#include "hedge/asymptotics.hpp"
#include "hedge/deep_hedging.hpp"
#include "hedge/market.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>

namespace hedge {

/// M = min{m : T - t_m < kappa sqrt(lambda)}, or N if no grid time before T qualifies.
/// Throws std::invalid_argument unless kappa > 0 and lambda >= 0.
std::size_t switch_index(const TimeGrid& grid, double kappa, double lambda);

/// kappa whose learned window covers the final max(1 day, 10 dt) of the grid.
double default_kappa(const TimeGrid& grid, double lambda);

/// Leading-order strategy on steps m < M, deep-hedging networks on [M, N).
struct PastingConfig {
    double kappa = 0.0;  // nonpositive selects default_kappa
    std::shared_ptr<const LeadingOrderEngine> leading;

    double resolved_kappa(const TimeGrid& grid, const CostSpec& cost) const;
    std::size_t switch_step(const TimeGrid& grid, const CostSpec& cost) const;
};

/// Randomly initialized terminal-phase networks; network of step m uses the
/// same substream as in a plain deep-hedging model, so M = 0 reproduces it.
DeepHedgeModel pasted_model(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                            const PastingConfig& config, std::uint64_t seed);
/// Zero terminal-phase networks: the strategy stops trading at the seam.
DeepHedgeModel untrained_pasted_model(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                      const PastingConfig& config);

/// Evaluation engine named "pasting".
DeepHedgeEngine pasted_engine(DeepHedgeModel model);

}  // namespace hedge
