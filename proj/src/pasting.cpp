#include "hedge/pasting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hedge {

std::size_t switch_index(const TimeGrid& grid, double kappa, double lambda) {
    if (!(kappa > 0.0)) throw std::invalid_argument("pasting kappa must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("pasting lambda must be nonnegative");
    const double threshold = kappa * std::sqrt(lambda);
    for (std::size_t m = 0; m < grid.n_steps(); ++m) {
        if (grid.horizon() - grid.time(m) < threshold) return m;
    }
    return grid.n_steps();
}

double default_kappa(const TimeGrid& grid, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("default pasting kappa needs lambda > 0");
    const double window = std::max(1.0, 10.0 * grid.dt());
    return (window + 0.5 * grid.dt()) / std::sqrt(lambda);
}

double PastingConfig::resolved_kappa(const TimeGrid& grid, const CostSpec& cost) const {
    return kappa > 0.0 ? kappa : default_kappa(grid, cost.lambda);
}

std::size_t PastingConfig::switch_step(const TimeGrid& grid, const CostSpec& cost) const {
    return switch_index(grid, resolved_kappa(grid, cost), cost.lambda);
}

DeepHedgeModel pasted_model(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                            const PastingConfig& config, std::uint64_t seed) {
    return DeepHedgeModel::initialized(market, cost, grid, seed, config.switch_step(grid, cost), config.leading);
}

DeepHedgeModel untrained_pasted_model(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                      const PastingConfig& config) {
    return DeepHedgeModel::zeros(market, cost, grid, config.switch_step(grid, cost), config.leading);
}

DeepHedgeEngine pasted_engine(DeepHedgeModel model) { return DeepHedgeEngine(std::move(model), "pasting"); }

}  // namespace hedge
