#pragma once

#include "hedge/market.hpp"

#include <json.hpp>

namespace hedge {

// JSON forms of the market-level types. Keys match the config file sections:
//   market {"mu", "sigma", "gamma", "shares", "xi_vol", "phi_init", "horizon"}
//   cost   {"kind": "quadratic"|"power", "q", "lambda", "liquidity"}
//   grid   {"horizon", "n_steps"}
// Only constant liquidity can be written.

nlohmann::json to_json(const MarketParams& market);
nlohmann::json to_json(const CostSpec& cost);
nlohmann::json to_json(const TimeGrid& grid);

MarketParams market_from_json(const nlohmann::json& j);
CostSpec cost_from_json(const nlohmann::json& j);
TimeGrid grid_from_json(const nlohmann::json& j);

}  // namespace hedge
