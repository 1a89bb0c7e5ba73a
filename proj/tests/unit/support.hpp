#pragma once

#include "hedge/market.hpp"

#include <cmath>
#include <filesystem>
#include <string>

namespace hedge::fixtures {

inline MarketParams quadratic_market(double horizon) { return calibrated_market(CostKind::quadratic, horizon); }
inline MarketParams power_market(double horizon) { return calibrated_market(CostKind::power, horizon); }
inline CostSpec quadratic_cost() { return calibrated_cost(CostKind::quadratic); }
inline CostSpec power_cost() { return calibrated_cost(CostKind::power); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("hedge_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace hedge::fixtures
