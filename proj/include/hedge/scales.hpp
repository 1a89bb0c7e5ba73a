#pragma once

#include "hedge/market.hpp"

namespace hedge {

/// Affine units used by the learning engines so that network inputs, outputs
/// and losses are O(1) at the calibrated magnitudes (positions ~1e11,
/// gamma ~1e-13).
struct Scales {
    double position = 1.0;  // s
    double brownian = 1.0;  // sqrt(T)
    double time = 1.0;      // T
    double rate = 1.0;      // s / T
    double y = 1.0;         // lambda G'(s / T): marginal cost of trading the whole position over T
    double z = 1.0;         // y / sqrt(T)
    double goal = 1.0;      // gamma sigma^2 abar^2 T, or gamma sigma^2 s^2 when abar = 0

    static Scales make(const MarketParams& market, const CostSpec& cost);
};

}  // namespace hedge
