#pragma once

#include "hedge/market.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <string>

namespace hedge {

/// State of a block of paths at grid index m, as seen by a strategy.
///
/// dw_prev holds the increment W_{t_m} - W_{t_{m-1}} that led to this state
/// (zeros at m = 0). No future increment is ever exposed.
struct StepBatch {
    std::size_t m = 0;
    double t = 0.0;
    std::span<const double> w;
    std::span<const double> phi;
    std::span<const double> xi;
    std::span<const double> phi_bar;
    std::span<const double> dw_prev;

    std::size_t size() const noexcept { return w.size(); }
};

/// Per-evaluation mutable state of a strategy (e.g. a backward process or a
/// running stochastic integral) for a fixed block of paths.
class EngineSession {
public:
    virtual ~EngineSession() = default;
    /// Writes the trading rate for every path of the block at step.m < N.
    virtual void rates(const StepBatch& step, std::span<double> out) = 0;
};

/// A trading strategy on a fixed grid. Engines are immutable; any number of
/// sessions may run concurrently.
class StrategyEngine {
public:
    virtual ~StrategyEngine() = default;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<EngineSession> start(std::size_t n_paths) const = 0;
    /// Throws std::invalid_argument if the engine was built for another grid.
    virtual void check_grid(const TimeGrid& grid) const { (void)grid; }
};

/// Never trades.
class ZeroEngine final : public StrategyEngine {
public:
    std::string name() const override { return "zero"; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;
};

/// Trades at a fixed rate c on every path.
class ConstantRateEngine final : public StrategyEngine {
public:
    explicit ConstantRateEngine(double rate) : rate_(rate) {}
    std::string name() const override { return "constant"; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;

private:
    double rate_;
};

/// Throws std::invalid_argument unless a and b are the same grid.
void require_grid(const TimeGrid& expected, const TimeGrid& actual, const std::string& engine);

}  // namespace hedge
