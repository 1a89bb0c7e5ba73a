#pragma once

#include "hedge/ad/matrix.hpp"
#include "hedge/engine.hpp"
#include "hedge/market.hpp"
#include "hedge/nn/network.hpp"
#include "hedge/nn/optimizer.hpp"
#include "hedge/scales.hpp"
#include "hedge/training.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace hedge {

/// Deep FBSDE solver state: the initial value Y_0 and one network per step
/// producing Z_{t_m} from (W_{t_m}/sqrt(T), Delta phi_{t_m}/s).
///
/// Y and Z are stored in the normalized units of Scales (Y / y, Z / z), so
/// in those units the trading rate is (s/T) (G')^{-1}(y_hat / Lambda_t).
struct FbsdeModel {
    nn::NetSpec spec = nn::NetSpec::fbsde();
    double y0 = 0.0;
    std::vector<nn::ParamStore> nets;
    TimeGrid grid;
    MarketParams market;
    CostSpec cost;

    /// y0 = 0 and randomly initialized networks (one substream per step).
    static FbsdeModel initialized(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                  std::uint64_t seed);
    /// y0 = 0 and all-zero networks.
    static FbsdeModel zeros(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid);

    Scales scales() const { return Scales::make(market, cost); }
    void validate() const;
};

/// Rollout in market units, row-major per path.
struct FbsdeRollout {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> delta;  // [n x (N+1)] Delta phi
    std::vector<double> y;      // [n x (N+1)] Y
    std::vector<double> z;      // [n x N]     Z
    std::vector<double> rates;  // [n x N]     (G')^{-1}(Y / lambda_t)
    double y_scale = 1.0;

    double y_at(std::size_t p, std::size_t m) const { return y[p * (n_steps + 1) + m]; }
    double delta_at(std::size_t p, std::size_t m) const { return delta[p * (n_steps + 1) + m]; }
    double rate_at(std::size_t p, std::size_t m) const { return rates[p * n_steps + m]; }
    double terminal_y(std::size_t p) const { return y_at(p, n_steps); }
};

struct TerminalLoss {
    double normalized = 0.0;  // mean (Y_T / y_scale)^2
    double raw = 0.0;         // mean Y_T^2
};

/// Runs the forward/backward recursion on a batch. Train mode uses batch
/// statistics (and does not touch the model). Throws NonFiniteError if a state
/// becomes NaN or infinite.
FbsdeRollout rollout(const FbsdeModel& model, const PathBatch& batch, nn::Mode mode);
TerminalLoss terminal_loss(const FbsdeRollout& rollout);

/// One optimizer update on the given batch; returns the loss before the update.
TerminalLoss train_step(FbsdeModel& model, const PathBatch& batch, nn::Optimizer& optimizer);

struct FbsdeTrainResult {
    std::vector<LossRecord> history;
    nn::Optimizer optimizer;  // final optimizer state, for checkpoints
};

/// Adam (optionally followed by SGD) on fresh batches per epoch.
FbsdeTrainResult train(FbsdeModel& model, const TrainConfig& config);

/// Eval-mode strategy: propagates Y along the evaluated path with the learned Z
/// and emits (G')^{-1}(Y / lambda_t).
class FbsdeEngine final : public StrategyEngine {
public:
    explicit FbsdeEngine(FbsdeModel model);
    std::string name() const override { return "fbsde"; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;
    void check_grid(const TimeGrid& grid) const override { require_grid(model_.grid, grid, name()); }
    const FbsdeModel& model() const noexcept { return model_; }

private:
    FbsdeModel model_;
};

nlohmann::json to_json(const FbsdeModel& model);
FbsdeModel fbsde_from_json(const nlohmann::json& j);

}  // namespace hedge
