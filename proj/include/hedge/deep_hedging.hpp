#pragma once

#include "hedge/asymptotics.hpp"
#include "hedge/engine.hpp"
#include "hedge/market.hpp"
#include "hedge/nn/network.hpp"
#include "hedge/nn/optimizer.hpp"
#include "hedge/scales.hpp"
#include "hedge/training.hpp"

#include <json.hpp>

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace hedge {

/// Per-step policy networks phi_dot_{t_m} = (s/T) F_m(t_m/T, W_{t_m}/sqrt(T), phi_{t_m}/s).
///
/// Steps m < first_step follow the leading-order strategy instead (pasting);
/// nets[k] is the network of step first_step + k. A plain deep-hedging model
/// has first_step = 0.
struct DeepHedgeModel {
    nn::NetSpec spec = nn::NetSpec::deep_hedging();
    std::vector<nn::ParamStore> nets;
    std::size_t first_step = 0;
    TimeGrid grid;
    MarketParams market;
    CostSpec cost;
    std::shared_ptr<const LeadingOrderEngine> leading;  // required when first_step > 0

    static DeepHedgeModel initialized(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                      std::uint64_t seed, std::size_t first_step = 0,
                                      std::shared_ptr<const LeadingOrderEngine> leading = nullptr);
    static DeepHedgeModel zeros(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                std::size_t first_step = 0,
                                std::shared_ptr<const LeadingOrderEngine> leading = nullptr);

    const nn::ParamStore& net(std::size_t m) const { return nets.at(m - first_step); }
    Scales scales() const { return Scales::make(market, cost); }
    void validate() const;
};

/// Rollout in market units, row-major per path.
struct HedgeRollout {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> rates;  // [n x N]
    std::vector<double> phi;    // [n x (N+1)]
    std::vector<double> goal;   // per-path discretized goal J
    double loss = 0.0;          // normalized training loss -mean(J) / goal scale

    double rate_at(std::size_t p, std::size_t m) const { return rates[p * n_steps + m]; }
    double phi_at(std::size_t p, std::size_t m) const { return phi[p * (n_steps + 1) + m]; }
};

/// phi_0 = phi_{0-}; phi_{m+1} = phi_m + rate_m dt; the goal averages
///   phi mu - (gamma/2)(sigma phi + xi_t)^2 - lambda_t G(rate)
/// over the N+1 grid points with rate_N = 0, exactly as the evaluator does.
HedgeRollout rollout(const DeepHedgeModel& model, const PathBatch& batch, nn::Mode mode);
/// -mean(J) in market units.
double goal_loss(const HedgeRollout& rollout);

struct DeepHedgeTrainResult {
    std::vector<LossRecord> history;
    nn::Optimizer optimizer;
};

/// Adam then (config.sgd_fraction) SGD on -mean(J)/goal scale. Only the
/// networks receive gradients; leading-order steps are plain arithmetic.
DeepHedgeTrainResult train(DeepHedgeModel& model, const TrainConfig& config);

/// Same horizon with twice the steps; step m' uses the network of step m'/2.
DeepHedgeModel refine_nearest(const DeepHedgeModel& model);

/// Eval-mode strategy (batchnorm running statistics).
class DeepHedgeEngine final : public StrategyEngine {
public:
    explicit DeepHedgeEngine(DeepHedgeModel model, std::string name = "deep_hedging");
    std::string name() const override { return name_; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;
    void check_grid(const TimeGrid& grid) const override { require_grid(model_.grid, grid, name_); }
    const DeepHedgeModel& model() const noexcept { return model_; }

private:
    DeepHedgeModel model_;
    std::string name_;
};

nlohmann::json to_json(const DeepHedgeModel& model);
/// `leading` must be supplied for checkpoints with first_step > 0.
DeepHedgeModel deep_hedge_from_json(const nlohmann::json& j,
                                    std::shared_ptr<const LeadingOrderEngine> leading = nullptr);

}  // namespace hedge
