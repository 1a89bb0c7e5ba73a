#pragma once

#include "hedge/ad/matrix.hpp"
#include "hedge/market.hpp"
#include "hedge/nn/optimizer.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hedge {

/// Multiply the Adam learning rate by `factor` from `fraction` of the epochs on.
struct LrStep {
    double fraction = 1.0;
    double factor = 1.0;
};

struct TrainConfig {
    std::size_t epochs = 2000;
    std::size_t batch_size = 256;
    std::uint64_t seed = 1;
    nn::AdamConfig adam{0.9, 0.999, 1e-8, 1e-2};
    std::vector<LrStep> lr_schedule{{0.4, 0.1}, {0.8, 0.01}};
    double sgd_fraction = 0.1;  // trailing share of epochs run with plain SGD
    double sgd_lr = 1e-3;

    void validate() const;
    double lr_at(std::size_t epoch) const;
    bool sgd_at(std::size_t epoch) const;
};

struct LossRecord {
    std::size_t epoch = 0;
    double loss = 0.0;      // normalized training loss
    double raw_loss = 0.0;  // same loss in market units
    double lr = 0.0;
    bool sgd = false;
    double wall_seconds = 0.0;
};

/// CSV with header epoch,loss,raw_loss,lr,optimizer,wall_seconds.
void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history);

/// Shared epoch loop plumbing: per-epoch path batches, learning-rate schedule,
/// Adam-to-SGD switch, divergence detection and the loss history.
class TrainingDriver {
public:
    explicit TrainingDriver(const TrainConfig& config);

    /// Fresh Brownian batch for an epoch, keyed by (seed, epoch).
    PathBatch batch(const TimeGrid& grid, std::size_t epoch) const;

    /// Records the epoch and applies one optimizer update. Throws NonFiniteError
    /// naming the epoch if the loss or any gradient is not finite.
    void step(std::size_t epoch, const std::vector<ad::Matrix*>& params, const std::vector<ad::Matrix>& grads,
              double loss, double raw_loss);

    const std::vector<LossRecord>& history() const noexcept { return history_; }
    std::vector<LossRecord> take_history() { return std::move(history_); }
    const nn::Optimizer& optimizer() const noexcept { return optimizer_; }

private:
    TrainConfig config_;
    nn::Optimizer optimizer_;
    std::vector<LossRecord> history_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace hedge
