#include "hedge/training.hpp"

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hedge {

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2 (batchnorm)");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(sgd_fraction >= 0.0 && sgd_fraction <= 1.0)) throw std::invalid_argument("sgd_fraction must lie in [0, 1]");
    if (sgd_fraction > 0.0 && !(sgd_lr > 0.0)) throw std::invalid_argument("sgd_lr must be positive");
    for (const auto& s : lr_schedule) {
        if (!(s.fraction >= 0.0 && s.fraction <= 1.0) || !(s.factor > 0.0)) {
            throw std::invalid_argument("lr_schedule entries need fraction in [0, 1] and factor > 0");
        }
    }
}

double TrainConfig::lr_at(std::size_t epoch) const {
    if (sgd_at(epoch)) return sgd_lr;
    double factor = 1.0;
    const double progress = epochs == 0 ? 0.0 : static_cast<double>(epoch) / static_cast<double>(epochs);
    for (const auto& s : lr_schedule) {
        if (progress >= s.fraction) factor = s.factor;
    }
    return adam.lr * factor;
}

bool TrainConfig::sgd_at(std::size_t epoch) const {
    if (sgd_fraction <= 0.0) return false;
    const auto adam_epochs = static_cast<std::size_t>(std::llround((1.0 - sgd_fraction) * static_cast<double>(epochs)));
    return epoch >= adam_epochs;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "epoch,loss,raw_loss,lr,optimizer,wall_seconds\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << r.loss << ',' << r.raw_loss << ',' << r.lr << ',' << (r.sgd ? "sgd" : "adam") << ','
            << r.wall_seconds << '\n';
    }
}

TrainingDriver::TrainingDriver(const TrainConfig& config)
    : config_(config), optimizer_(nn::Optimizer::adam(config.adam)), start_(std::chrono::steady_clock::now()) {
    config_.validate();
}

PathBatch TrainingDriver::batch(const TimeGrid& grid, std::size_t epoch) const {
    return sample_brownian(grid, config_.batch_size, derive_seed(config_.seed, epoch));
}

void TrainingDriver::step(std::size_t epoch, const std::vector<ad::Matrix*>& params,
                          const std::vector<ad::Matrix>& grads, double loss, double raw_loss) {
    if (!std::isfinite(loss)) {
        throw NonFiniteError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    const bool sgd = config_.sgd_at(epoch);
    if (sgd && optimizer_.algorithm() != nn::Algorithm::sgd) optimizer_.switch_to_sgd(config_.sgd_lr);
    optimizer_.set_lr(config_.lr_at(epoch));
    try {
        optimizer_.step(params, grads);
    } catch (const NonFiniteError&) {
        throw NonFiniteError("non-finite gradient at epoch " + std::to_string(epoch));
    }
    LossRecord r;
    r.epoch = epoch;
    r.loss = loss;
    r.raw_loss = raw_loss;
    r.lr = optimizer_.lr();
    r.sgd = sgd;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    history_.push_back(r);
}

}  // namespace hedge
