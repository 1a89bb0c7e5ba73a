#pragma once

#include "hedge/ad/matrix.hpp"

#include <cstdint>
#include <vector>

namespace hedge::nn {

using ad::Matrix;

enum class Algorithm { adam, sgd };

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;
};

/// Adam or plain SGD over a list of parameter matrices. Moment buffers are
/// allocated on the first step and must stay shape-congruent afterwards.
class Optimizer {
public:
    static Optimizer adam(AdamConfig config = {});
    static Optimizer sgd(double lr);

    /// Applies one update. Throws NonFiniteError (leaving params untouched) if
    /// any gradient entry is NaN or infinite, std::invalid_argument on shape
    /// mismatch.
    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

    /// Switches to SGD with the given rate, keeping the step counter.
    void switch_to_sgd(double lr);

    Algorithm algorithm() const noexcept { return algorithm_; }
    const AdamConfig& adam_config() const noexcept { return adam_; }
    double lr() const noexcept { return lr_; }
    void set_lr(double lr) noexcept { lr_ = lr; }
    std::uint64_t step_count() const noexcept { return steps_; }
    /// Steps taken in Adam mode; drives the bias correction.
    std::uint64_t adam_step_count() const noexcept { return adam_steps_; }
    const std::vector<Matrix>& first_moment() const noexcept { return m_; }
    const std::vector<Matrix>& second_moment() const noexcept { return v_; }

    /// Restores a saved state (used by checkpoints).
    void restore(Algorithm algorithm, AdamConfig adam, double lr, std::uint64_t steps, std::uint64_t adam_steps,
                 std::vector<Matrix> m, std::vector<Matrix> v);

private:
    Algorithm algorithm_ = Algorithm::adam;
    AdamConfig adam_;
    double lr_ = 1e-3;
    std::uint64_t steps_ = 0;
    std::uint64_t adam_steps_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace hedge::nn
