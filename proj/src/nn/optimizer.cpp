#include "hedge/nn/optimizer.hpp"

#include "hedge/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace hedge::nn {

Optimizer Optimizer::adam(AdamConfig config) {
    Optimizer o;
    o.algorithm_ = Algorithm::adam;
    o.adam_ = config;
    o.lr_ = config.lr;
    return o;
}

Optimizer Optimizer::sgd(double lr) {
    Optimizer o;
    o.algorithm_ = Algorithm::sgd;
    o.lr_ = lr;
    return o;
}

void Optimizer::switch_to_sgd(double lr) {
    algorithm_ = Algorithm::sgd;
    lr_ = lr;
}

void Optimizer::restore(Algorithm algorithm, AdamConfig adam, double lr, std::uint64_t steps,
                        std::uint64_t adam_steps, std::vector<Matrix> m, std::vector<Matrix> v) {
    algorithm_ = algorithm;
    adam_ = adam;
    lr_ = lr;
    steps_ = steps;
    adam_steps_ = adam_steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

void Optimizer::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::require_same_shape(*params[k], grads[k], "optimizer gradient");
        if (!grads[k].all_finite()) throw NonFiniteError("optimizer received a non-finite gradient");
    }

    if (algorithm_ == Algorithm::sgd) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& p = *params[k];
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * grads[k][i];
        }
        ++steps_;
        return;
    }

    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->rows(), p->cols(), 0.0);
            v_.emplace_back(p->rows(), p->cols(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("optimizer: moment buffers are not congruent");
    for (std::size_t k = 0; k < params.size(); ++k) ad::require_same_shape(*params[k], m_[k], "optimizer moments");

    ++adam_steps_;
    ++steps_;
    const double b1 = adam_.beta1;
    const double b2 = adam_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        Matrix& m = m_[k];
        Matrix& v = v_[k];
        const Matrix& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_.eps);
        }
    }
}

}  // namespace hedge::nn
