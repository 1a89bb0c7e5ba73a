#pragma once

#include "hedge/ad/matrix.hpp"
#include "hedge/ad/tape.hpp"
#include "hedge/rng.hpp"

#include <cstddef>
#include <vector>

namespace hedge::nn {

using ad::Matrix;
using ad::NodeId;

/// Fully connected ReLU network. Each hidden layer is linear -> [batchnorm] -> ReLU;
/// the output layer is linear.
struct NetSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 1;
    std::vector<bool> batchnorm;  // one flag per hidden layer
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    /// 2 -> [15] -> 1 with batchnorm; inputs (W, Delta phi).
    static NetSpec fbsde();
    /// 3 -> [10, 15, 10] -> 1 with batchnorm; inputs (t, W, phi).
    static NetSpec deep_hedging();
    /// No hidden layers: a single affine map.
    static NetSpec linear(std::size_t in, std::size_t out);

    void validate() const;
    std::size_t n_layers() const noexcept { return hidden.size() + 1; }
    bool operator==(const NetSpec&) const = default;
};

struct LinearLayer {
    Matrix weight;  // [out x in]
    Matrix bias;    // [1 x out]
};

struct BnLayer {
    bool enabled = false;
    Matrix scale;
    Matrix shift;
    Matrix running_mean;
    Matrix running_var;
};

/// Parameters of one network. trainable() lists, layer by layer, weight, bias,
/// then BN scale and shift where present; gradients and optimizer buffers use
/// the same order.
struct ParamStore {
    std::vector<LinearLayer> linear;
    std::vector<BnLayer> bn;  // one per hidden layer

    static ParamStore zeros(const NetSpec& spec);
    /// Weights uniform in +-sqrt(6/(fan_in + fan_out)), biases 0, BN scale 1, shift 0.
    static ParamStore initialized(const NetSpec& spec, Xoshiro256pp& gen);

    std::vector<Matrix*> trainable();
    std::vector<const Matrix*> trainable() const;
    std::size_t n_trainable() const;

    /// Throws std::invalid_argument unless every shape matches spec.
    void check_shapes(const NetSpec& spec) const;
    bool operator==(const ParamStore&) const;
};

enum class Mode { train, eval };

/// A network instantiated on a tape.
struct BoundNet {
    NodeId output = 0;
    std::vector<NodeId> params;            // congruent with ParamStore::trainable()
    std::vector<ad::BatchStats> stats;     // train-mode batch statistics per BN layer (empty entries otherwise)
};

/// Records the network on the tape, reading `input` (a node of width input_dim).
/// Parameters become tape variables. Train mode uses batch statistics and
/// requires at least two rows.
BoundNet bind(const NetSpec& spec, const ParamStore& params, ad::Tape& tape, NodeId input, Mode mode);

/// Exponential update of BN running statistics from train-mode batch stats,
/// using the unbiased variance estimate.
void update_running_stats(const NetSpec& spec, ParamStore& params, const std::vector<ad::BatchStats>& stats,
                          std::size_t batch_rows);

/// Eval-mode forward without a tape, with the same arithmetic as bind().
Matrix infer(const NetSpec& spec, const ParamStore& params, const Matrix& inputs);

/// Standalone forward pass: owns its tape. In train mode the running
/// statistics of params are updated.
struct Forward {
    ad::Tape tape;
    NodeId input = 0;
    BoundNet net;
    Matrix output;
};

struct Gradients {
    std::vector<Matrix> params;  // congruent with ParamStore::trainable()
    Matrix input;
};

Forward forward(const NetSpec& spec, ParamStore& params, const Matrix& inputs, Mode mode);
/// Vector-Jacobian product for output_grad of the forward output's shape.
Gradients backward(Forward& fwd, const Matrix& output_grad);

/// Collects the gradients of bound parameters after tape.backward(); missing
/// gradients are returned as zeros.
std::vector<Matrix> collect_grads(const ad::Tape& tape, const BoundNet& net);

}  // namespace hedge::nn
