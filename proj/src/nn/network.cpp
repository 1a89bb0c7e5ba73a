#include "hedge/nn/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hedge::nn {

NetSpec NetSpec::fbsde() {
    NetSpec s;
    s.input_dim = 2;
    s.hidden = {15};
    s.output_dim = 1;
    s.batchnorm = {true};
    return s;
}

NetSpec NetSpec::deep_hedging() {
    NetSpec s;
    s.input_dim = 3;
    s.hidden = {10, 15, 10};
    s.output_dim = 1;
    s.batchnorm = {true, true, true};
    return s;
}

NetSpec NetSpec::linear(std::size_t in, std::size_t out) {
    NetSpec s;
    s.input_dim = in;
    s.output_dim = out;
    return s;
}

void NetSpec::validate() const {
    if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("network dimensions must be positive");
    if (batchnorm.size() != hidden.size()) throw std::invalid_argument("one batchnorm flag per hidden layer required");
    for (auto h : hidden) {
        if (h == 0) throw std::invalid_argument("hidden layer width must be positive");
    }
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw std::invalid_argument("bn momentum must lie in (0, 1]");
    if (!(bn_eps > 0.0)) throw std::invalid_argument("bn eps must be positive");
}

namespace {

std::size_t layer_in(const NetSpec& spec, std::size_t l) { return l == 0 ? spec.input_dim : spec.hidden[l - 1]; }

std::size_t layer_out(const NetSpec& spec, std::size_t l) {
    return l < spec.hidden.size() ? spec.hidden[l] : spec.output_dim;
}

}  // namespace

ParamStore ParamStore::zeros(const NetSpec& spec) {
    spec.validate();
    ParamStore p;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        p.linear.push_back({Matrix(layer_out(spec, l), layer_in(spec, l)), Matrix(1, layer_out(spec, l))});
    }
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        BnLayer b;
        b.enabled = spec.batchnorm[l];
        if (b.enabled) {
            const std::size_t d = spec.hidden[l];
            b.scale = Matrix(1, d, 0.0);
            b.shift = Matrix(1, d, 0.0);
            b.running_mean = Matrix(1, d, 0.0);
            b.running_var = Matrix(1, d, 1.0);
        }
        p.bn.push_back(std::move(b));
    }
    return p;
}

ParamStore ParamStore::initialized(const NetSpec& spec, Xoshiro256pp& gen) {
    ParamStore p = zeros(spec);
    for (auto& layer : p.linear) {
        const double fan_in = static_cast<double>(layer.weight.cols());
        const double fan_out = static_cast<double>(layer.weight.rows());
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] = a * (2.0 * gen.uniform() - 1.0);
    }
    for (auto& b : p.bn) {
        if (b.enabled) b.scale.fill(1.0);
    }
    return p;
}

std::vector<Matrix*> ParamStore::trainable() {
    std::vector<Matrix*> out;
    for (std::size_t l = 0; l < linear.size(); ++l) {
        out.push_back(&linear[l].weight);
        out.push_back(&linear[l].bias);
        if (l < bn.size() && bn[l].enabled) {
            out.push_back(&bn[l].scale);
            out.push_back(&bn[l].shift);
        }
    }
    return out;
}

std::vector<const Matrix*> ParamStore::trainable() const {
    std::vector<const Matrix*> out;
    for (auto* m : const_cast<ParamStore*>(this)->trainable()) out.push_back(m);
    return out;
}

std::size_t ParamStore::n_trainable() const {
    std::size_t n = 0;
    for (const auto* m : trainable()) n += m->size();
    return n;
}

void ParamStore::check_shapes(const NetSpec& spec) const {
    if (linear.size() != spec.n_layers() || bn.size() != spec.hidden.size()) {
        throw std::invalid_argument("parameter store has the wrong number of layers");
    }
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        const auto& L = linear[l];
        if (L.weight.rows() != layer_out(spec, l) || L.weight.cols() != layer_in(spec, l) || L.bias.rows() != 1 ||
            L.bias.cols() != layer_out(spec, l)) {
            throw std::invalid_argument("parameter shape mismatch in layer " + std::to_string(l));
        }
    }
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
        if (bn[l].enabled != spec.batchnorm[l]) throw std::invalid_argument("batchnorm flags disagree with spec");
        if (bn[l].enabled) {
            const std::size_t d = spec.hidden[l];
            for (const Matrix* m : {&bn[l].scale, &bn[l].shift, &bn[l].running_mean, &bn[l].running_var}) {
                if (m->rows() != 1 || m->cols() != d) throw std::invalid_argument("batchnorm parameter shape mismatch");
            }
        }
    }
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (linear.size() != other.linear.size() || bn.size() != other.bn.size()) return false;
    for (std::size_t l = 0; l < linear.size(); ++l) {
        if (!(linear[l].weight == other.linear[l].weight) || !(linear[l].bias == other.linear[l].bias)) return false;
    }
    for (std::size_t l = 0; l < bn.size(); ++l) {
        const auto& a = bn[l];
        const auto& b = other.bn[l];
        if (a.enabled != b.enabled || !(a.scale == b.scale) || !(a.shift == b.shift) ||
            !(a.running_mean == b.running_mean) || !(a.running_var == b.running_var)) {
            return false;
        }
    }
    return true;
}

BoundNet bind(const NetSpec& spec, const ParamStore& params, ad::Tape& tape, NodeId input, Mode mode) {
    if (tape.value(input).cols() != spec.input_dim) {
        throw std::invalid_argument("network input width " + std::to_string(tape.value(input).cols()) +
                                    " does not match spec input_dim " + std::to_string(spec.input_dim));
    }
    if (mode == Mode::train && tape.value(input).rows() < 2) {
        throw std::invalid_argument("train-mode forward needs a batch of at least 2 rows");
    }
    BoundNet net;
    net.stats.resize(spec.hidden.size());
    NodeId h = input;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        const NodeId w = tape.variable(params.linear[l].weight);
        const NodeId b = tape.variable(params.linear[l].bias);
        net.params.push_back(w);
        net.params.push_back(b);
        h = tape.affine(h, w, b);
        if (l == spec.hidden.size()) break;
        const BnLayer& bn = params.bn[l];
        if (bn.enabled) {
            const NodeId sc = tape.variable(bn.scale);
            const NodeId sh = tape.variable(bn.shift);
            net.params.push_back(sc);
            net.params.push_back(sh);
            if (mode == Mode::train) {
                h = tape.batchnorm_train(h, sc, sh, spec.bn_eps, &net.stats[l]);
            } else {
                h = tape.batchnorm_eval(h, sc, sh, bn.running_mean, bn.running_var, spec.bn_eps);
            }
        }
        h = tape.relu(h);
    }
    net.output = h;
    return net;
}

void update_running_stats(const NetSpec& spec, ParamStore& params, const std::vector<ad::BatchStats>& stats,
                          std::size_t batch_rows) {
    if (batch_rows < 2) throw std::invalid_argument("running statistics need at least 2 rows");
    const double unbias = static_cast<double>(batch_rows) / static_cast<double>(batch_rows - 1);
    const double mom = spec.bn_momentum;
    for (std::size_t l = 0; l < params.bn.size(); ++l) {
        BnLayer& bn = params.bn[l];
        if (!bn.enabled) continue;
        const auto& s = stats.at(l);
        for (std::size_t c = 0; c < bn.running_mean.size(); ++c) {
            bn.running_mean[c] = (1.0 - mom) * bn.running_mean[c] + mom * s.mean[c];
            bn.running_var[c] = (1.0 - mom) * bn.running_var[c] + mom * s.var[c] * unbias;
        }
    }
}

Matrix infer(const NetSpec& spec, const ParamStore& params, const Matrix& inputs) {
    if (inputs.cols() != spec.input_dim) throw std::invalid_argument("network input width does not match spec");
    const std::size_t n = inputs.rows();
    Matrix h = inputs;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        const Matrix& w = params.linear[l].weight;
        const Matrix& b = params.linear[l].bias;
        const std::size_t in = w.cols();
        const std::size_t out = w.rows();
        Matrix y(n, out);
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = h.data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double* wo = w.data() + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
                y(r, o) = acc;
            }
        }
        if (l < spec.hidden.size()) {
            const BnLayer& bn = params.bn[l];
            if (bn.enabled) {
                for (std::size_t o = 0; o < out; ++o) {
                    const double inv_std = 1.0 / std::sqrt(bn.running_var[o] + spec.bn_eps);
                    for (std::size_t r = 0; r < n; ++r) {
                        const double xhat = (y(r, o) - bn.running_mean[o]) * inv_std;
                        y(r, o) = bn.scale[o] * xhat + bn.shift[o];
                    }
                }
            }
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
        }
        h = std::move(y);
    }
    return h;
}

Forward forward(const NetSpec& spec, ParamStore& params, const Matrix& inputs, Mode mode) {
    spec.validate();
    params.check_shapes(spec);
    Forward f;
    f.input = f.tape.variable(inputs);
    f.net = bind(spec, params, f.tape, f.input, mode);
    f.output = f.tape.value(f.net.output);
    if (mode == Mode::train) update_running_stats(spec, params, f.net.stats, inputs.rows());
    return f;
}

Gradients backward(Forward& fwd, const Matrix& output_grad) {
    ad::require_same_shape(fwd.output, output_grad, "network backward");
    fwd.tape.backward(fwd.net.output, output_grad);
    Gradients g;
    g.params = collect_grads(fwd.tape, fwd.net);
    g.input = fwd.tape.grad(fwd.input);
    if (g.input.empty()) g.input = Matrix(fwd.tape.value(fwd.input).rows(), fwd.tape.value(fwd.input).cols());
    return g;
}

std::vector<Matrix> collect_grads(const ad::Tape& tape, const BoundNet& net) {
    std::vector<Matrix> out;
    out.reserve(net.params.size());
    for (NodeId id : net.params) {
        const Matrix& g = tape.grad(id);
        out.push_back(g.empty() ? Matrix(tape.value(id).rows(), tape.value(id).cols()) : g);
    }
    return out;
}

}  // namespace hedge::nn
