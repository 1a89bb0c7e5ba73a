#include "hedge/fbsde.hpp"

#include "hedge/errors.hpp"
#include "hedge/io.hpp"
#include "hedge/nn/checkpoint.hpp"
#include "hedge/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hedge {

using ad::Matrix;
using ad::NodeId;

FbsdeModel FbsdeModel::initialized(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                   std::uint64_t seed) {
    FbsdeModel model = zeros(market, cost, grid);
    for (std::size_t m = 0; m < grid.n_steps(); ++m) {
        auto gen = Xoshiro256pp::for_stream(seed, m);
        model.nets[m] = nn::ParamStore::initialized(model.spec, gen);
    }
    return model;
}

FbsdeModel FbsdeModel::zeros(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid) {
    FbsdeModel model;
    model.grid = grid;
    model.market = market;
    model.cost = cost;
    model.nets.assign(grid.n_steps(), nn::ParamStore::zeros(model.spec));
    model.validate();
    return model;
}

void FbsdeModel::validate() const {
    market.validate();
    cost.validate();
    if (!(cost.lambda > 0.0)) throw std::invalid_argument("FBSDE solver needs lambda > 0");
    spec.validate();
    if (spec.input_dim != 2 || spec.output_dim != 1) throw std::invalid_argument("FBSDE networks map 2 inputs to 1");
    if (nets.size() != grid.n_steps()) throw std::invalid_argument("FBSDE model needs one network per step");
    for (const auto& n : nets) n.check_shapes(spec);
}

namespace {

struct Constants {
    double inv_sqrt_t;
    double inv_s;
    double y_drift;  // gamma sigma^2 s dt / y-scale
    double d_rate;   // dt / T
};

Constants constants(const FbsdeModel& model, const Scales& sc) {
    const double dt = model.grid.dt();
    const double gs2 = model.market.gamma * model.market.sigma * model.market.sigma;
    return {1.0 / sc.brownian, 1.0 / sc.position, gs2 * sc.position * dt / sc.y, dt / sc.time};
}

// 1 / Lambda_t per row, or an empty matrix when Lambda is identically 1.
Matrix inverse_liquidity(const CostSpec& cost, double t, const Matrix& w) {
    if (cost.liquidity.is_constant() && cost.liquidity.level() == 1.0) return {};
    Matrix out(w.rows(), 1);
    for (std::size_t i = 0; i < w.rows(); ++i) out[i] = 1.0 / cost.liquidity.at(t, w[i]);
    return out;
}

struct Recorded {
    NodeId y0 = 0;
    std::vector<nn::BoundNet> nets;
    std::vector<NodeId> y;
    std::vector<NodeId> d;
    std::vector<NodeId> z;
    std::vector<NodeId> rhat;
    NodeId loss = 0;
};

Recorded record(const FbsdeModel& model, const PathBatch& batch, ad::Tape& tape, nn::Mode mode) {
    if (batch.n_steps() != model.grid.n_steps() || batch.dt() != model.grid.dt()) {
        throw std::invalid_argument("FBSDE rollout: batch and model grids differ");
    }
    const std::size_t n = batch.n_paths();
    const std::size_t steps = model.grid.n_steps();
    const Scales sc = model.scales();
    const Constants k = constants(model, sc);
    const double abar = model.market.a_bar();
    const double bbar = model.market.b_bar();
    const double dt = model.grid.dt();
    const CostSpec& cost = model.cost;

    Recorded rec;
    rec.y0 = tape.variable(Matrix(1, 1, model.y0));
    NodeId y = tape.broadcast_rows(rec.y0, n);
    NodeId d = tape.constant(Matrix(n, 1, model.market.delta_phi0() * k.inv_s));
    Matrix w(n, 1, 0.0);
    rec.y.push_back(y);
    rec.d.push_back(d);
    for (std::size_t m = 0; m < steps; ++m) {
        const double t = model.grid.time(m);
        Matrix feat(n, 1);
        for (std::size_t i = 0; i < n; ++i) feat[i] = w[i] * k.inv_sqrt_t;
        const NodeId input = tape.hcat(tape.constant(std::move(feat)), d);
        rec.nets.push_back(nn::bind(model.spec, model.nets[m], tape, input, mode));
        const NodeId z = rec.nets.back().output;

        NodeId y_eff = y;
        Matrix inv_liq = inverse_liquidity(cost, t, w);
        if (!inv_liq.empty()) y_eff = tape.mul(y, tape.constant(std::move(inv_liq)));
        const NodeId rhat = tape.map(
            y_eff, [&cost](double v) { return cost_marginal_inverse(cost, v); },
            [&cost](double v) { return cost_marginal_inverse_derivative(cost, v); });

        Matrix shock(n, 1);
        Matrix dw_hat(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double dw = batch.increment(i, m);
            shock[i] = (-bbar * dt - abar * dw) * k.inv_s;
            dw_hat[i] = dw * k.inv_sqrt_t;
            w[i] += dw;
        }
        const NodeId y_next =
            tape.add(tape.add(y, tape.scale(d, k.y_drift)), tape.mul(z, tape.constant(std::move(dw_hat))));
        const NodeId d_next = tape.add(tape.add(d, tape.scale(rhat, k.d_rate)), tape.constant(std::move(shock)));
        rec.z.push_back(z);
        rec.rhat.push_back(rhat);
        y = y_next;
        d = d_next;
        rec.y.push_back(y);
        rec.d.push_back(d);
    }
    rec.loss = tape.mean(tape.square(y));
    return rec;
}

void require_finite(const ad::Tape& tape, const Recorded& rec) {
    for (std::size_t m = 0; m < rec.y.size(); ++m) {
        if (!tape.value(rec.y[m]).all_finite() || !tape.value(rec.d[m]).all_finite()) {
            throw NonFiniteError("FBSDE state became non-finite at step " + std::to_string(m));
        }
    }
    if (!tape.value(rec.loss).all_finite()) throw NonFiniteError("FBSDE terminal loss is non-finite");
}

std::vector<Matrix*> trainables(FbsdeModel& model, Matrix& y0) {
    std::vector<Matrix*> out{&y0};
    for (auto& net : model.nets) {
        for (auto* p : net.trainable()) out.push_back(p);
    }
    return out;
}

std::vector<Matrix> gradients(const ad::Tape& tape, const Recorded& rec) {
    std::vector<Matrix> out;
    const Matrix& gy = tape.grad(rec.y0);
    out.push_back(gy.empty() ? Matrix(1, 1) : gy);
    for (const auto& net : rec.nets) {
        for (auto& g : nn::collect_grads(tape, net)) out.push_back(std::move(g));
    }
    return out;
}

void update_stats(FbsdeModel& model, const Recorded& rec, std::size_t rows) {
    for (std::size_t m = 0; m < model.nets.size(); ++m) {
        nn::update_running_stats(model.spec, model.nets[m], rec.nets[m].stats, rows);
    }
}

}  // namespace

FbsdeRollout rollout(const FbsdeModel& model, const PathBatch& batch, nn::Mode mode) {
    model.validate();
    ad::Tape tape;
    const Recorded rec = record(model, batch, tape, mode);
    require_finite(tape, rec);

    const Scales sc = model.scales();
    FbsdeRollout out;
    out.n_paths = batch.n_paths();
    out.n_steps = model.grid.n_steps();
    out.y_scale = sc.y;
    const std::size_t n = out.n_paths;
    const std::size_t steps = out.n_steps;
    out.delta.resize(n * (steps + 1));
    out.y.resize(n * (steps + 1));
    out.z.resize(n * steps);
    out.rates.resize(n * steps);
    for (std::size_t m = 0; m <= steps; ++m) {
        const Matrix& yv = tape.value(rec.y[m]);
        const Matrix& dv = tape.value(rec.d[m]);
        for (std::size_t i = 0; i < n; ++i) {
            out.y[i * (steps + 1) + m] = yv[i] * sc.y;
            out.delta[i * (steps + 1) + m] = dv[i] * sc.position;
        }
        if (m == steps) break;
        const Matrix& zv = tape.value(rec.z[m]);
        const Matrix& rv = tape.value(rec.rhat[m]);
        for (std::size_t i = 0; i < n; ++i) {
            out.z[i * steps + m] = zv[i] * sc.z;
            out.rates[i * steps + m] = rv[i] * sc.rate;
        }
    }
    return out;
}

TerminalLoss terminal_loss(const FbsdeRollout& rollout) {
    if (rollout.n_paths == 0) throw std::invalid_argument("terminal_loss of an empty rollout");
    TerminalLoss l;
    for (std::size_t p = 0; p < rollout.n_paths; ++p) {
        const double y = rollout.terminal_y(p);
        const double yn = y / rollout.y_scale;
        l.raw += y * y;
        l.normalized += yn * yn;
    }
    l.raw /= static_cast<double>(rollout.n_paths);
    l.normalized /= static_cast<double>(rollout.n_paths);
    return l;
}

TerminalLoss train_step(FbsdeModel& model, const PathBatch& batch, nn::Optimizer& optimizer) {
    model.validate();
    ad::Tape tape;
    const Recorded rec = record(model, batch, tape, nn::Mode::train);
    require_finite(tape, rec);
    const double loss = tape.value(rec.loss)[0];
    tape.backward(rec.loss);
    Matrix y0(1, 1, model.y0);
    optimizer.step(trainables(model, y0), gradients(tape, rec));
    model.y0 = y0[0];
    update_stats(model, rec, batch.n_paths());
    const double ys = model.scales().y;
    return {loss, loss * ys * ys};
}

FbsdeTrainResult train(FbsdeModel& model, const TrainConfig& config) {
    model.validate();
    TrainingDriver driver(config);
    const double ys = model.scales().y;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const PathBatch batch = driver.batch(model.grid, epoch);
        ad::Tape tape;
        const Recorded rec = record(model, batch, tape, nn::Mode::train);
        const double loss = tape.value(rec.loss)[0];
        if (!std::isfinite(loss)) {
            throw NonFiniteError("FBSDE training diverged: terminal loss is non-finite at epoch " +
                                 std::to_string(epoch));
        }
        tape.backward(rec.loss);
        Matrix y0(1, 1, model.y0);
        driver.step(epoch, trainables(model, y0), gradients(tape, rec), loss, loss * ys * ys);
        model.y0 = y0[0];
        update_stats(model, rec, batch.n_paths());
    }
    return {driver.take_history(), driver.optimizer()};
}

namespace {

class FbsdeSession final : public EngineSession {
public:
    FbsdeSession(const FbsdeModel& model, std::size_t n)
        : model_(model), sc_(model.scales()), k_(constants(model, sc_)), y_(n, model.y0), d_(n, 0.0), z_(n, 0.0) {}

    void rates(const StepBatch& step, std::span<double> out) override {
        const std::size_t n = out.size();
        if (step.m > 0) {
            for (std::size_t i = 0; i < n; ++i) {
                y_[i] = (y_[i] + d_[i] * k_.y_drift) + z_[i] * (step.dw_prev[i] * k_.inv_sqrt_t);
            }
        }
        Matrix input(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            input(i, 0) = step.w[i] * k_.inv_sqrt_t;
            input(i, 1) = (step.phi[i] - step.phi_bar[i]) * k_.inv_s;
            d_[i] = input(i, 1);
        }
        const Matrix z = nn::infer(model_.spec, model_.nets[step.m], input);
        const CostSpec& cost = model_.cost;
        const bool unit_liquidity = cost.liquidity.is_constant() && cost.liquidity.level() == 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            z_[i] = z[i];
            double y = y_[i];
            if (!unit_liquidity) y = y * (1.0 / cost.liquidity.at(step.t, step.w[i]));
            out[i] = cost_marginal_inverse(cost, y) * sc_.rate;
        }
    }

private:
    const FbsdeModel& model_;
    Scales sc_;
    Constants k_;
    std::vector<double> y_;
    std::vector<double> d_;
    std::vector<double> z_;
};

}  // namespace

FbsdeEngine::FbsdeEngine(FbsdeModel model) : model_(std::move(model)) { model_.validate(); }

std::unique_ptr<EngineSession> FbsdeEngine::start(std::size_t n_paths) const {
    return std::make_unique<FbsdeSession>(model_, n_paths);
}

nlohmann::json to_json(const FbsdeModel& model) {
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& n : model.nets) nets.push_back(nn::params_to_json(n));
    return {{"kind", "fbsde"},
            {"spec", nn::spec_to_json(model.spec)},
            {"y0", model.y0},
            {"grid", to_json(model.grid)},
            {"market", to_json(model.market)},
            {"cost", to_json(model.cost)},
            {"nets", std::move(nets)}};
}

FbsdeModel fbsde_from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "fbsde") throw std::invalid_argument("not an FBSDE checkpoint");
    FbsdeModel model;
    model.spec = nn::spec_from_json(j.at("spec"));
    model.y0 = j.at("y0").get<double>();
    model.grid = grid_from_json(j.at("grid"));
    model.market = market_from_json(j.at("market"));
    model.cost = cost_from_json(j.at("cost"));
    for (const auto& n : j.at("nets")) model.nets.push_back(nn::params_from_json(n, model.spec));
    model.validate();
    return model;
}

}  // namespace hedge
