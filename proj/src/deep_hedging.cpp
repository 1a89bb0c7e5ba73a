#include "hedge/deep_hedging.hpp"

#include "hedge/errors.hpp"
#include "hedge/io.hpp"
#include "hedge/nn/checkpoint.hpp"
#include "hedge/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hedge {

using ad::Matrix;
using ad::NodeId;

DeepHedgeModel DeepHedgeModel::initialized(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                           std::uint64_t seed, std::size_t first_step,
                                           std::shared_ptr<const LeadingOrderEngine> leading) {
    DeepHedgeModel model = zeros(market, cost, grid, first_step, std::move(leading));
    for (std::size_t m = first_step; m < grid.n_steps(); ++m) {
        auto gen = Xoshiro256pp::for_stream(seed, m);
        model.nets[m - first_step] = nn::ParamStore::initialized(model.spec, gen);
    }
    return model;
}

DeepHedgeModel DeepHedgeModel::zeros(const MarketParams& market, const CostSpec& cost, const TimeGrid& grid,
                                     std::size_t first_step, std::shared_ptr<const LeadingOrderEngine> leading) {
    if (first_step > grid.n_steps()) throw std::invalid_argument("switch step lies beyond the grid");
    DeepHedgeModel model;
    model.grid = grid;
    model.market = market;
    model.cost = cost;
    model.first_step = first_step;
    model.leading = std::move(leading);
    model.nets.assign(grid.n_steps() - first_step, nn::ParamStore::zeros(model.spec));
    model.validate();
    return model;
}

void DeepHedgeModel::validate() const {
    market.validate();
    cost.validate();
    spec.validate();
    if (spec.input_dim != 3 || spec.output_dim != 1) {
        throw std::invalid_argument("deep hedging networks map 3 inputs to 1");
    }
    if (first_step > grid.n_steps() || nets.size() != grid.n_steps() - first_step) {
        throw std::invalid_argument("deep hedging model needs one network per step from the switch step on");
    }
    if (first_step > 0 && !leading) throw std::invalid_argument("pasted model needs a leading-order engine");
    for (const auto& n : nets) n.check_shapes(spec);
}

namespace {

struct Constants {
    double inv_t;
    double inv_sqrt_t;
    double inv_s;
    double half_gamma;
    double inv_points;  // 1 / (N + 1)
};

Constants constants(const DeepHedgeModel& model, const Scales& sc) {
    return {1.0 / sc.time, 1.0 / sc.brownian, 1.0 / sc.position, 0.5 * model.market.gamma,
            1.0 / static_cast<double>(model.grid.n_steps() + 1)};
}

struct Recorded {
    std::vector<nn::BoundNet> nets;
    std::vector<double> plain_rates;       // [n x first_step]
    std::vector<std::vector<double>> phi;  // phi per step up to first_step, plain
    std::vector<NodeId> phi_nodes;         // phi at steps first_step..N
    std::vector<NodeId> rate_nodes;        // rates at steps first_step..N-1
    std::vector<double> plain_goal;        // per path J when no network step exists
    NodeId goal = 0;
    NodeId loss = 0;
    bool taped = false;
};

Recorded record(const DeepHedgeModel& model, const PathBatch& batch, ad::Tape& tape, nn::Mode mode) {
    if (batch.n_steps() != model.grid.n_steps() || batch.dt() != model.grid.dt()) {
        throw std::invalid_argument("deep hedging rollout: batch and model grids differ");
    }
    const std::size_t n = batch.n_paths();
    const std::size_t steps = model.grid.n_steps();
    const std::size_t first = model.first_step;
    const Scales sc = model.scales();
    const Constants k = constants(model, sc);
    const MarketParams& mk = model.market;
    const CostSpec& cost = model.cost;
    const double dt = model.grid.dt();

    Recorded rec;
    std::vector<double> w(n, 0.0);
    std::vector<double> phi(n, mk.phi_init);
    std::vector<double> acc(n, 0.0);
    rec.plain_rates.resize(n * first);

    std::shared_ptr<const ErgodicSolution> handle;
    if (first > 0) handle = model.leading->solution();
    for (std::size_t m = 0; m < first; ++m) {
        const double t = model.grid.time(m);
        rec.phi.push_back(phi);
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = mk.endowment(w[i]);
            const double lam = cost.lambda_at(t, w[i]);
            const double r = model.leading->rate(handle, t, w[i], phi[i], mk.phi_bar(w[i]));
            acc[i] += goal_integrand(mk, phi[i], xi, cost_value(cost, r), lam);
            rec.plain_rates[i * first + m] = r;
            phi[i] += r * dt;
            w[i] += batch.increment(i, m);
        }
    }
    if (first == steps) {
        rec.phi.push_back(phi);
        rec.plain_goal.resize(n);
        const double t = model.grid.time(steps);
        for (std::size_t i = 0; i < n; ++i) {
            const double lam = cost.lambda_at(t, w[i]);
            acc[i] += goal_integrand(mk, phi[i], mk.endowment(w[i]), cost_value(cost, 0.0), lam);
            rec.plain_goal[i] = acc[i] * k.inv_points;
        }
        return rec;
    }

    rec.taped = true;
    NodeId phi_node = tape.constant(Matrix::column(phi));
    NodeId acc_node = first > 0 ? tape.constant(Matrix::column(acc)) : NodeId{0};
    bool have_acc = first > 0;
    rec.phi_nodes.push_back(phi_node);
    const auto g = [&cost](double v) { return cost_value(cost, v); };
    const auto dg = [&cost](double v) { return cost_marginal(cost, v); };
    for (std::size_t m = first; m <= steps; ++m) {
        const double t = model.grid.time(m);
        Matrix xi(n, 1);
        Matrix lam(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            xi[i] = mk.endowment(w[i]);
            lam[i] = cost.lambda_at(t, w[i]);
        }
        const NodeId a = tape.scale(phi_node, mk.mu);
        const NodeId b = tape.add(tape.scale(phi_node, mk.sigma), tape.constant(std::move(xi)));
        const NodeId b3 = tape.scale(tape.square(b), k.half_gamma);
        NodeId term = tape.sub(a, b3);
        if (m < steps) {
            Matrix feat(n, 2);
            for (std::size_t i = 0; i < n; ++i) {
                feat(i, 0) = t * k.inv_t;
                feat(i, 1) = w[i] * k.inv_sqrt_t;
            }
            const NodeId input = tape.hcat(tape.constant(std::move(feat)), tape.scale(phi_node, k.inv_s));
            rec.nets.push_back(nn::bind(model.spec, model.net(m), tape, input, mode));
            const NodeId rate = tape.scale(rec.nets.back().output, sc.rate);
            const NodeId c = tape.mul(tape.map(rate, g, dg), tape.constant(std::move(lam)));
            term = tape.sub(term, c);
            rec.rate_nodes.push_back(rate);
            phi_node = tape.add(phi_node, tape.scale(rate, dt));
            rec.phi_nodes.push_back(phi_node);
            for (std::size_t i = 0; i < n; ++i) w[i] += batch.increment(i, m);
        } else {
            Matrix zero_cost(n, 1);
            for (std::size_t i = 0; i < n; ++i) zero_cost[i] = cost_value(cost, 0.0) * lam[i];
            term = tape.sub(term, tape.constant(std::move(zero_cost)));
        }
        acc_node = have_acc ? tape.add(acc_node, term) : term;
        have_acc = true;
    }
    rec.goal = tape.scale(acc_node, k.inv_points);
    rec.loss = tape.scale(tape.mean(rec.goal), -1.0 / sc.goal);
    return rec;
}

std::vector<Matrix*> trainables(DeepHedgeModel& model) {
    std::vector<Matrix*> out;
    for (auto& net : model.nets) {
        for (auto* p : net.trainable()) out.push_back(p);
    }
    return out;
}

std::vector<Matrix> gradients(const ad::Tape& tape, const Recorded& rec) {
    std::vector<Matrix> out;
    for (const auto& net : rec.nets) {
        for (auto& gr : nn::collect_grads(tape, net)) out.push_back(std::move(gr));
    }
    return out;
}

void update_stats(DeepHedgeModel& model, const Recorded& rec, std::size_t rows) {
    for (std::size_t k = 0; k < model.nets.size(); ++k) {
        nn::update_running_stats(model.spec, model.nets[k], rec.nets[k].stats, rows);
    }
}

}  // namespace

HedgeRollout rollout(const DeepHedgeModel& model, const PathBatch& batch, nn::Mode mode) {
    model.validate();
    ad::Tape tape;
    const Recorded rec = record(model, batch, tape, mode);

    const std::size_t n = batch.n_paths();
    const std::size_t steps = model.grid.n_steps();
    const std::size_t first = model.first_step;
    HedgeRollout out;
    out.n_paths = n;
    out.n_steps = steps;
    out.rates.resize(n * steps);
    out.phi.resize(n * (steps + 1));
    out.goal.resize(n);
    for (std::size_t m = 0; m < rec.phi.size(); ++m) {
        for (std::size_t i = 0; i < n; ++i) out.phi[i * (steps + 1) + m] = rec.phi[m][i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < first; ++m) out.rates[i * steps + m] = rec.plain_rates[i * first + m];
    }
    if (rec.taped) {
        for (std::size_t k = 0; k < rec.phi_nodes.size(); ++k) {
            const Matrix& v = tape.value(rec.phi_nodes[k]);
            for (std::size_t i = 0; i < n; ++i) out.phi[i * (steps + 1) + first + k] = v[i];
        }
        for (std::size_t k = 0; k < rec.rate_nodes.size(); ++k) {
            const Matrix& v = tape.value(rec.rate_nodes[k]);
            for (std::size_t i = 0; i < n; ++i) out.rates[i * steps + first + k] = v[i];
        }
        const Matrix& gv = tape.value(rec.goal);
        for (std::size_t i = 0; i < n; ++i) out.goal[i] = gv[i];
        out.loss = tape.value(rec.loss)[0];
    } else {
        out.goal = rec.plain_goal;
        out.loss = goal_loss(out) / model.scales().goal;
    }
    for (double v : out.goal) {
        if (!std::isfinite(v)) throw NonFiniteError("deep hedging goal became non-finite");
    }
    return out;
}

double goal_loss(const HedgeRollout& rollout) {
    if (rollout.goal.empty()) throw std::invalid_argument("goal_loss of an empty rollout");
    double s = 0.0;
    for (double v : rollout.goal) s += v;
    return -s / static_cast<double>(rollout.goal.size());
}

DeepHedgeTrainResult train(DeepHedgeModel& model, const TrainConfig& config) {
    model.validate();
    TrainingDriver driver(config);
    if (model.nets.empty()) return {{}, driver.optimizer()};
    const double gs = model.scales().goal;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const PathBatch batch = driver.batch(model.grid, epoch);
        ad::Tape tape;
        const Recorded rec = record(model, batch, tape, nn::Mode::train);
        const double loss = tape.value(rec.loss)[0];
        if (!std::isfinite(loss)) {
            throw NonFiniteError("deep hedging training diverged: loss is non-finite at epoch " +
                                 std::to_string(epoch));
        }
        tape.backward(rec.loss);
        driver.step(epoch, trainables(model), gradients(tape, rec), loss, loss * gs);
        update_stats(model, rec, batch.n_paths());
    }
    return {driver.take_history(), driver.optimizer()};
}

DeepHedgeModel refine_nearest(const DeepHedgeModel& model) {
    model.validate();
    const TimeGrid fine(model.grid.horizon(), 2 * model.grid.n_steps());
    DeepHedgeModel out = DeepHedgeModel::zeros(model.market, model.cost, fine, 2 * model.first_step, model.leading);
    out.spec = model.spec;
    for (std::size_t m = out.first_step; m < fine.n_steps(); ++m) out.nets[m - out.first_step] = model.net(m / 2);
    return out;
}

namespace {

class DeepHedgeSession final : public EngineSession {
public:
    explicit DeepHedgeSession(const DeepHedgeModel& model)
        : model_(model), sc_(model.scales()), k_(constants(model, sc_)) {
        if (model.leading) handle_ = model.leading->solution();
    }

    void rates(const StepBatch& step, std::span<double> out) override {
        const std::size_t n = out.size();
        if (step.m < model_.first_step) {
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = model_.leading->rate(handle_, step.t, step.w[i], step.phi[i], step.phi_bar[i]);
            }
            return;
        }
        Matrix input(n, 3);
        for (std::size_t i = 0; i < n; ++i) {
            input(i, 0) = step.t * k_.inv_t;
            input(i, 1) = step.w[i] * k_.inv_sqrt_t;
            input(i, 2) = step.phi[i] * k_.inv_s;
        }
        const Matrix r = nn::infer(model_.spec, model_.net(step.m), input);
        for (std::size_t i = 0; i < n; ++i) out[i] = r[i] * sc_.rate;
    }

private:
    const DeepHedgeModel& model_;
    Scales sc_;
    Constants k_;
    std::shared_ptr<const ErgodicSolution> handle_;
};

}  // namespace

DeepHedgeEngine::DeepHedgeEngine(DeepHedgeModel model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {
    model_.validate();
}

std::unique_ptr<EngineSession> DeepHedgeEngine::start(std::size_t) const {
    return std::make_unique<DeepHedgeSession>(model_);
}

nlohmann::json to_json(const DeepHedgeModel& model) {
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& n : model.nets) nets.push_back(nn::params_to_json(n));
    return {{"kind", "deep_hedging"},
            {"spec", nn::spec_to_json(model.spec)},
            {"first_step", model.first_step},
            {"grid", to_json(model.grid)},
            {"market", to_json(model.market)},
            {"cost", to_json(model.cost)},
            {"nets", std::move(nets)}};
}

DeepHedgeModel deep_hedge_from_json(const nlohmann::json& j, std::shared_ptr<const LeadingOrderEngine> leading) {
    if (j.at("kind").get<std::string>() != "deep_hedging") throw std::invalid_argument("not a deep hedging checkpoint");
    DeepHedgeModel model;
    model.spec = nn::spec_from_json(j.at("spec"));
    model.first_step = j.at("first_step").get<std::size_t>();
    model.grid = grid_from_json(j.at("grid"));
    model.market = market_from_json(j.at("market"));
    model.cost = cost_from_json(j.at("cost"));
    model.leading = std::move(leading);
    for (const auto& n : j.at("nets")) model.nets.push_back(nn::params_from_json(n, model.spec));
    model.validate();
    return model;
}

}  // namespace hedge
