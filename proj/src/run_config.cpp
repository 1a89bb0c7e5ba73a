#include "hedge/run_config.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

namespace hedge {

using nlohmann::json;

namespace {

constexpr std::pair<EngineKind, const char*> kEngineNames[] = {
    {EngineKind::zero, "zero"},
    {EngineKind::ground_truth, "ground_truth"},
    {EngineKind::leading_order, "leading_order"},
    {EngineKind::fbsde, "fbsde"},
    {EngineKind::deep_hedging, "deep_hedging"},
    {EngineKind::pasting, "pasting"},
};

}  // namespace

std::string engine_name(EngineKind kind) {
    for (const auto& [k, n] : kEngineNames) {
        if (k == kind) return n;
    }
    return "unknown";
}

std::optional<EngineKind> parse_engine_name(const std::string& name) {
    for (const auto& [k, n] : kEngineNames) {
        if (name == n) return k;
    }
    return std::nullopt;
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::invalid_argument([&] {
          std::string msg = "invalid configuration:";
          for (const auto& v : violations) msg += "\n  " + v;
          return msg;
      }()),
      violations_(std::move(violations)) {}

namespace {

class Reader {
public:
    Reader(std::vector<std::string>& errors, std::string base_dir) : errors_(errors), base_dir_(std::move(base_dir)) {}

    void fail(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

    const json* section(const json& parent, const std::string& key, const std::string& path) {
        if (!parent.contains(key)) return nullptr;
        const json& s = parent.at(key);
        if (!s.is_object()) {
            fail(join(path, key), "must be an object");
            return nullptr;
        }
        return &s;
    }

    double number(const json& obj, const std::string& key, const std::string& path, double fallback) {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_number()) {
            fail(join(path, key), "must be a number");
            return fallback;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(join(path, key), "must be finite");
        return d;
    }

    std::int64_t integer(const json& obj, const std::string& key, const std::string& path, std::int64_t fallback) {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::floor(d) == d && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
        }
        fail(join(path, key), "must be an integer");
        return fallback;
    }

    std::size_t count(const json& obj, const std::string& key, const std::string& path, std::size_t fallback,
                      std::int64_t minimum) {
        const std::int64_t v = integer(obj, key, path, static_cast<std::int64_t>(fallback));
        if (v < minimum) {
            fail(join(path, key), "must be at least " + std::to_string(minimum) + ", got " + std::to_string(v));
            return fallback;
        }
        return static_cast<std::size_t>(v);
    }

    std::string text(const json& obj, const std::string& key, const std::string& path, std::string fallback) {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_string()) {
            fail(join(path, key), "must be a string");
            return fallback;
        }
        return v.get<std::string>();
    }

    std::string file(const json& obj, const std::string& key, const std::string& path) {
        std::string f = text(obj, key, path, "");
        if (f.empty()) return f;
        std::filesystem::path p(f);
        if (p.is_relative() && !base_dir_.empty()) p = std::filesystem::path(base_dir_) / p;
        if (!std::filesystem::exists(p)) fail(join(path, key), "file '" + p.string() + "' does not exist");
        return p.string();
    }

    void positive(double v, const std::string& path) {
        if (!(v > 0.0)) fail(path, "must be positive");
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    std::vector<std::string>& errors_;
    std::string base_dir_;
};

CostKind preset_kind(Reader& rd, const json& s, const std::string& path, bool& has_preset) {
    has_preset = s.contains("preset");
    const std::string p = rd.text(s, "preset", path, "quadratic");
    if (p == "quadratic") return CostKind::quadratic;
    if (p == "power") return CostKind::power;
    rd.fail(Reader::join(path, "preset"), "must be 'quadratic' or 'power'");
    return CostKind::quadratic;
}

MarketParams read_market(Reader& rd, const json& root, double horizon) {
    MarketParams m;
    m.horizon = horizon;
    const json* s = rd.section(root, "market", "");
    if (s == nullptr) {
        rd.fail("market", "section is required");
        return m;
    }
    bool has_preset = false;
    const CostKind kind = preset_kind(rd, *s, "market", has_preset);
    if (has_preset) m = calibrated_market(kind, horizon);
    for (const char* key : {"mu", "sigma", "gamma", "shares", "xi_vol", "phi_init"}) {
        if (!has_preset && !s->contains(key)) rd.fail(std::string("market.") + key, "is required without a preset");
    }
    m.mu = rd.number(*s, "mu", "market", m.mu);
    m.sigma = rd.number(*s, "sigma", "market", m.sigma);
    m.gamma = rd.number(*s, "gamma", "market", m.gamma);
    m.shares = rd.number(*s, "shares", "market", m.shares);
    m.xi_vol = rd.number(*s, "xi_vol", "market", m.xi_vol);
    m.phi_init = rd.number(*s, "phi_init", "market", m.phi_init);
    if (s->contains("horizon")) rd.fail("market.horizon", "the horizon is set in grid.horizon");
    rd.positive(m.sigma, "market.sigma");
    rd.positive(m.gamma, "market.gamma");
    rd.positive(m.shares, "market.shares");
    return m;
}

CostSpec read_cost(Reader& rd, const json& root) {
    CostSpec c = CostSpec::quadratic(0.0);
    const json* s = rd.section(root, "cost", "");
    if (s == nullptr) {
        rd.fail("cost", "section is required");
        return c;
    }
    bool has_preset = false;
    const CostKind preset = preset_kind(rd, *s, "cost", has_preset);
    if (has_preset) c = calibrated_cost(preset);
    if (s->contains("kind")) {
        const std::string kind = rd.text(*s, "kind", "cost", "quadratic");
        if (kind == "quadratic") {
            c = CostSpec::quadratic(c.lambda);
        } else if (kind == "power") {
            c = CostSpec::power(c.kind == CostKind::power ? c.q : 2.0, c.lambda);
            if (!s->contains("q") && !has_preset) rd.fail("cost.q", "is required for power costs");
        } else {
            rd.fail("cost.kind", "must be 'quadratic' or 'power'");
        }
    } else if (!has_preset) {
        rd.fail("cost.kind", "is required without a preset");
    }
    if (s->contains("q")) {
        if (c.kind == CostKind::quadratic) {
            rd.fail("cost.q", "only applies to power costs");
        } else {
            c.q = rd.number(*s, "q", "cost", c.q);
        }
    }
    if (c.kind == CostKind::power && !(c.q > 1.0 && c.q <= 2.0)) {
        rd.fail("cost.q", "q must lie in (1,2], got " + std::to_string(c.q));
    }
    if (!has_preset && !s->contains("lambda")) rd.fail("cost.lambda", "is required without a preset");
    c.lambda = rd.number(*s, "lambda", "cost", c.lambda);
    if (!(c.lambda >= 0.0)) rd.fail("cost.lambda", "must be nonnegative");
    const double liq = rd.number(*s, "liquidity", "cost", 1.0);
    if (liq > 0.0) {
        c.liquidity = Liquidity::constant(liq);
    } else {
        rd.fail("cost.liquidity", "must be positive");
    }
    return c;
}

TimeGrid read_grid(Reader& rd, const json& root) {
    const json* s = rd.section(root, "grid", "");
    if (s == nullptr) {
        rd.fail("grid", "section is required");
        return {};
    }
    if (!s->contains("horizon")) rd.fail("grid.horizon", "is required");
    if (!s->contains("n_steps")) rd.fail("grid.n_steps", "is required");
    const double horizon = rd.number(*s, "horizon", "grid", 1.0);
    const std::size_t n = rd.count(*s, "n_steps", "grid", 1, 1);
    if (!(horizon > 0.0)) {
        rd.fail("grid.horizon", "must be positive");
        return TimeGrid(1.0, n);
    }
    return TimeGrid(horizon, n);
}

TrainConfig read_train(Reader& rd, const json& parent, const std::string& path) {
    TrainConfig t;
    const json* s = rd.section(parent, "train", path);
    if (s == nullptr) return t;
    const std::string p = Reader::join(path, "train");
    t.epochs = rd.count(*s, "epochs", p, t.epochs, 0);
    t.batch_size = rd.count(*s, "batch_size", p, t.batch_size, 2);
    t.seed = rd.count(*s, "seed", p, t.seed, 0);
    t.adam.lr = rd.number(*s, "lr", p, t.adam.lr);
    rd.positive(t.adam.lr, Reader::join(p, "lr"));
    if (s->contains("lr_schedule")) {
        const json& sched = s->at("lr_schedule");
        t.lr_schedule.clear();
        if (!sched.is_array()) {
            rd.fail(Reader::join(p, "lr_schedule"), "must be a list of [fraction, factor] pairs");
        } else {
            for (std::size_t i = 0; i < sched.size(); ++i) {
                const json& e = sched[i];
                const std::string ep = Reader::join(p, "lr_schedule[" + std::to_string(i) + "]");
                if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                    rd.fail(ep, "must be [fraction, factor]");
                    continue;
                }
                LrStep step{e[0].get<double>(), e[1].get<double>()};
                if (!(step.fraction >= 0.0 && step.fraction <= 1.0)) rd.fail(ep, "fraction must lie in [0, 1]");
                if (!(step.factor > 0.0)) rd.fail(ep, "factor must be positive");
                t.lr_schedule.push_back(step);
            }
        }
    }
    t.sgd_fraction = rd.number(*s, "sgd_fraction", p, t.sgd_fraction);
    if (!(t.sgd_fraction >= 0.0 && t.sgd_fraction <= 1.0)) rd.fail(Reader::join(p, "sgd_fraction"), "must lie in [0, 1]");
    t.sgd_lr = rd.number(*s, "sgd_lr", p, t.sgd_lr);
    rd.positive(t.sgd_lr, Reader::join(p, "sgd_lr"));
    return t;
}

void require_engine_inputs(Reader& rd, const RunConfig& c, EngineKind kind, const std::string& path) {
    const bool positive_lambda = c.cost.lambda > 0.0;
    switch (kind) {
        case EngineKind::ground_truth:
            if (c.cost.kind != CostKind::quadratic) rd.fail(path, "ground_truth requires quadratic costs");
            if (!positive_lambda) rd.fail(path, "ground_truth requires cost.lambda > 0");
            break;
        case EngineKind::leading_order:
        case EngineKind::pasting:
            if (!positive_lambda) rd.fail(path, engine_name(kind) + " requires cost.lambda > 0");
            if (c.market.xi_vol == 0.0) rd.fail(path, engine_name(kind) + " requires market.xi_vol != 0");
            break;
        case EngineKind::fbsde:
            if (!positive_lambda) rd.fail(path, "fbsde requires cost.lambda > 0");
            break;
        default:
            break;
    }
}

RunConfig build(const json& j, const std::string& base_dir, std::vector<std::string>& errors) {
    Reader rd(errors, base_dir);
    RunConfig c;
    if (!j.is_object()) {
        rd.fail("(root)", "configuration must be a JSON object");
        return c;
    }
    c.name = rd.text(j, "name", "", "");
    c.description = rd.text(j, "description", "", "");
    c.grid = read_grid(rd, j);
    c.market = read_market(rd, j, c.grid.horizon());
    c.cost = read_cost(rd, j);

    const std::string engine = rd.text(j, "engine", "", "ground_truth");
    if (auto k = parse_engine_name(engine)) {
        c.engine = *k;
        require_engine_inputs(rd, c, c.engine, "engine");
    } else {
        rd.fail("engine", "unknown engine '" + engine + "'");
    }
    if (j.contains("compare")) {
        const json& list = j.at("compare");
        if (!list.is_array()) {
            rd.fail("compare", "must be a list of engine names");
        } else {
            for (std::size_t i = 0; i < list.size(); ++i) {
                const std::string p = "compare[" + std::to_string(i) + "]";
                if (!list[i].is_string()) {
                    rd.fail(p, "must be an engine name");
                    continue;
                }
                if (auto k = parse_engine_name(list[i].get<std::string>())) {
                    c.compare.push_back(*k);
                    require_engine_inputs(rd, c, *k, p);
                } else {
                    rd.fail(p, "unknown engine '" + list[i].get<std::string>() + "'");
                }
            }
            if (c.compare.size() == 1) rd.fail("compare", "needs at least two engines");
        }
    }

    if (const json* s = rd.section(j, "ground_truth", "")) {
        const std::string form = rd.text(*s, "form", "ground_truth", "feedback");
        if (form == "feedback") {
            c.ground_truth_form = GroundTruthForm::feedback;
        } else if (form == "explicit") {
            c.ground_truth_form = GroundTruthForm::explicit_formula;
        } else {
            rd.fail("ground_truth.form", "must be 'feedback' or 'explicit'");
        }
    }
    if (const json* s = rd.section(j, "leading_order", "")) {
        c.ergodic_file = rd.file(*s, "solution", "leading_order");
        c.shooting.u_max = rd.number(*s, "u_max", "leading_order", c.shooting.u_max);
        c.shooting.h = rd.number(*s, "h", "leading_order", c.shooting.h);
        rd.positive(c.shooting.u_max, "leading_order.u_max");
        rd.positive(c.shooting.h, "leading_order.h");
    }
    if (const json* s = rd.section(j, "fbsde", "")) {
        c.fbsde_checkpoint = rd.file(*s, "checkpoint", "fbsde");
        c.fbsde_train = read_train(rd, *s, "fbsde");
    }
    if (const json* s = rd.section(j, "deep_hedging", "")) {
        c.deep_hedging_checkpoint = rd.file(*s, "checkpoint", "deep_hedging");
        c.deep_hedging_train = read_train(rd, *s, "deep_hedging");
    }
    if (const json* s = rd.section(j, "pasting", "")) {
        c.pasting_checkpoint = rd.file(*s, "checkpoint", "pasting");
        c.pasting_kappa = rd.number(*s, "kappa", "pasting", 0.0);
        if (c.pasting_kappa < 0.0) rd.fail("pasting.kappa", "must be positive (or 0 for the default)");
        c.pasting_train = read_train(rd, *s, "pasting");
    }
    if (const json* s = rd.section(j, "evaluation", "")) {
        c.evaluation.n_paths = rd.count(*s, "n_paths", "evaluation", c.evaluation.n_paths, 1);
        c.evaluation.seed = rd.count(*s, "seed", "evaluation", c.evaluation.seed, 0);
        c.evaluation.chunk = rd.count(*s, "chunk", "evaluation", c.evaluation.chunk, 1);
        c.profile_paths = rd.count(*s, "profile_paths", "evaluation", c.profile_paths, 1);
    }
    if (const json* s = rd.section(j, "output", "")) c.out_dir = rd.text(*s, "dir", "output", c.out_dir);
    if (j.contains("paper_scale")) {
        if (j.at("paper_scale").is_object()) {
            c.paper_scale = j.at("paper_scale");
        } else {
            rd.fail("paper_scale", "must be an object");
        }
    }
    for (const auto& [key, _] : j.items()) {
        static const char* known[] = {"name",         "description",  "market",        "cost",
                                      "grid",         "engine",       "compare",       "ground_truth",
                                      "leading_order", "fbsde",       "deep_hedging",  "pasting",
                                      "evaluation",   "output",       "paper_scale"};
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) rd.fail(key, "unknown section");
    }
    return c;
}

}  // namespace

std::vector<std::string> validate_config(const json& j, const std::string& base_dir) {
    std::vector<std::string> errors;
    build(j, base_dir, errors);
    return errors;
}

RunConfig parse_config(const json& j, const std::string& base_dir) {
    std::vector<std::string> errors;
    RunConfig c = build(j, base_dir, errors);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

json to_json(const TrainConfig& t) {
    json sched = json::array();
    for (const auto& s : t.lr_schedule) sched.push_back({s.fraction, s.factor});
    return {{"epochs", t.epochs},         {"batch_size", t.batch_size}, {"seed", t.seed},
            {"lr", t.adam.lr},            {"lr_schedule", sched},       {"sgd_fraction", t.sgd_fraction},
            {"sgd_lr", t.sgd_lr}};
}

json emit_config(const RunConfig& c) {
    json j;
    j["name"] = c.name;
    j["description"] = c.description;
    j["market"] = {{"mu", c.market.mu},         {"sigma", c.market.sigma},   {"gamma", c.market.gamma},
                   {"shares", c.market.shares}, {"xi_vol", c.market.xi_vol}, {"phi_init", c.market.phi_init}};
    j["cost"] = {{"kind", c.cost.kind == CostKind::quadratic ? "quadratic" : "power"},
                 {"lambda", c.cost.lambda},
                 {"liquidity", c.cost.liquidity.level()}};
    if (c.cost.kind == CostKind::power) j["cost"]["q"] = c.cost.q;
    j["grid"] = {{"horizon", c.grid.horizon()}, {"n_steps", c.grid.n_steps()}};
    j["engine"] = engine_name(c.engine);
    if (!c.compare.empty()) {
        j["compare"] = json::array();
        for (auto k : c.compare) j["compare"].push_back(engine_name(k));
    }
    j["ground_truth"] = {{"form", c.ground_truth_form == GroundTruthForm::feedback ? "feedback" : "explicit"}};
    j["leading_order"] = {{"u_max", c.shooting.u_max}, {"h", c.shooting.h}};
    if (!c.ergodic_file.empty()) j["leading_order"]["solution"] = c.ergodic_file;
    j["fbsde"] = {{"train", to_json(c.fbsde_train)}};
    if (!c.fbsde_checkpoint.empty()) j["fbsde"]["checkpoint"] = c.fbsde_checkpoint;
    j["deep_hedging"] = {{"train", to_json(c.deep_hedging_train)}};
    if (!c.deep_hedging_checkpoint.empty()) j["deep_hedging"]["checkpoint"] = c.deep_hedging_checkpoint;
    j["pasting"] = {{"kappa", c.pasting_kappa}, {"train", to_json(c.pasting_train)}};
    if (!c.pasting_checkpoint.empty()) j["pasting"]["checkpoint"] = c.pasting_checkpoint;
    j["evaluation"] = {{"n_paths", c.evaluation.n_paths},
                       {"seed", c.evaluation.seed},
                       {"chunk", c.evaluation.chunk},
                       {"profile_paths", c.profile_paths}};
    j["output"] = {{"dir", c.out_dir}};
    if (!c.paper_scale.empty()) j["paper_scale"] = c.paper_scale;
    return j;
}

json apply_paper_scale(const json& j) {
    json out = j;
    if (j.is_object() && j.contains("paper_scale") && j.at("paper_scale").is_object()) {
        out.merge_patch(j.at("paper_scale"));
    }
    return out;
}

}  // namespace hedge
