#include "hedge/runner.hpp"

#include "hedge/deep_hedging.hpp"
#include "hedge/errors.hpp"
#include "hedge/evaluation.hpp"
#include "hedge/fbsde.hpp"
#include "hedge/io.hpp"
#include "hedge/nn/checkpoint.hpp"
#include "hedge/pasting.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

namespace hedge {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig load_run_config(const RunOptions& options) {
    json j = nn::read_json_file(options.config_path);
    if (options.paper_scale) j = apply_paper_scale(j);
    if (j.is_object()) {
        if (options.seed) {
            j["evaluation"]["seed"] = *options.seed;
            for (const char* s : {"fbsde", "deep_hedging", "pasting"}) j[s]["train"]["seed"] = *options.seed;
        }
        if (options.out_dir) j["output"]["dir"] = *options.out_dir;
    }
    RunConfig c = parse_config(j, fs::path(options.config_path).parent_path().string());
    if (options.workers) c.evaluation.workers = *options.workers;
    return c;
}

namespace {

EvalReport failed_report(const std::string& strategy, const TimeGrid& grid, const EvalConfig& eval,
                         const std::string& error) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    EvalReport r;
    r.strategy = strategy;
    r.horizon = grid.horizon();
    r.n_steps = grid.n_steps();
    r.n_paths = eval.n_paths;
    r.seed = eval.seed;
    r.failed = true;
    r.error = error;
    r.j_mean = r.j_std = r.j_stderr = r.ci_low = r.ci_high = r.terminal_mse = nan;
    return r;
}

// Everything a learned model depends on; a saved model is reused only if this matches.
json fingerprint(const RunConfig& c, const TrainConfig& train, const std::string& kind) {
    json f = {{"kind", kind},
              {"market", to_json(c.market)},
              {"cost", to_json(c.cost)},
              {"grid", to_json(c.grid)},
              {"train", to_json(train)}};
    if (kind == "pasting") {
        f["kappa"] = c.pasting_kappa;
        f["u_max"] = c.shooting.u_max;
        f["h"] = c.shooting.h;
        f["solution"] = c.ergodic_file;
    }
    return f;
}

void write_report(const std::string& dir, const std::string& stem, const std::vector<EvalReport>& reports) {
    write_reports_csv((fs::path(dir) / (stem + ".csv")).string(), reports);
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    nn::write_json_file((fs::path(dir) / (stem + ".json")).string(), arr);
}

void log_history_tail(std::ostream& log, const std::vector<LossRecord>& h) {
    if (h.empty()) return;
    log << "  final loss " << h.back().loss << " (raw " << h.back().raw_loss << ") after " << h.size()
        << " epochs, " << h.back().wall_seconds << " s\n";
}

}  // namespace

EngineFactory::EngineFactory(const RunConfig& config, std::ostream& log) : config_(config), log_(log) {
    fs::create_directories(config_.out_dir);
}

std::string EngineFactory::artifact(const std::string& file) const {
    return (fs::path(config_.out_dir) / file).string();
}

std::shared_ptr<const LeadingOrderEngine> EngineFactory::leading_order() {
    if (leading_) return leading_;
    std::shared_ptr<const ErgodicSolution> sol;
    if (!config_.ergodic_file.empty()) {
        log_ << "loading ergodic solution " << config_.ergodic_file << '\n';
        sol = std::make_shared<const ErgodicSolution>(load_ergodic(config_.ergodic_file));
    } else {
        sol = std::make_shared<const ErgodicSolution>(
            solve_ergodic_ode(config_.cost, ergodic_params(config_.market, config_.cost), config_.shooting));
        save_ergodic(artifact("ergodic.txt"), *sol);
    }
    leading_ = std::make_shared<const LeadingOrderEngine>(config_.market, config_.cost, sol);
    return leading_;
}

std::shared_ptr<const StrategyEngine> EngineFactory::train_fbsde() {
    log_ << "training fbsde: T=" << config_.grid.horizon() << " N=" << config_.grid.n_steps()
         << " epochs=" << config_.fbsde_train.epochs << '\n';
    FbsdeModel model = FbsdeModel::initialized(config_.market, config_.cost, config_.grid, config_.fbsde_train.seed);
    const FbsdeTrainResult res = train(model, config_.fbsde_train);
    write_loss_csv(artifact("fbsde_loss.csv"), res.history);
    json j = to_json(model);
    j["optimizer"] = nn::optimizer_to_json(res.optimizer);
    j["trained_with"] = fingerprint(config_, config_.fbsde_train, "fbsde");
    nn::write_json_file(artifact("fbsde_model.json"), j);
    log_history_tail(log_, res.history);
    return std::make_shared<FbsdeEngine>(std::move(model));
}

std::shared_ptr<const StrategyEngine> EngineFactory::train_deep_hedging() {
    log_ << "training deep_hedging: T=" << config_.grid.horizon() << " N=" << config_.grid.n_steps()
         << " epochs=" << config_.deep_hedging_train.epochs << '\n';
    DeepHedgeModel model =
        DeepHedgeModel::initialized(config_.market, config_.cost, config_.grid, config_.deep_hedging_train.seed);
    const DeepHedgeTrainResult res = train(model, config_.deep_hedging_train);
    write_loss_csv(artifact("deep_hedging_loss.csv"), res.history);
    json j = to_json(model);
    j["optimizer"] = nn::optimizer_to_json(res.optimizer);
    j["trained_with"] = fingerprint(config_, config_.deep_hedging_train, "deep_hedging");
    nn::write_json_file(artifact("deep_hedging_model.json"), j);
    log_history_tail(log_, res.history);
    return std::make_shared<DeepHedgeEngine>(std::move(model));
}

std::shared_ptr<const StrategyEngine> EngineFactory::train_pasting() {
    const PastingConfig pc{config_.pasting_kappa, leading_order()};
    DeepHedgeModel model = pasted_model(config_.market, config_.cost, config_.grid, pc, config_.pasting_train.seed);
    log_ << "training pasting: T=" << config_.grid.horizon() << " N=" << config_.grid.n_steps()
         << " kappa=" << pc.resolved_kappa(config_.grid, config_.cost) << " switch step M=" << model.first_step
         << " epochs=" << config_.pasting_train.epochs << '\n';
    const DeepHedgeTrainResult res = train(model, config_.pasting_train);
    write_loss_csv(artifact("pasting_loss.csv"), res.history);
    json j = to_json(model);
    j["optimizer"] = nn::optimizer_to_json(res.optimizer);
    j["trained_with"] = fingerprint(config_, config_.pasting_train, "pasting");
    nn::write_json_file(artifact("pasting_model.json"), j);
    log_history_tail(log_, res.history);
    return std::make_shared<DeepHedgeEngine>(pasted_engine(std::move(model)));
}

std::shared_ptr<const StrategyEngine> EngineFactory::build(EngineKind kind) {
    const auto saved = [&](const std::string& explicit_file, const std::string& file, const TrainConfig& train,
                           const std::string& name) -> std::optional<json> {
        if (!explicit_file.empty()) {
            log_ << "loading " << name << " checkpoint " << explicit_file << '\n';
            return nn::read_json_file(explicit_file);
        }
        const std::string path = artifact(file);
        if (!fs::exists(path)) return std::nullopt;
        json j = nn::read_json_file(path);
        if (!j.contains("trained_with") || j.at("trained_with") != fingerprint(config_, train, name)) {
            return std::nullopt;
        }
        log_ << "reusing " << name << " model " << path << '\n';
        return j;
    };
    switch (kind) {
        case EngineKind::zero:
            return std::make_shared<ZeroEngine>();
        case EngineKind::ground_truth:
            return std::make_shared<GroundTruthEngine>(config_.market, config_.cost, config_.grid,
                                                       config_.ground_truth_form);
        case EngineKind::leading_order:
            return leading_order();
        case EngineKind::fbsde:
            if (auto j = saved(config_.fbsde_checkpoint, "fbsde_model.json", config_.fbsde_train, "fbsde")) {
                return std::make_shared<FbsdeEngine>(fbsde_from_json(*j));
            }
            return train_fbsde();
        case EngineKind::deep_hedging:
            if (auto j = saved(config_.deep_hedging_checkpoint, "deep_hedging_model.json", config_.deep_hedging_train,
                               "deep_hedging")) {
                return std::make_shared<DeepHedgeEngine>(deep_hedge_from_json(*j));
            }
            return train_deep_hedging();
        case EngineKind::pasting:
            if (auto j = saved(config_.pasting_checkpoint, "pasting_model.json", config_.pasting_train, "pasting")) {
                return std::make_shared<DeepHedgeEngine>(pasted_engine(deep_hedge_from_json(*j, leading_order())));
            }
            return train_pasting();
    }
    throw std::invalid_argument("unknown engine");
}

namespace {

int solve_ode(const RunConfig& c, std::ostream& log) {
    EngineFactory factory(c, log);
    const auto lo = factory.leading_order();
    const auto sol = lo->solution();
    log << "ergodic solution: u_max=" << sol->u_max() << " x_max=" << sol->x_max() << " nodes=" << sol->n_nodes()
        << '\n';
    log << "  g'(0)=" << sol->slope0() << " asymptote ratio at x_max=" << sol->asymptote_ratio()
        << " max midpoint residual=" << sol->max_midpoint_residual() << '\n';
    if (c.cost.kind == CostKind::quadratic) {
        const double k = std::sqrt(c.market.gamma * c.market.sigma * c.market.sigma * c.cost.lambda);
        double worst = 0.0;
        for (std::size_t i = 1; i < sol->n_nodes(); ++i) {
            const double x = sol->x_scale(c.cost.lambda) * sol->u_node(i);
            worst = std::max(worst, std::abs(sol->g(x) / (-k * x) - 1.0));
        }
        log << "  max relative deviation from -sqrt(gamma sigma^2 lambda) x: " << worst << '\n';
    }
    log << "wrote " << (fs::path(c.out_dir) / "ergodic.txt").string() << '\n';
    return 0;
}

int train_command(const RunConfig& c, EngineKind kind, std::ostream& log) {
    EngineFactory factory(c, log);
    try {
        switch (kind) {
            case EngineKind::fbsde:
                factory.train_fbsde();
                break;
            case EngineKind::deep_hedging:
                factory.train_deep_hedging();
                break;
            default:
                factory.train_pasting();
                break;
        }
    } catch (const NonFiniteError& e) {
        log << engine_name(kind) << " training failed: " << e.what() << '\n';
        const EvalReport r = failed_report(engine_name(kind), c.grid, c.evaluation, e.what());
        write_report(c.out_dir, engine_name(kind) + "_report", {r});
        log << report_csv_header() << '\n' << report_csv_row(r) << '\n';
        return 2;
    }
    return 0;
}

int evaluate_command(const RunConfig& c, std::ostream& log) {
    EngineFactory factory(c, log);
    EvalReport r;
    try {
        const auto engine = factory.build(c.engine);
        r = evaluate(*engine, c.market, c.cost, c.grid, c.evaluation);
    } catch (const NonFiniteError& e) {
        r = failed_report(engine_name(c.engine), c.grid, c.evaluation, e.what());
    }
    write_report(c.out_dir, "report", {r});
    log << report_csv_header() << '\n' << report_csv_row(r) << '\n';
    if (r.failed) log << "  " << r.error << '\n';
    return r.failed ? 2 : 0;
}

int compare_command(const RunConfig& c, std::ostream& log) {
    if (c.compare.size() < 2) {
        log << "compare: the config lists fewer than two engines under \"compare\"\n";
        return 1;
    }
    EngineFactory factory(c, log);
    std::vector<std::shared_ptr<const StrategyEngine>> engines;
    std::vector<std::string> build_errors;
    for (auto kind : c.compare) {
        try {
            engines.push_back(factory.build(kind));
            build_errors.emplace_back();
        } catch (const NonFiniteError& e) {
            log << engine_name(kind) << " failed: " << e.what() << '\n';
            engines.push_back(nullptr);
            build_errors.emplace_back(e.what());
        }
    }
    std::vector<const StrategyEngine*> live;
    for (const auto& e : engines) {
        if (e) live.push_back(e.get());
    }
    std::vector<EvalReport> reports;
    std::vector<GapRow> gaps;
    json pathwise = json::object();
    if (live.size() >= 2) {
        const Comparison cmp = compare(live, c.market, c.cost, c.grid, c.evaluation);
        reports = cmp.reports;
        gaps = cmp.gaps;
        for (std::size_t a = 0; a < live.size(); ++a) {
            for (std::size_t b = 0; b < live.size(); ++b) {
                const double v = cmp.pathwise[a][b];
                pathwise[live[a]->name()][live[b]->name()] = std::isnan(v) ? json("NaN") : json(v);
            }
        }
    } else if (live.size() == 1) {
        reports.push_back(evaluate(*live[0], c.market, c.cost, c.grid, c.evaluation));
        gaps.push_back({reports[0].strategy, reports[0].strategy, 0.0, 0.0});
    }

    std::vector<EvalReport> rows;
    std::vector<GapRow> gap_rows;
    std::size_t next = 0;
    for (std::size_t i = 0; i < c.compare.size(); ++i) {
        if (engines[i]) {
            rows.push_back(reports[next]);
            gap_rows.push_back(gaps[next]);
            ++next;
        } else {
            rows.push_back(failed_report(engine_name(c.compare[i]), c.grid, c.evaluation, build_errors[i]));
            gap_rows.push_back({rows.back().strategy, "", std::nan(""), std::nan("")});
        }
    }

    std::ofstream table(fs::path(c.out_dir) / "table.csv");
    table << report_csv_header() << ",gap,gap_stderr\n";
    log << report_csv_header() << ",gap,gap_stderr\n";
    bool any_failed = false;
    json j_rows = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto fmt = [](double v) { return std::isnan(v) ? std::string("NaN") : std::to_string(v); };
        const std::string line =
            report_csv_row(rows[i]) + "," + fmt(gap_rows[i].gap) + "," + fmt(gap_rows[i].gap_stderr);
        table << line << '\n';
        log << line << '\n';
        any_failed = any_failed || rows[i].failed;
        json r = to_json(rows[i]);
        r["gap"] = std::isnan(gap_rows[i].gap) ? json("NaN") : json(gap_rows[i].gap);
        r["gap_stderr"] = std::isnan(gap_rows[i].gap_stderr) ? json("NaN") : json(gap_rows[i].gap_stderr);
        r["gap_reference"] = gap_rows[i].reference;
        j_rows.push_back(r);
    }
    nn::write_json_file((fs::path(c.out_dir) / "compare.json").string(),
                        {{"name", c.name},
                         {"sqrt_lambda_over_T", std::sqrt(c.cost.lambda) / c.grid.horizon()},
                         {"rows", j_rows},
                         {"pathwise_distance", pathwise}});
    return any_failed ? 2 : 0;
}

int export_command(const RunConfig& c, std::ostream& log) {
    EngineFactory factory(c, log);
    std::vector<EngineKind> kinds = c.compare.empty() ? std::vector<EngineKind>{c.engine} : c.compare;
    int status = 0;
    for (auto kind : kinds) {
        try {
            const auto engine = factory.build(kind);
            const PathProfile p = path_profile(*engine, c.market, c.cost, c.grid, c.profile_paths, c.evaluation.seed);
            const std::string file = (fs::path(c.out_dir) / ("paths_" + engine->name() + ".csv")).string();
            write_profile_csv(file, p);
            log << "wrote " << file << '\n';
        } catch (const NonFiniteError& e) {
            log << engine_name(kind) << " failed: " << e.what() << '\n';
            status = 2;
        }
    }
    return status;
}

}  // namespace

int run(const std::string& subcommand, const RunOptions& options, std::ostream& log) {
    if (subcommand == "validate") {
        json j = nn::read_json_file(options.config_path);
        if (options.paper_scale) j = apply_paper_scale(j);
        const auto violations = validate_config(j, fs::path(options.config_path).parent_path().string());
        if (violations.empty()) {
            log << "ok\n";
            return 0;
        }
        for (const auto& v : violations) log << v << '\n';
        return 1;
    }
    RunConfig c;
    try {
        c = load_run_config(options);
    } catch (const ConfigError& e) {
        log << e.what() << '\n';
        return 1;
    }
    if (subcommand == "solve-ode") return solve_ode(c, log);
    if (subcommand == "train-fbsde") return train_command(c, EngineKind::fbsde, log);
    if (subcommand == "train-deephedge") return train_command(c, EngineKind::deep_hedging, log);
    if (subcommand == "train-pasting") return train_command(c, EngineKind::pasting, log);
    if (subcommand == "evaluate") return evaluate_command(c, log);
    if (subcommand == "compare") return compare_command(c, log);
    if (subcommand == "export-paths") return export_command(c, log);
    throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

}  // namespace hedge
