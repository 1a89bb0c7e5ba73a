#include "checks.hpp"
#include "hedge/asymptotics.hpp"
#include "hedge/deep_hedging.hpp"
#include "hedge/errors.hpp"
#include "hedge/evaluation.hpp"
#include "hedge/fbsde.hpp"
#include "hedge/nn/checkpoint.hpp"
#include "hedge/pasting.hpp"
#include "hedge/run_config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <string>
#include <vector>

using namespace hedge;

namespace {

namespace tol {
constexpr double table1_j = 4.24e9;
constexpr double table1_std = 1.54e9;
constexpr double table1_z = 3.0;
constexpr double table1_std_rel = 0.05;
constexpr double ode_rel = 1e-6;
constexpr double lo_terminal_mse = 6.40e-5;
constexpr double lo_terminal_factor = 2.0;
constexpr double lo_over_truth = 1e3;
constexpr double fbsde_pathwise = 0.05;
constexpr double j_rel = 0.01;
constexpr double grad_rel = 1e-4;
constexpr std::size_t grad_points = 100;
constexpr double fenchel_young = 1e-10;
constexpr double round_trip = 1e-12;
constexpr double growth_ratio = 0.05;
}  // namespace tol

constexpr std::size_t kPaths = 100000;
constexpr std::uint64_t kEvalSeed = 20240601;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string g3(double v) { return fmt("%.4g", v); }

void progress(const std::string& msg) {
    static const auto start = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
}

EvalConfig eval_config(std::size_t n = kPaths, std::uint64_t seed = kEvalSeed) {
    EvalConfig c;
    c.n_paths = n;
    c.seed = seed;
    return c;
}

bool same_report(const EvalReport& a, const EvalReport& b) {
    return a.j_mean == b.j_mean && a.j_std == b.j_std && a.terminal_mse == b.terminal_mse;
}

std::shared_ptr<const LeadingOrderEngine> leading(const MarketParams& market, const CostSpec& cost) {
    auto sol = std::make_shared<const ErgodicSolution>(solve_ergodic_ode(cost, ergodic_params(market, cost)));
    return std::make_shared<const LeadingOrderEngine>(market, cost, std::move(sol));
}

Outcome criterion1() {
    const auto market = calibrated_market(CostKind::quadratic, 10.0);
    const auto cost = calibrated_cost(CostKind::quadratic);
    const TimeGrid grid(10.0, 168);
    const auto r = evaluate(GroundTruthEngine(market, cost, grid), market, cost, grid, eval_config());
    const double z = std::abs(r.j_mean - tol::table1_j) / r.j_stderr;
    const double std_rel = std::abs(r.j_std / tol::table1_std - 1.0);
    const double exact = checks::feedback_expected_goal(market, cost.lambda, grid);
    return {z <= tol::table1_z && std_rel <= tol::table1_std_rel,
            "j_mean=" + g3(r.j_mean) + " (" + fmt("%.2f", z) + " stderr from 4.24e9), j_std=" + g3(r.j_std) + " (" +
                fmt("%.2f%%", 100.0 * std_rel) + " from 1.54e9); exact scheme mean " + fmt("%.5g", exact) + " (" +
                fmt("%.2f", (exact - tol::table1_j) / r.j_stderr) + " stderr from 4.24e9)"};
}

Outcome criterion2() {
    const auto market = calibrated_market(CostKind::quadratic, 10.0);
    const auto cost = calibrated_cost(CostKind::quadratic);
    const auto sol = solve_ergodic_ode(cost, ergodic_params(market, cost));
    const auto& p = sol.params();
    const double slope = -std::sqrt(p.gamma * p.sigma * p.sigma * p.lambda);
    double worst = 0.0;
    for (std::size_t i = 1; i < sol.n_nodes(); ++i) {
        const double x = sol.x_scale(p.lambda) * sol.u_node(i);
        worst = std::max(worst, std::abs(sol.g(x) / (slope * x) - 1.0));
    }
    return {worst < tol::ode_rel, "max relative deviation from -sqrt(gamma sigma^2 lambda) x over " +
                                      std::to_string(sol.n_nodes()) + " nodes = " + g3(worst)};
}

Outcome criterion3() {
    const auto cost = calibrated_cost(CostKind::quadratic);
    std::vector<double> rel;
    std::string detail = "relative gap";
    for (double t : {10.0, 21.0, 42.0}) {
        const auto market = calibrated_market(CostKind::quadratic, t);
        const TimeGrid grid(t, 100);
        const GroundTruthEngine gt(market, cost, grid);
        const auto lo = leading(market, cost);
        const auto cmp = compare({&gt, lo.get()}, market, cost, grid, eval_config());
        rel.push_back((cmp.reports[0].j_mean - cmp.reports[1].j_mean) / std::abs(cmp.reports[0].j_mean));
        detail += " T=" + fmt("%g", t) + ":" + g3(rel.back());
        progress("criterion 3: T=" + fmt("%g", t) + " done");
    }
    const bool decreasing = rel[0] > rel[1] && rel[1] > rel[2];
    const auto market = calibrated_market(CostKind::quadratic, 2520.0);
    const TimeGrid grid(2520.0, 500);
    const GroundTruthEngine gt(market, cost, grid);
    const auto lo = leading(market, cost);
    const auto cmp = compare({&gt, lo.get()}, market, cost, grid, eval_config());
    const double gap = cmp.reports[0].j_mean - cmp.reports[1].j_mean;
    const bool below_noise = std::abs(gap) < cmp.reports[0].j_stderr;
    detail += "; T=2520 N=500 gap=" + g3(gap) + " vs ground-truth stderr " + g3(cmp.reports[0].j_stderr) +
              " (J " + g3(cmp.reports[0].j_mean) + " vs " + g3(cmp.reports[1].j_mean) + ")";
    return {decreasing && below_noise, detail};
}

Outcome criterion4() {
    const auto market = calibrated_market(CostKind::quadratic, 10.0);
    const auto cost = calibrated_cost(CostKind::quadratic);
    const TimeGrid grid(10.0, 168);
    const GroundTruthEngine gt(market, cost, grid);
    const auto lo = leading(market, cost);
    const auto cmp = compare({&gt, lo.get()}, market, cost, grid, eval_config());
    const double lo_mse = cmp.reports[1].terminal_mse;
    const double gt_mse = cmp.reports[0].terminal_mse;
    const double factor = std::max(lo_mse / tol::lo_terminal_mse, tol::lo_terminal_mse / lo_mse);
    return {factor <= tol::lo_terminal_factor && lo_mse >= tol::lo_over_truth * gt_mse,
            "leading-order terminal MSE " + g3(lo_mse) + " (factor " + fmt("%.3f", factor) + " from 6.40e-5), " +
                fmt("%.3g", lo_mse / gt_mse) + "x the ground truth's " + g3(gt_mse)};
}

struct LearnedT10 {
    MarketParams market = calibrated_market(CostKind::quadratic, 10.0);
    CostSpec cost = calibrated_cost(CostKind::quadratic);
    TimeGrid grid{10.0, 50};
    TrainConfig train;
    DeepHedgeModel deep;
};

Outcome criterion5(const LearnedT10& base) {
    FbsdeModel model = FbsdeModel::initialized(base.market, base.cost, base.grid, base.train.seed);
    train(model, base.train);
    progress("criterion 5: FBSDE T=10 trained");
    const FbsdeEngine fbsde(std::move(model));
    const GroundTruthEngine gt(base.market, base.cost, base.grid);
    const auto cmp = compare({&gt, &fbsde}, base.market, base.cost, base.grid, eval_config());
    const double dist = cmp.pathwise[1][0];
    const double rel = std::abs(cmp.reports[1].j_mean / cmp.reports[0].j_mean - 1.0);
    const bool a = dist < tol::fbsde_pathwise && rel < tol::j_rel;
    std::string detail = "(a) T=10 N=50: pathwise distance " + g3(dist) + ", J " + g3(cmp.reports[1].j_mean) +
                         " vs " + g3(cmp.reports[0].j_mean) + " (" + fmt("%.3f%%", 100.0 * rel) + ")";

    const std::string cfg_path = std::string(HEDGE_SOURCE_DIR) + "/configs/table04_quadratic_T252.json";
    const RunConfig c = parse_config(apply_paper_scale(nn::read_json_file(cfg_path)));
    EvalReport report;
    std::string error;
    try {
        FbsdeModel big = FbsdeModel::initialized(c.market, c.cost, c.grid, c.fbsde_train.seed);
        train(big, c.fbsde_train);
        progress("criterion 5: FBSDE T=252 trained");
        report = evaluate(FbsdeEngine(std::move(big)), c.market, c.cost, c.grid, eval_config());
        if (report.failed) error = report.error;
    } catch (const NonFiniteError& e) {
        error = e.what();
    }
    const bool b = !error.empty();
    detail += "; (b) paper-scale T=252 N=" + std::to_string(c.grid.n_steps()) + ": ";
    detail += b ? "NaN report (" + error + ")"
                : "finite report, J=" + g3(report.j_mean) + ", terminal MSE " + g3(report.terminal_mse);
    return {a && b, detail};
}

Outcome criterion6(LearnedT10& base) {
    base.deep = DeepHedgeModel::initialized(base.market, base.cost, base.grid, base.train.seed);
    train(base.deep, base.train);
    progress("criterion 6: deep hedging quadratic trained");
    const DeepHedgeEngine dh(base.deep);
    const GroundTruthEngine gt(base.market, base.cost, base.grid);
    const auto cmp = compare({&gt, &dh}, base.market, base.cost, base.grid, eval_config());
    const double rel = std::abs(cmp.reports[1].j_mean / cmp.reports[0].j_mean - 1.0);
    const double gap_se = cmp.gaps[1].gap / cmp.gaps[1].gap_stderr;
    const bool a = rel < tol::j_rel;
    std::string detail = "(a) quadratic: J " + g3(cmp.reports[1].j_mean) + " vs " + g3(cmp.reports[0].j_mean) + " (" +
                         fmt("%.3f%%", 100.0 * rel) + ", gap " + fmt("%.1f", gap_se) + " paired stderr, terminal MSE " +
                         g3(cmp.reports[1].terminal_mse) + ")";

    const auto pm = calibrated_market(CostKind::power, 10.0);
    const auto pc = calibrated_cost(CostKind::power);
    DeepHedgeModel power = DeepHedgeModel::initialized(pm, pc, base.grid, base.train.seed);
    train(power, base.train);
    progress("criterion 6: deep hedging power trained");
    const DeepHedgeEngine pdh(std::move(power));
    const auto lo = leading(pm, pc);
    const auto pcmp = compare({lo.get(), &pdh}, pm, pc, base.grid, eval_config());
    const double diff = pcmp.reports[1].j_mean - pcmp.reports[0].j_mean;
    const bool b = diff > 0.0;
    detail += "; (b) q=1.5: deep hedging " + g3(pcmp.reports[1].j_mean) + " vs leading order " +
              g3(pcmp.reports[0].j_mean);
    return {a && b, detail};
}

Outcome criterion7(const LearnedT10& base) {
    // M = N: nothing is learned and every step follows the leading order.
    const auto lo = leading(base.market, base.cost);
    PastingConfig all_lo{0.5 * base.grid.dt() / std::sqrt(base.cost.lambda), lo};
    const auto m_n = pasted_model(base.market, base.cost, base.grid, all_lo, base.train.seed);
    const bool a = m_n.first_step == base.grid.n_steps() &&
                   same_report(evaluate(pasted_engine(m_n), base.market, base.cost, base.grid, eval_config()),
                               evaluate(*lo, base.market, base.cost, base.grid, eval_config()));

    // M = 0: the pasted model is a plain deep-hedging model trained identically.
    PastingConfig all_dh{1e3 * base.grid.horizon() / std::sqrt(base.cost.lambda), lo};
    auto m_0 = pasted_model(base.market, base.cost, base.grid, all_dh, base.train.seed);
    train(m_0, base.train);
    progress("criterion 7: M=0 pasted model trained");
    const bool b = m_0.first_step == 0 && m_0.nets == base.deep.nets &&
                   same_report(evaluate(pasted_engine(m_0), base.market, base.cost, base.grid, eval_config()),
                               evaluate(DeepHedgeEngine(base.deep), base.market, base.cost, base.grid, eval_config()));

    // Default window on a long horizon: trained terminal networks versus stopping at the seam.
    const auto market = calibrated_market(CostKind::quadratic, 252.0);
    const TimeGrid grid(252.0, 252);
    const auto lo252 = leading(market, base.cost);
    const PastingConfig window{0.0, lo252};
    auto trained = pasted_model(market, base.cost, grid, window, base.train.seed);
    train(trained, base.train);
    progress("criterion 7: T=252 pasted model trained");
    const auto untrained = untrained_pasted_model(market, base.cost, grid, window);
    const auto e_trained = pasted_engine(trained);
    const auto e_untrained = pasted_engine(untrained);
    const auto cmp = compare({&e_trained, &e_untrained}, market, base.cost, grid, eval_config());
    const bool c = cmp.reports[0].j_mean >= cmp.reports[1].j_mean - cmp.reports[1].j_stderr;
    return {a && b && c, std::string("(a) M=N equals leading order bitwise: ") + (a ? "yes" : "no") +
                             "; (b) M=0 equals deep hedging bitwise: " + (b ? "yes" : "no") +
                             "; (c) T=252 M=" + std::to_string(trained.first_step) + ": trained " +
                             g3(cmp.reports[0].j_mean) + " vs untrained " + g3(cmp.reports[1].j_mean) +
                             " (stderr " + g3(cmp.reports[1].j_stderr) + ")"};
}

Outcome criterion8(const LearnedT10& base) {
    std::string detail;
    bool ok = true;

    double grad = 0.0;
    for (const auto& spec : {nn::NetSpec::fbsde(), nn::NetSpec::deep_hedging(), nn::NetSpec::linear(3, 1)}) {
        grad = std::max(grad, checks::network_gradient_check(spec, tol::grad_points, 2024).max_rel_err);
    }
    ok = ok && grad < tol::grad_rel;
    detail += "gradient check " + g3(grad);

    double fy = 0.0, rt = 0.0;
    for (const auto& cost : {CostSpec::quadratic(1.0), CostSpec::power(1.5, 1.0), CostSpec::power(1.2, 1.0),
                             CostSpec::power(1.9, 1.0)}) {
        fy = std::max(fy, checks::fenchel_young_max_err(cost, 100000, 7));
        rt = std::max(rt, checks::marginal_round_trip_max_err(cost, 100000, 8));
    }
    ok = ok && fy < tol::fenchel_young && rt < tol::round_trip;
    detail += ", Fenchel-Young " + g3(fy) + ", round trip " + g3(rt);

    bool shape = true;
    double ratio = 0.0;
    for (auto kind : {CostKind::quadratic, CostKind::power}) {
        const auto market = calibrated_market(kind, 10.0);
        const auto cost = calibrated_cost(kind);
        const auto sol = solve_ergodic_ode(cost, ergodic_params(market, cost));
        const double xs = sol.x_scale(sol.params().lambda);
        shape = shape && sol.g(0.0) == 0.0;
        for (std::size_t i = 1; i < sol.n_nodes(); ++i) {
            const double x = xs * sol.u_node(i);
            shape = shape && sol.g(-x) == -sol.g(x) && sol.g(x) < 0.0 && sol.v_nodes()[i] <= sol.v_nodes()[i - 1];
        }
        if (kind == CostKind::power) ratio = sol.asymptote_ratio();
    }
    ok = ok && shape && std::abs(ratio - 1.0) <= tol::growth_ratio;
    detail += std::string(", g odd/monotone/signed: ") + (shape ? "yes" : "no") + ", growth ratio at x_max " +
              fmt("%.4f", ratio);

    const DeepHedgeEngine dh(base.deep);
    const GroundTruthEngine gt(base.market, base.cost, base.grid);
    bool chunk = true;
    for (const StrategyEngine* e : {static_cast<const StrategyEngine*>(&gt), static_cast<const StrategyEngine*>(&dh)}) {
        auto cfg = eval_config(5000);
        cfg.workers = 1;
        const auto ref = evaluate(*e, base.market, base.cost, base.grid, cfg);
        for (std::size_t c : {7u, 1000u, 8192u}) {
            for (std::size_t w : {1u, 3u}) {
                cfg.chunk = c;
                cfg.workers = w;
                chunk = chunk && same_report(ref, evaluate(*e, base.market, base.cost, base.grid, cfg));
            }
        }
    }
    ok = ok && chunk;
    detail += std::string(", chunk/worker invariance bitwise: ") + (chunk ? "yes" : "no");
    return {ok, detail};
}

}  // namespace

int main() {
    LearnedT10 base;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"closed-form reproduction", criterion1},
        {"ergodic ODE vs analytic", criterion2},
        {"leading-order gap trend", criterion3},
        {"leading-order terminal MSE", criterion4},
        {"FBSDE convergence and long-horizon failure", [&] { return criterion5(base); }},
        {"deep hedging accuracy", [&] { return criterion6(base); }},
        {"pasting properties", [&] { return criterion7(base); }},
        {"numerics suite", [&] { return criterion8(base); }},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        progress("criterion " + std::to_string(i + 1) + ": " + criteria[i].first);
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
