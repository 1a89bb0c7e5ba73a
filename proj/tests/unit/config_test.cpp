#include "hedge/nn/checkpoint.hpp"
#include "hedge/run_config.hpp"
#include "hedge/runner.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hedge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> shipped_configs() {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(fs::path(HEDGE_SOURCE_DIR) / "configs")) {
        if (e.path().extension() == ".json") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

json tiny_config(const std::string& out_dir) {
    return {{"name", "tiny"},
            {"market", {{"preset", "quadratic"}}},
            {"cost", {{"preset", "quadratic"}}},
            {"grid", {{"horizon", 10}, {"n_steps", 8}}},
            {"engine", "ground_truth"},
            {"compare", {"ground_truth", "leading_order", "zero"}},
            {"deep_hedging", {{"train", {{"epochs", 3}, {"batch_size", 16}}}}},
            {"evaluation", {{"n_paths", 300}, {"seed", 5}, {"profile_paths", 20}}},
            {"output", {{"dir", out_dir}}}};
}

std::string write_config(const std::string& dir, const json& j) {
    const std::string path = dir + "/config.json";
    std::ofstream(path) << j.dump(2);
    return path;
}

bool has_violation(const std::vector<std::string>& v, const std::string& needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Config, ShippedConfigsValidateAtBothScales) {
    const auto files = shipped_configs();
    ASSERT_GE(files.size(), 10u);
    for (const auto& f : files) {
        const json j = nn::read_json_file(f.string());
        EXPECT_TRUE(validate_config(j, f.parent_path().string()).empty()) << f;
        EXPECT_TRUE(validate_config(apply_paper_scale(j), f.parent_path().string()).empty()) << f;
    }
}

TEST(Config, PaperScalePatchesGridAndPaths) {
    const json j = nn::read_json_file(std::string(HEDGE_SOURCE_DIR) + "/configs/table05_quadratic_T2520.json");
    const RunConfig desk = parse_config(j);
    const RunConfig paper = parse_config(apply_paper_scale(j));
    EXPECT_EQ(desk.grid.n_steps(), 500u);
    EXPECT_EQ(paper.grid.n_steps(), 2520u);
    EXPECT_EQ(paper.evaluation.n_paths, 100000000u);
    EXPECT_EQ(paper.grid.horizon(), desk.grid.horizon());
    EXPECT_NE(paper.out_dir, desk.out_dir);
}

TEST(Config, PowerExponentOutsideRangeIsRejected) {
    json j = tiny_config("out");
    j["cost"] = {{"kind", "power"}, {"q", 2.5}, {"lambda", 1e-6}};
    j["engine"] = "leading_order";
    j.erase("compare");
    const auto v = validate_config(j);
    EXPECT_TRUE(has_violation(v, "cost.q: q must lie in (1,2], got 2.5")) << ::testing::PrintToString(v);
}

TEST(Config, NegativePathCountIsRejected) {
    json j = tiny_config("out");
    j["evaluation"]["n_paths"] = -5;
    EXPECT_TRUE(has_violation(validate_config(j), "evaluation.n_paths: must be at least 1, got -5"));
    EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, ReportsEveryViolation) {
    json j = tiny_config("out");
    j["grid"]["n_steps"] = 0;
    j["market"]["horizon"] = 10;
    j["engine"] = "magic";
    j["extra"] = 1;
    j["fbsde"] = {{"checkpoint", "missing.json"}};
    const auto v = validate_config(j, "/nonexistent");
    EXPECT_TRUE(has_violation(v, "grid.n_steps"));
    EXPECT_TRUE(has_violation(v, "market.horizon"));
    EXPECT_TRUE(has_violation(v, "unknown engine 'magic'"));
    EXPECT_TRUE(has_violation(v, "extra: unknown section"));
    EXPECT_TRUE(has_violation(v, "fbsde.checkpoint: file '/nonexistent/missing.json' does not exist"));
    try {
        parse_config(j, "/nonexistent");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.violations(), v);
    }
}

TEST(Config, EngineRequirementsAreChecked) {
    json j = tiny_config("out");
    j["cost"] = {{"preset", "power"}};
    EXPECT_TRUE(has_violation(validate_config(j), "ground_truth requires quadratic costs"));
    j = tiny_config("out");
    j["cost"]["lambda"] = 0.0;
    EXPECT_TRUE(has_violation(validate_config(j), "requires cost.lambda > 0"));
    j = tiny_config("out");
    j["compare"] = {"zero"};
    EXPECT_TRUE(has_violation(validate_config(j), "compare: needs at least two engines"));
}

TEST(Config, EmitParseRoundTrip) {
    for (const auto& f : shipped_configs()) {
        const RunConfig c = parse_config(nn::read_json_file(f.string()));
        const json emitted = emit_config(c);
        EXPECT_TRUE(validate_config(emitted).empty()) << f;
        const RunConfig back = parse_config(emitted);
        EXPECT_EQ(emit_config(back), emitted) << f;
        EXPECT_EQ(back.grid, c.grid);
        EXPECT_EQ(back.market.xi_vol, c.market.xi_vol);
        EXPECT_EQ(back.cost.q, c.cost.q);
        EXPECT_EQ(back.compare, c.compare);
        EXPECT_EQ(back.deep_hedging_train.sgd_fraction, c.deep_hedging_train.sgd_fraction);
    }
}

TEST(Config, ExplicitOverridesApplyOnTopOfPresets) {
    json j = tiny_config("out");
    j["market"]["xi_vol"] = 1e10;
    j["cost"]["lambda"] = 2e-10;
    j["deep_hedging"]["train"]["lr_schedule"] = json::array({json::array({0.5, 0.2})});
    const RunConfig c = parse_config(j);
    EXPECT_EQ(c.market.xi_vol, 1e10);
    EXPECT_EQ(c.market.sigma, 1.88);
    EXPECT_EQ(c.cost.lambda, 2e-10);
    ASSERT_EQ(c.deep_hedging_train.lr_schedule.size(), 1u);
    EXPECT_EQ(c.deep_hedging_train.lr_schedule[0].factor, 0.2);
}

TEST(Runner, CommandLineOverrides) {
    const auto dir = fixtures::temp_dir("overrides");
    RunOptions o;
    o.config_path = write_config(dir, tiny_config(dir + "/out"));
    o.seed = 42;
    o.workers = 2;
    o.out_dir = dir + "/elsewhere";
    const RunConfig c = load_run_config(o);
    EXPECT_EQ(c.evaluation.seed, 42u);
    EXPECT_EQ(c.deep_hedging_train.seed, 42u);
    EXPECT_EQ(c.fbsde_train.seed, 42u);
    EXPECT_EQ(c.evaluation.workers, 2u);
    EXPECT_EQ(c.out_dir, dir + "/elsewhere");
}

TEST(Runner, ValidateSubcommand) {
    const auto dir = fixtures::temp_dir("validate");
    RunOptions o;
    o.config_path = write_config(dir, tiny_config(dir + "/out"));
    std::ostringstream log;
    EXPECT_EQ(run("validate", o, log), 0);
    EXPECT_EQ(log.str(), "ok\n");

    json bad = tiny_config(dir + "/out");
    bad["evaluation"]["n_paths"] = 0;
    o.config_path = write_config(dir, bad);
    std::ostringstream log2;
    EXPECT_EQ(run("validate", o, log2), 1);
    EXPECT_NE(log2.str().find("evaluation.n_paths"), std::string::npos);
    std::ostringstream log3;
    EXPECT_EQ(run("evaluate", o, log3), 1);
    EXPECT_THROW(run("bogus", RunOptions{write_config(dir, tiny_config(dir)), {}, {}, {}, false}, log3),
                 std::invalid_argument);
}

TEST(Runner, SolveEvaluateCompareAndExport) {
    const auto dir = fixtures::temp_dir("runner");
    const std::string out = dir + "/out";
    RunOptions o;
    o.config_path = write_config(dir, tiny_config(out));
    std::ostringstream log;
    ASSERT_EQ(run("solve-ode", o, log), 0) << log.str();
    EXPECT_TRUE(fs::exists(out + "/ergodic.txt"));

    ASSERT_EQ(run("evaluate", o, log), 0) << log.str();
    const std::string report = read_file(out + "/report.csv");
    EXPECT_EQ(report.rfind("method,T,N,j_mean,j_std,j_stderr,terminal_mse,n_paths", 0), 0u);
    EXPECT_NE(report.find("ground_truth,10,8,"), std::string::npos);
    const json rj = nn::read_json_file(out + "/report.json");
    EXPECT_EQ(rj.at(0).at("strategy"), "ground_truth");

    ASSERT_EQ(run("compare", o, log), 0) << log.str();
    const std::string table = read_file(out + "/table.csv");
    for (const char* name : {"ground_truth,", "leading_order,", "zero,"}) {
        EXPECT_NE(table.find(name), std::string::npos) << name;
    }
    const json cj = nn::read_json_file(out + "/compare.json");
    EXPECT_EQ(cj.at("rows").size(), 3u);
    EXPECT_TRUE(cj.contains("pathwise_distance"));

    ASSERT_EQ(run("export-paths", o, log), 0) << log.str();
    EXPECT_TRUE(fs::exists(out + "/paths_ground_truth.csv"));
}

TEST(Runner, TrainedModelIsSavedAndReused) {
    const auto dir = fixtures::temp_dir("train");
    const std::string out = dir + "/out";
    json j = tiny_config(out);
    j["engine"] = "deep_hedging";
    RunOptions o;
    o.config_path = write_config(dir, j);
    std::ostringstream log;
    ASSERT_EQ(run("train-deephedge", o, log), 0) << log.str();
    EXPECT_TRUE(fs::exists(out + "/deep_hedging_model.json"));
    EXPECT_TRUE(fs::exists(out + "/deep_hedging_loss.csv"));
    const std::string first = read_file(out + "/deep_hedging_model.json");

    std::ostringstream log2;
    ASSERT_EQ(run("evaluate", o, log2), 0) << log2.str();
    EXPECT_NE(log2.str().find("reusing deep_hedging model"), std::string::npos) << log2.str();
    EXPECT_EQ(read_file(out + "/deep_hedging_model.json"), first);

    j["deep_hedging"]["train"]["epochs"] = 4;
    write_config(dir, j);
    std::ostringstream log3;
    ASSERT_EQ(run("evaluate", o, log3), 0);
    EXPECT_EQ(log3.str().find("reusing"), std::string::npos);
}
