#pragma once

#include "hedge/asymptotics.hpp"
#include "hedge/evaluation.hpp"
#include "hedge/market.hpp"
#include "hedge/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hedge {

enum class EngineKind { zero, ground_truth, leading_order, fbsde, deep_hedging, pasting };

std::string engine_name(EngineKind kind);
std::optional<EngineKind> parse_engine_name(const std::string& name);

/// One experiment. JSON layout (every section except grid is optional):
///   name, description
///   market      {"preset": "quadratic"|"power"} and/or explicit MarketParams fields
///   cost        {"preset": ...} and/or {"kind", "q", "lambda", "liquidity"}
///   grid        {"horizon", "n_steps"}
///   engine      engine used by evaluate / export-paths
///   compare     list of engine names evaluated on common paths
///   ground_truth  {"form": "feedback"|"explicit"}
///   leading_order {"solution": file, "u_max", "h"}
///   fbsde, deep_hedging  {"checkpoint": file, "train": {...}}
///   pasting     {"kappa", "checkpoint", "train": {...}}
///   evaluation  {"n_paths", "seed", "chunk", "profile_paths"}
///   output      {"dir"}
///   paper_scale JSON merge patch applied by --paper-scale
/// train: {"epochs", "batch_size", "seed", "lr", "lr_schedule": [[fraction, factor]...],
///         "sgd_fraction", "sgd_lr"}
struct RunConfig {
    std::string name;
    std::string description;
    MarketParams market;
    CostSpec cost;
    TimeGrid grid;
    EngineKind engine = EngineKind::ground_truth;
    std::vector<EngineKind> compare;

    GroundTruthForm ground_truth_form = GroundTruthForm::feedback;
    std::string ergodic_file;
    ShootingConfig shooting;

    TrainConfig fbsde_train;
    std::string fbsde_checkpoint;
    TrainConfig deep_hedging_train;
    std::string deep_hedging_checkpoint;
    TrainConfig pasting_train;
    std::string pasting_checkpoint;
    double pasting_kappa = 0.0;  // 0 selects the default window

    EvalConfig evaluation;
    std::size_t profile_paths = 2000;
    std::string out_dir = "out";
    nlohmann::json paper_scale = nlohmann::json::object();
};

/// Every problem found in j, as "field.path: message". Empty means valid.
/// Relative file references are resolved against base_dir.
std::vector<std::string> validate_config(const nlohmann::json& j, const std::string& base_dir = "");

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// Throws ConfigError listing every violation.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "");
/// Fully explicit form: parse_config(emit_config(c)) reproduces c.
nlohmann::json emit_config(const RunConfig& config);

/// Applies the "paper_scale" merge patch of a raw config.
nlohmann::json apply_paper_scale(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& config);

}  // namespace hedge
