#pragma once

#include "hedge/asymptotics.hpp"
#include "hedge/engine.hpp"
#include "hedge/run_config.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hedge {

struct RunOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;  // overrides evaluation and training seeds
    std::optional<std::size_t> workers;
    std::optional<std::string> out_dir;
    bool paper_scale = false;
};

/// Reads, scales and validates a config file, applying command-line overrides.
RunConfig load_run_config(const RunOptions& options);

/// Builds engines for a run, loading or training models as needed and writing
/// every artifact under config.out_dir.
class EngineFactory {
public:
    EngineFactory(const RunConfig& config, std::ostream& log);

    std::shared_ptr<const LeadingOrderEngine> leading_order();
    /// Throws NonFiniteError if training a learned engine diverges.
    std::shared_ptr<const StrategyEngine> build(EngineKind kind);

    std::shared_ptr<const StrategyEngine> train_fbsde();
    std::shared_ptr<const StrategyEngine> train_deep_hedging();
    std::shared_ptr<const StrategyEngine> train_pasting();

private:
    std::string artifact(const std::string& file) const;

    RunConfig config_;
    std::ostream& log_;
    std::shared_ptr<const LeadingOrderEngine> leading_;
};

/// Subcommands: solve-ode, train-fbsde, train-deephedge, train-pasting,
/// evaluate, compare, export-paths, validate. Returns the process exit
/// status: 0 on success, 1 for invalid configurations, 2 when a result is
/// non-finite (the report then carries NaN and the diagnostic).
int run(const std::string& subcommand, const RunOptions& options, std::ostream& log);

}  // namespace hedge
