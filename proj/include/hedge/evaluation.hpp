#pragma once

#include "hedge/engine.hpp"
#include "hedge/market.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hedge {

/// Streaming mean and variance (Welford), mergeable in a fixed order (Chan et al.).
struct RunningStats {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x);
    void merge(const RunningStats& other);
    /// Sample variance; 0 for fewer than two observations.
    double variance() const;
};

struct EvalConfig {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    std::size_t workers = 0;    // 0 = hardware concurrency
    std::size_t chunk = 1024;   // paths stepped together; results do not depend on it

    void validate() const;
};

/// Paths are reduced in fixed blocks of this many global path indices.
inline constexpr std::size_t kReductionBlock = 1024;

struct EvalReport {
    std::string strategy;
    double j_mean = 0.0;
    double j_std = 0.0;     // per-path standard deviation
    double j_stderr = 0.0;  // j_std / sqrt(n_paths)
    double ci_low = 0.0;    // 95% normal interval
    double ci_high = 0.0;
    double terminal_mse = 0.0;  // mean (rate_{N-1} / s)^2
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    double horizon = 0.0;
    std::size_t n_steps = 0;
    bool failed = false;
    std::string error;  // NonFinite diagnostic when failed
    double wall_seconds = 0.0;
};

/// Monte Carlo estimate of the discretized goal
///   J = (1/(N+1)) sum_{m=0}^{N} [phi mu - (gamma/2)(sigma phi + xi)^2 - lambda_t G(rate)]
/// with rate_N = 0. Path p uses stream (seed, p). Bit-identical for every
/// worker count and chunk size. NonFinite rates yield a failed report.
EvalReport evaluate(const StrategyEngine& engine, const MarketParams& market, const CostSpec& cost,
                    const TimeGrid& grid, const EvalConfig& config);

struct GapRow {
    std::string strategy;
    std::string reference;  // engine with the largest j_mean
    double gap = 0.0;       // J_reference - J_strategy on common paths
    double gap_stderr = 0.0;
};

struct Comparison {
    std::vector<EvalReport> reports;  // in engine order
    std::vector<GapRow> gaps;
    double sqrt_lambda_over_t = 0.0;
    /// ratio[a][b] = sum (rate_a - rate_b)^2 dt / sum rate_b^2 dt; NaN if undefined.
    std::vector<std::vector<double>> pathwise;
};

/// Evaluates all engines on identical paths. A failing engine gets a NaN
/// report and the others continue. Requires at least two engines.
Comparison compare(const std::vector<const StrategyEngine*>& engines, const MarketParams& market,
                   const CostSpec& cost, const TimeGrid& grid, const EvalConfig& config);

/// E[sum (rate_a - rate_b)^2 dt] / E[sum rate_b^2 dt] on common paths.
/// Throws std::domain_error if engine b never trades.
double pathwise_distance(const StrategyEngine& a, const StrategyEngine& b, const MarketParams& market,
                         const CostSpec& cost, const TimeGrid& grid, const EvalConfig& config);

/// Per-step mean and 5/50/95% quantiles of the rate and the position.
struct PathProfile {
    std::string strategy;
    std::vector<double> times;
    std::vector<double> rate_mean, rate_q05, rate_q50, rate_q95;  // m < N
    std::vector<double> phi_mean, phi_q05, phi_q50, phi_q95;      // m <= N
};

PathProfile path_profile(const StrategyEngine& engine, const MarketParams& market, const CostSpec& cost,
                         const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed);
/// Columns: t, rate_mean, rate_q05, rate_q50, rate_q95, phi_mean, phi_q05, phi_q50, phi_q95
/// (rate columns empty at t = T).
void write_profile_csv(const std::string& path, const PathProfile& profile);

/// "method,T,N,j_mean,j_std,j_stderr,terminal_mse,n_paths"; failed rows print NaN.
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);
void write_reports_csv(const std::string& path, const std::vector<EvalReport>& reports);

}  // namespace hedge
