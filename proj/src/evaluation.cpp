#include "hedge/evaluation.hpp"

#include "hedge/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hedge {

void RunningStats::add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
}

void RunningStats::merge(const RunningStats& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(count);
    const double nb = static_cast<double>(other.count);
    const double n = na + nb;
    const double delta = other.mean - mean;
    mean += delta * (nb / n);
    m2 += other.m2 + delta * delta * (na * nb / n);
    count += other.count;
}

double RunningStats::variance() const { return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1); }

void EvalConfig::validate() const {
    if (n_paths == 0) throw std::invalid_argument("evaluation needs n_paths >= 1");
    if (chunk == 0) throw std::invalid_argument("evaluation chunk must be positive");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EngineTotals {
    RunningStats j;
    RunningStats terminal;
    double rate_sq = 0.0;  // sum rate^2 dt
    std::string error;
};

struct BlockResult {
    std::vector<EngineTotals> engines;
    std::vector<std::vector<RunningStats>> diff;  // J_a - J_b
    std::vector<std::vector<double>> cross;       // sum (rate_a - rate_b)^2 dt
};

struct Problem {
    const std::vector<const StrategyEngine*>& engines;
    const MarketParams& market;
    const CostSpec& cost;
    const TimeGrid& grid;
    const EvalConfig& config;
    bool pairwise;
};

class FailureFlags {
public:
    explicit FailureFlags(std::size_t k) : flags_(k) {
        for (auto& f : flags_) f.store(false);
    }
    bool dead(std::size_t e) const { return flags_[e].load(std::memory_order_relaxed); }
    void kill(std::size_t e) { flags_[e].store(true, std::memory_order_relaxed); }

private:
    std::vector<std::atomic<bool>> flags_;
};

void run_chunk(const Problem& pb, std::size_t first_path, std::size_t count, BlockResult& out, FailureFlags& flags) {
    const std::size_t k = pb.engines.size();
    const std::size_t steps = pb.grid.n_steps();
    const double dt = pb.grid.dt();
    const double inv_points = 1.0 / static_cast<double>(steps + 1);
    const double inv_s = 1.0 / pb.market.shares;
    const PathBatch batch = sample_brownian(pb.grid, count, pb.config.seed, first_path);

    std::vector<char> alive(k);
    std::vector<std::unique_ptr<EngineSession>> sessions(k);
    for (std::size_t e = 0; e < k; ++e) {
        alive[e] = !flags.dead(e) && out.engines[e].error.empty();
        if (alive[e]) sessions[e] = pb.engines[e]->start(count);
    }
    std::vector<double> w(count, 0.0), dw_prev(count, 0.0), xi(count), phi_bar(count), lam(count);
    std::vector<std::vector<double>> phi(k, std::vector<double>(count, pb.market.phi_init));
    std::vector<std::vector<double>> acc(k, std::vector<double>(count, 0.0));
    std::vector<std::vector<double>> rate(k, std::vector<double>(count, 0.0));
    std::vector<std::vector<double>> rate_sq(k, std::vector<double>(count, 0.0));
    std::vector<std::vector<double>> terminal(k, std::vector<double>(count, 0.0));
    std::vector<std::vector<std::vector<double>>> cross;
    if (pb.pairwise) cross.assign(k, std::vector<std::vector<double>>(k, std::vector<double>(count, 0.0)));

    const auto fail = [&](std::size_t e, const std::string& msg) {
        alive[e] = 0;
        sessions[e].reset();
        if (out.engines[e].error.empty()) out.engines[e].error = msg;
        flags.kill(e);
    };

    for (std::size_t m = 0; m <= steps; ++m) {
        const double t = pb.grid.time(m);
        for (std::size_t i = 0; i < count; ++i) {
            xi[i] = pb.market.endowment(w[i]);
            phi_bar[i] = pb.market.phi_bar(w[i]);
            lam[i] = pb.cost.lambda_at(t, w[i]);
        }
        for (std::size_t e = 0; e < k; ++e) {
            if (!alive[e]) continue;
            if (m < steps) {
                StepBatch sb{m, t, w, phi[e], xi, phi_bar, dw_prev};
                try {
                    sessions[e]->rates(sb, rate[e]);
                } catch (const NonFiniteError& ex) {
                    fail(e, ex.what());
                    continue;
                }
                bool finite = true;
                for (double r : rate[e]) finite = finite && std::isfinite(r);
                if (!finite) {
                    fail(e, pb.engines[e]->name() + " emitted a non-finite rate at step " + std::to_string(m));
                    continue;
                }
            } else {
                std::fill(rate[e].begin(), rate[e].end(), 0.0);
            }
            for (std::size_t i = 0; i < count; ++i) {
                const double r = rate[e][i];
                acc[e][i] += goal_integrand(pb.market, phi[e][i], xi[i], cost_value(pb.cost, r), lam[i]);
                if (m < steps) {
                    rate_sq[e][i] += (r * r) * dt;
                    if (m + 1 == steps) {
                        const double rs = r * inv_s;
                        terminal[e][i] = rs * rs;
                    }
                    phi[e][i] += r * dt;
                }
            }
        }
        if (m == steps) break;
        if (pb.pairwise) {
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) {
                    if (a == b || !alive[a] || !alive[b]) continue;
                    for (std::size_t i = 0; i < count; ++i) {
                        const double d = rate[a][i] - rate[b][i];
                        cross[a][b][i] += (d * d) * dt;
                    }
                }
            }
        }
        for (std::size_t i = 0; i < count; ++i) {
            dw_prev[i] = batch.increment(i, m);
            w[i] += dw_prev[i];
        }
    }

    std::vector<std::vector<double>> j(k, std::vector<double>(count, kNaN));
    for (std::size_t e = 0; e < k; ++e) {
        if (!alive[e]) continue;
        for (std::size_t i = 0; i < count; ++i) j[e][i] = acc[e][i] * inv_points;
        bool finite = true;
        for (double v : j[e]) finite = finite && std::isfinite(v);
        if (!finite) fail(e, pb.engines[e]->name() + " produced a non-finite goal");
    }
    for (std::size_t e = 0; e < k; ++e) {
        if (!alive[e]) continue;
        auto& tot = out.engines[e];
        for (std::size_t i = 0; i < count; ++i) {
            tot.j.add(j[e][i]);
            tot.terminal.add(terminal[e][i]);
            tot.rate_sq += rate_sq[e][i];
        }
    }
    if (!pb.pairwise) return;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            if (a == b || !alive[a] || !alive[b]) continue;
            for (std::size_t i = 0; i < count; ++i) {
                out.diff[a][b].add(j[a][i] - j[b][i]);
                out.cross[a][b] += cross[a][b][i];
            }
        }
    }
}

BlockResult run_block(const Problem& pb, std::size_t block, FailureFlags& flags) {
    const std::size_t k = pb.engines.size();
    BlockResult out;
    out.engines.resize(k);
    out.diff.assign(k, std::vector<RunningStats>(k));
    out.cross.assign(k, std::vector<double>(k, 0.0));
    const std::size_t begin = block * kReductionBlock;
    const std::size_t end = std::min(pb.config.n_paths, begin + kReductionBlock);
    for (std::size_t p = begin; p < end; p += pb.config.chunk) {
        run_chunk(pb, p, std::min(pb.config.chunk, end - p), out, flags);
    }
    return out;
}

BlockResult run_all(const Problem& pb) {
    pb.config.validate();
    for (const auto* e : pb.engines) {
        if (e == nullptr) throw std::invalid_argument("null strategy engine");
        e->check_grid(pb.grid);
    }
    const std::size_t k = pb.engines.size();
    const std::size_t n_blocks = (pb.config.n_paths + kReductionBlock - 1) / kReductionBlock;
    std::size_t workers = pb.config.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : pb.config.workers;
    workers = std::min(workers, n_blocks);

    std::vector<BlockResult> blocks(n_blocks);
    FailureFlags flags(k);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                blocks[b] = run_block(pb, b, flags);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n_blocks);
                return;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(work);
        for (auto& th : threads) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    BlockResult total;
    total.engines.resize(k);
    total.diff.assign(k, std::vector<RunningStats>(k));
    total.cross.assign(k, std::vector<double>(k, 0.0));
    for (const auto& blk : blocks) {
        for (std::size_t e = 0; e < k; ++e) {
            auto& t = total.engines[e];
            const auto& s = blk.engines[e];
            t.j.merge(s.j);
            t.terminal.merge(s.terminal);
            t.rate_sq += s.rate_sq;
            if (t.error.empty() && !s.error.empty()) t.error = s.error;
        }
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                total.diff[a][b].merge(blk.diff[a][b]);
                total.cross[a][b] += blk.cross[a][b];
            }
        }
    }
    for (std::size_t e = 0; e < k; ++e) {
        if (flags.dead(e) && total.engines[e].error.empty()) total.engines[e].error = "non-finite result";
    }
    return total;
}

EvalReport make_report(const StrategyEngine& engine, const EngineTotals& tot, const TimeGrid& grid,
                       const EvalConfig& config, double seconds) {
    EvalReport r;
    r.strategy = engine.name();
    r.n_paths = config.n_paths;
    r.seed = config.seed;
    r.horizon = grid.horizon();
    r.n_steps = grid.n_steps();
    r.wall_seconds = seconds;
    if (!tot.error.empty()) {
        r.failed = true;
        r.error = tot.error;
        r.j_mean = r.j_std = r.j_stderr = r.ci_low = r.ci_high = r.terminal_mse = kNaN;
        return r;
    }
    r.j_mean = tot.j.mean;
    r.j_std = std::sqrt(tot.j.variance());
    r.j_stderr = r.j_std / std::sqrt(static_cast<double>(tot.j.count));
    r.ci_low = r.j_mean - 1.959963984540054 * r.j_stderr;
    r.ci_high = r.j_mean + 1.959963984540054 * r.j_stderr;
    r.terminal_mse = tot.terminal.mean;
    return r;
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

EvalReport evaluate(const StrategyEngine& engine, const MarketParams& market, const CostSpec& cost,
                    const TimeGrid& grid, const EvalConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<const StrategyEngine*> engines{&engine};
    const Problem pb{engines, market, cost, grid, config, false};
    const BlockResult total = run_all(pb);
    return make_report(engine, total.engines[0], grid, config, elapsed(start));
}

Comparison compare(const std::vector<const StrategyEngine*>& engines, const MarketParams& market,
                   const CostSpec& cost, const TimeGrid& grid, const EvalConfig& config) {
    if (engines.size() < 2) throw std::invalid_argument("compare needs at least two engines");
    const auto start = std::chrono::steady_clock::now();
    const Problem pb{engines, market, cost, grid, config, true};
    const BlockResult total = run_all(pb);
    const double seconds = elapsed(start);
    const std::size_t k = engines.size();

    Comparison out;
    out.sqrt_lambda_over_t = std::sqrt(cost.lambda) / grid.horizon();
    for (std::size_t e = 0; e < k; ++e) out.reports.push_back(make_report(*engines[e], total.engines[e], grid, config, seconds));
    std::size_t best = k;
    for (std::size_t e = 0; e < k; ++e) {
        if (out.reports[e].failed) continue;
        if (best == k || out.reports[e].j_mean > out.reports[best].j_mean) best = e;
    }
    for (std::size_t e = 0; e < k; ++e) {
        GapRow g;
        g.strategy = out.reports[e].strategy;
        g.reference = best == k ? "" : out.reports[best].strategy;
        if (best == k || out.reports[e].failed) {
            g.gap = g.gap_stderr = kNaN;
        } else if (e != best) {
            const RunningStats& d = total.diff[best][e];
            g.gap = d.mean;
            g.gap_stderr = std::sqrt(d.variance() / static_cast<double>(d.count));
        }
        out.gaps.push_back(g);
    }
    out.pathwise.assign(k, std::vector<double>(k, kNaN));
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            if (out.reports[a].failed || out.reports[b].failed) continue;
            const double den = total.engines[b].rate_sq;
            if (a == b) {
                out.pathwise[a][b] = 0.0;
            } else if (den > 0.0) {
                out.pathwise[a][b] = total.cross[a][b] / den;
            }
        }
    }
    return out;
}

double pathwise_distance(const StrategyEngine& a, const StrategyEngine& b, const MarketParams& market,
                         const CostSpec& cost, const TimeGrid& grid, const EvalConfig& config) {
    const std::vector<const StrategyEngine*> engines{&a, &b};
    const Problem pb{engines, market, cost, grid, config, true};
    const BlockResult total = run_all(pb);
    for (const auto& e : total.engines) {
        if (!e.error.empty()) throw NonFiniteError(e.error);
    }
    const double den = total.engines[1].rate_sq;
    if (!(den > 0.0)) throw std::domain_error("pathwise distance: reference engine " + b.name() + " never trades");
    return total.cross[0][1] / den;
}

namespace {

// Linear interpolation between order statistics (the common "type 7" rule).
double quantile(std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto it = v.begin() + static_cast<std::ptrdiff_t>(lo);
    std::nth_element(v.begin(), it, v.end());
    const double a = *it;
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(it + 1, v.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

void summarize(std::vector<double> v, double& mean, double& q05, double& q50, double& q95) {
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    q05 = quantile(v, 0.05);
    q50 = quantile(v, 0.50);
    q95 = quantile(v, 0.95);
}

}  // namespace

PathProfile path_profile(const StrategyEngine& engine, const MarketParams& market, const CostSpec& cost,
                         const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    engine.check_grid(grid);
    const std::size_t steps = grid.n_steps();
    const PathBatch batch = sample_brownian(grid, n_paths, seed);
    auto session = engine.start(n_paths);
    std::vector<double> w(n_paths, 0.0), dw_prev(n_paths, 0.0), xi(n_paths), phi_bar(n_paths);
    std::vector<double> phi(n_paths, market.phi_init), rate(n_paths);
    (void)cost;

    PathProfile out;
    out.strategy = engine.name();
    out.times = grid.times();
    const auto push = [](std::vector<double>& v, double x) { v.push_back(x); };
    for (std::size_t m = 0; m <= steps; ++m) {
        double mean, q05, q50, q95;
        summarize(phi, mean, q05, q50, q95);
        push(out.phi_mean, mean);
        push(out.phi_q05, q05);
        push(out.phi_q50, q50);
        push(out.phi_q95, q95);
        if (m == steps) break;
        for (std::size_t i = 0; i < n_paths; ++i) {
            xi[i] = market.endowment(w[i]);
            phi_bar[i] = market.phi_bar(w[i]);
        }
        session->rates(StepBatch{m, grid.time(m), w, phi, xi, phi_bar, dw_prev}, rate);
        for (double r : rate) {
            if (!std::isfinite(r)) throw NonFiniteError(engine.name() + " emitted a non-finite rate at step " + std::to_string(m));
        }
        summarize(rate, mean, q05, q50, q95);
        push(out.rate_mean, mean);
        push(out.rate_q05, q05);
        push(out.rate_q50, q50);
        push(out.rate_q95, q95);
        for (std::size_t i = 0; i < n_paths; ++i) {
            phi[i] += rate[i] * grid.dt();
            dw_prev[i] = batch.increment(i, m);
            w[i] += dw_prev[i];
        }
    }
    return out;
}

void write_profile_csv(const std::string& path, const PathProfile& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    out << "t,rate_mean,rate_q05,rate_q50,rate_q95,phi_mean,phi_q05,phi_q50,phi_q95\n";
    for (std::size_t m = 0; m < p.times.size(); ++m) {
        out << p.times[m] << ',';
        if (m < p.rate_mean.size()) {
            out << p.rate_mean[m] << ',' << p.rate_q05[m] << ',' << p.rate_q50[m] << ',' << p.rate_q95[m] << ',';
        } else {
            out << ",,,,";
        }
        out << p.phi_mean[m] << ',' << p.phi_q05[m] << ',' << p.phi_q50[m] << ',' << p.phi_q95[m] << '\n';
    }
}

std::string report_csv_header() { return "method,T,N,j_mean,j_std,j_stderr,terminal_mse,n_paths"; }

std::string report_csv_row(const EvalReport& r) {
    std::ostringstream s;
    s.precision(10);
    const auto num = [&s](double v) {
        if (std::isnan(v)) {
            s << "NaN";
        } else {
            s << v;
        }
    };
    s << r.strategy << ',' << r.horizon << ',' << r.n_steps << ',';
    num(r.j_mean);
    s << ',';
    num(r.j_std);
    s << ',';
    num(r.j_stderr);
    s << ',';
    num(r.terminal_mse);
    s << ',' << r.n_paths;
    return s.str();
}

nlohmann::json to_json(const EvalReport& r) {
    const auto num = [](double v) -> nlohmann::json {
        if (std::isnan(v)) return "NaN";
        return v;
    };
    return {{"strategy", r.strategy},   {"j_mean", num(r.j_mean)},
            {"j_std", num(r.j_std)},    {"j_stderr", num(r.j_stderr)},
            {"ci95", {num(r.ci_low), num(r.ci_high)}},
            {"terminal_mse", num(r.terminal_mse)},
            {"n_paths", r.n_paths},     {"seed", r.seed},
            {"horizon", r.horizon},     {"n_steps", r.n_steps},
            {"failed", r.failed},       {"error", r.error},
            {"wall_seconds", r.wall_seconds}};
}

void write_reports_csv(const std::string& path, const std::vector<EvalReport>& reports) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << report_csv_header() << '\n';
    for (const auto& r : reports) out << report_csv_row(r) << '\n';
}

}  // namespace hedge
