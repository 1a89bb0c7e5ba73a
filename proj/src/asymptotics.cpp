#include "hedge/asymptotics.hpp"

#include "hedge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hedge {

ErgodicParams ergodic_params(const MarketParams& market, const CostSpec& cost) {
    ErgodicParams p;
    p.gamma = market.gamma;
    p.sigma = market.sigma;
    p.abar = market.a_bar();
    p.lambda = cost.lambda * cost.liquidity.level();
    return p;
}

void ShootingConfig::validate() const {
    if (!(u_max > 0.0)) throw std::invalid_argument("u_max must be positive");
    if (!(h > 0.0) || h > u_max) throw std::invalid_argument("step h must lie in (0, u_max]");
    if (!(slope_lo < slope_hi) || slope_hi > 0.0) throw std::invalid_argument("slope bracket needs a < b <= 0");
    if (max_bisection < 1) throw std::invalid_argument("max_bisection must be positive");
    if (!(blowup_factor > 1.0)) throw std::invalid_argument("blowup_factor must exceed 1");
    if (!(agree_tol > 0.0)) throw std::invalid_argument("agree_tol must be positive");
    if (!(horizon_cap > 0.0)) throw std::invalid_argument("horizon_cap must be positive");
}

namespace {

double ode_accel(double u, double v, double dv, double r) {
    double damp;
    if (r == 1.0) {
        damp = v;
    } else if (r == 2.0) {
        damp = std::abs(v) * v;
    } else {
        damp = std::copysign(std::pow(std::abs(v), r), v);
    }
    return u - damp * dv;
}

double asymptote_w(double u, double p) { return std::pow(p * u * u / 2.0, 1.0 / p); }

// Relative slack at the table edge, so that x_max(lambda) itself is evaluable.
constexpr double kEdgeSlack = 1e-12;

enum class Side { none, low, high };

class Shooter {
public:
    Shooter(const ShootingConfig& cfg, double r) : cfg_(cfg), r_(r), p_(r + 1.0) {}

    void rk4(std::size_t k, double& v, double& dv) const {
        const double h = cfg_.h;
        const double u = static_cast<double>(k) * h;
        const double um = u + 0.5 * h;
        const double u1 = static_cast<double>(k + 1) * h;
        const double k1v = dv;
        const double k1d = ode_accel(u, v, dv, r_);
        const double k2v = dv + 0.5 * h * k1d;
        const double k2d = ode_accel(um, v + 0.5 * h * k1v, k2v, r_);
        const double k3v = dv + 0.5 * h * k2d;
        const double k3d = ode_accel(um, v + 0.5 * h * k2v, k3v, r_);
        const double k4v = dv + h * k3d;
        const double k4d = ode_accel(u1, v + h * k3v, k4v, r_);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        dv += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
    }

    Side check(std::size_t k, double v, double dv) const {
        if (std::isnan(v) || std::isnan(dv)) return Side::low;
        if (v > 0.0 || dv > 0.0) return Side::high;
        const double u = static_cast<double>(k) * cfg_.h;
        if (v < -cfg_.blowup_factor * asymptote_w(u, p_)) return Side::low;
        return Side::none;
    }

    Side classify(std::size_t k0, double v0, double slope) const {
        double v = v0;
        double dv = slope;
        const auto cap = k0 + static_cast<std::size_t>(std::ceil(cfg_.horizon_cap / cfg_.h));
        for (std::size_t k = k0; k < cap; ++k) {
            rk4(k, v, dv);
            const Side s = check(k + 1, v, dv);
            if (s != Side::none) return s;
        }
        const double u = static_cast<double>(cap) * cfg_.h;
        return v > -asymptote_w(u, p_) ? Side::high : Side::low;
    }

    bool straddles(std::size_t k0, double v0, double lo, double hi) const {
        return classify(k0, v0, lo) == Side::low && classify(k0, v0, hi) == Side::high;
    }

    void bisect(std::size_t k0, double v0, double& lo, double& hi) const {
        for (int it = 0; it < cfg_.max_bisection; ++it) {
            const double mid = lo + 0.5 * (hi - lo);
            if (mid <= lo || mid >= hi) return;
            if (classify(k0, v0, mid) == Side::low) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double mid = lo + 0.5 * (hi - lo);
        if (mid > lo && mid < hi) throw NoConvergence("ergodic ODE: slope bisection exhausted its iterations");
    }

    // Integrates both bracketing trajectories from k0 and appends the averaged
    // states while they agree. Returns the number of appended nodes.
    std::size_t accept(std::size_t k0, double v0, double lo, double hi, std::vector<double>& v_out,
                       std::vector<double>& dv_out) const {
        double vl = v0, dl = lo, vh = v0, dh = hi;
        const auto cap = k0 + static_cast<std::size_t>(std::ceil(cfg_.horizon_cap / cfg_.h));
        std::size_t n = 0;
        for (std::size_t k = k0; k < cap; ++k) {
            rk4(k, vl, dl);
            rk4(k, vh, dh);
            if (check(k + 1, vl, dl) != Side::none || check(k + 1, vh, dh) != Side::none) break;
            const double v = 0.5 * (vl + vh);
            const double dv = 0.5 * (dl + dh);
            if (std::abs(vl - vh) > cfg_.agree_tol * std::max(1.0, std::abs(v)) ||
                std::abs(dl - dh) > cfg_.agree_tol * std::max(1.0, std::abs(dv))) {
                break;
            }
            v_out.push_back(v);
            dv_out.push_back(dv);
            ++n;
        }
        return n;
    }

private:
    const ShootingConfig& cfg_;
    double r_;
    double p_;
};

void hermite_basis(double t, double& h00, double& h10, double& h01, double& h11) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    h10 = t3 - 2.0 * t2 + t;
    h01 = -2.0 * t3 + 3.0 * t2;
    h11 = t3 - t2;
}

void hermite_basis_derivative(double t, double& d00, double& d10, double& d01, double& d11) {
    const double t2 = t * t;
    d00 = 6.0 * t2 - 6.0 * t;
    d10 = 3.0 * t2 - 4.0 * t + 1.0;
    d01 = -6.0 * t2 + 6.0 * t;
    d11 = 3.0 * t2 - 2.0 * t;
}

}  // namespace

ErgodicSolution::ErgodicSolution(CostSpec cost, ErgodicParams params, ShootingConfig config, std::vector<double> v,
                                 std::vector<double> dv)
    : cost_(std::move(cost)), params_(params), config_(config), v_(std::move(v)), dv_(std::move(dv)) {
    if (v_.size() < 2 || v_.size() != dv_.size()) throw std::invalid_argument("ergodic table needs >= 2 nodes");
    r_ = 1.0 / (cost_.exponent() - 1.0);
    slope_ = dv_;
    const double h = config_.h;
    for (std::size_t i = 0; i + 1 < v_.size(); ++i) {
        const double delta = (v_[i + 1] - v_[i]) / h;
        if (delta == 0.0) {
            slope_[i] = 0.0;
            slope_[i + 1] = 0.0;
            continue;
        }
        double a = slope_[i] / delta;
        double b = slope_[i + 1] / delta;
        if (a < 0.0) slope_[i] = 0.0, a = 0.0;
        if (b < 0.0) slope_[i + 1] = 0.0, b = 0.0;
        const double s = a * a + b * b;
        if (s > 9.0) {
            const double tau = 3.0 / std::sqrt(s);
            slope_[i] = tau * a * delta;
            slope_[i + 1] = tau * b * delta;
        }
    }
}

std::size_t ErgodicSolution::interval(double u) const {
    if (u > u_max() * (1.0 + kEdgeSlack)) throw ExtrapolationBeyondGrid(u, u_max());
    const auto i = static_cast<std::size_t>(u / config_.h);
    return std::min(i, v_.size() - 2);
}

double ErgodicSolution::v_at(double u) const {
    const double a = std::abs(u);
    const std::size_t i = interval(a);
    const double h = config_.h;
    const double t = (a - u_node(i)) / h;
    double h00, h10, h01, h11;
    hermite_basis(t, h00, h10, h01, h11);
    const double val = h00 * v_[i] + h10 * h * slope_[i] + h01 * v_[i + 1] + h11 * h * slope_[i + 1];
    return u < 0.0 ? -val : val;
}

double ErgodicSolution::dv_at(double u) const {
    const double a = std::abs(u);
    const std::size_t i = interval(a);
    const double h = config_.h;
    const double t = (a - u_node(i)) / h;
    double h00, h10, h01, h11;
    hermite_basis(t, h00, h10, h01, h11);
    const double d0 = accel(u_node(i), v_[i], dv_[i]);
    const double d1 = accel(u_node(i + 1), v_[i + 1], dv_[i + 1]);
    return h00 * dv_[i] + h10 * h * d0 + h01 * dv_[i + 1] + h11 * h * d1;
}

double ErgodicSolution::d2v_at(double u) const {
    const double a = std::abs(u);
    const std::size_t i = interval(a);
    const double h = config_.h;
    const double t = (a - u_node(i)) / h;
    double d00, d10, d01, d11;
    hermite_basis_derivative(t, d00, d10, d01, d11);
    const double d0 = accel(u_node(i), v_[i], dv_[i]);
    const double d1 = accel(u_node(i + 1), v_[i + 1], dv_[i + 1]);
    const double val = (d00 * dv_[i] + d01 * dv_[i + 1]) / h + d10 * d0 + d11 * d1;
    return u < 0.0 ? -val : val;
}

double ErgodicSolution::accel(double u, double v, double dv) const { return ode_accel(u, v, dv, r_); }

double ErgodicSolution::residual(double u) const { return d2v_at(u) - accel(u, v_at(u), dv_at(u)); }

double ErgodicSolution::max_midpoint_residual() const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < v_.size(); ++i) {
        worst = std::max(worst, std::abs(residual(u_node(i) + 0.5 * config_.h)));
    }
    return worst;
}

double ErgodicSolution::asymptote(double u) const { return asymptote_w(u, r_ + 1.0); }

double ErgodicSolution::x_scale(double lambda) const {
    const double q = cost_.exponent();
    const double a2 = params_.abar * params_.abar;
    const double gs2 = params_.gamma * params_.sigma * params_.sigma;
    return std::pow(lambda * a2 / (2.0 * gs2) * std::pow(a2 / 2.0, q - 1.0), 1.0 / (q + 2.0));
}

double ErgodicSolution::g_scale(double lambda) const {
    const double x = x_scale(lambda);
    const double gs2 = params_.gamma * params_.sigma * params_.sigma;
    return 2.0 * gs2 * x * x * x / (params_.abar * params_.abar);
}

double ErgodicSolution::g(double x, double lambda) const {
    const double scale = x_scale(lambda);
    const double u = std::abs(x) / scale;
    if (u > u_max() * (1.0 + kEdgeSlack)) throw ExtrapolationBeyondGrid(std::abs(x), scale * u_max());
    const double val = g_scale(lambda) * v_at(u);
    return x < 0.0 ? -val : val;
}

double ErgodicSolution::g_prime(double x, double lambda) const {
    const double scale = x_scale(lambda);
    const double u = std::abs(x) / scale;
    if (u > u_max() * (1.0 + kEdgeSlack)) throw ExtrapolationBeyondGrid(std::abs(x), scale * u_max());
    return g_scale(lambda) / scale * dv_at(u);
}

double ErgodicSolution::slope0() const { return g_scale(params_.lambda) / x_scale(params_.lambda) * dv_.front(); }

double ErgodicSolution::asymptote_ratio() const {
    const double x = x_max();
    const double lambda = params_.lambda;
    const double gs2 = params_.gamma * params_.sigma * params_.sigma;
    const double envelope = -lambda * cost_legendre_inverse(cost_, gs2 * x * x / (2.0 * lambda));
    return g(x) / envelope;
}

ErgodicSolution solve_ergodic_ode(const CostSpec& cost, const ErgodicParams& params, const ShootingConfig& config) {
    cost.validate();
    config.validate();
    if (params.abar == 0.0) throw std::invalid_argument("ergodic ODE requires abar != 0");
    if (!(params.lambda > 0.0)) throw std::invalid_argument("ergodic ODE requires lambda > 0");
    if (!(params.gamma > 0.0) || !(params.sigma > 0.0)) throw std::invalid_argument("gamma and sigma must be positive");

    const double r = 1.0 / (cost.exponent() - 1.0);
    const Shooter shooter(config, r);
    const auto n_target = static_cast<std::size_t>(std::llround(config.u_max / config.h));

    double lo = config.slope_lo;
    double hi = config.slope_hi;
    if (!shooter.straddles(0, 0.0, lo, hi)) {
        throw BracketFailure("ergodic ODE: slope bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                             "] does not straddle the solution");
    }
    shooter.bisect(0, 0.0, lo, hi);

    std::vector<double> v{0.0};
    std::vector<double> dv{lo + 0.5 * (hi - lo)};
    std::size_t k0 = 0;
    while (true) {
        const std::size_t added = shooter.accept(k0, v.back(), lo, hi, v, dv);
        if (added == 0) throw NoConvergence("ergodic ODE: marching stalled at u = " + std::to_string(k0 * config.h));
        k0 += added;
        if (k0 >= n_target) break;

        const double s0 = dv.back();
        double delta = 1e-6 * std::max(1.0, std::abs(s0));
        bool found = false;
        for (int tries = 0; tries < 30 && !found; ++tries, delta *= 8.0) {
            lo = s0 - delta;
            hi = std::min(s0 + delta, 0.0);
            if (lo < hi) found = shooter.straddles(k0, v.back(), lo, hi);
        }
        if (!found) {
            throw BracketFailure("ergodic ODE: no slope bracket when restarting at u = " + std::to_string(k0 * config.h));
        }
        shooter.bisect(k0, v.back(), lo, hi);
    }
    v.resize(n_target + 1);
    dv.resize(n_target + 1);
    return ErgodicSolution(cost, params, config, std::move(v), std::move(dv));
}

double leading_order_rate(const ErgodicSolution& sol, double phi, double phi_bar, double lambda_t) {
    const double d = phi - phi_bar;
    if (d == 0.0) return 0.0;
    return cost_marginal_inverse(sol.cost(), sol.g(d, lambda_t) / lambda_t);
}

std::vector<double> simulate_delta_sde(const ErgodicSolution& sol, const PathBatch& batch, double delta0) {
    const std::size_t n = batch.n_steps();
    const double dt = batch.dt();
    const double lambda = sol.params().lambda;
    const double abar = sol.params().abar;
    std::vector<double> out(batch.n_paths() * (n + 1));
    for (std::size_t p = 0; p < batch.n_paths(); ++p) {
        double* row = out.data() + p * (n + 1);
        double d = delta0;
        row[0] = d;
        for (std::size_t m = 0; m < n; ++m) {
            d = d + leading_order_rate(sol, d, 0.0, lambda) * dt - abar * batch.increment(p, m);
            row[m + 1] = d;
        }
    }
    return out;
}

double quadratic_finite_horizon_g(const CostSpec& cost, double t, double x, double gamma, double sigma,
                                  double horizon) {
    if (cost.exponent() != 2.0) throw std::invalid_argument("finite-horizon closed form needs quadratic costs");
    const double lambda = cost.lambda * cost.liquidity.level();
    const double gs2 = gamma * sigma * sigma;
    return -std::sqrt(gs2 * lambda) * x * std::tanh(std::sqrt(gs2 / lambda) * (horizon - t));
}

void save_ergodic(const std::string& path, const ErgodicSolution& sol) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw std::runtime_error("cannot open " + path + " for writing");
    const auto& p = sol.params();
    const auto& c = sol.config();
    std::fprintf(f, "# ergodic-solution 1\n# kind q gamma sigma abar lambda h u_max residual\n");
    std::fprintf(f, "%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                 sol.cost().kind == CostKind::quadratic ? "quadratic" : "power", sol.cost().exponent(), p.gamma,
                 p.sigma, p.abar, p.lambda, c.h, sol.u_max(), sol.max_midpoint_residual());
    std::fprintf(f, "# u v dv x g g_prime\n");
    const double xs = sol.x_scale(p.lambda);
    const double gsc = sol.g_scale(p.lambda);
    for (std::size_t i = 0; i < sol.n_nodes(); ++i) {
        const double u = sol.u_node(i);
        std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", u, sol.v_nodes()[i], sol.dv_nodes()[i], xs * u,
                     gsc * sol.v_nodes()[i], gsc / xs * sol.dv_nodes()[i]);
    }
    const bool ok = std::fclose(f) == 0;
    if (!ok) throw std::runtime_error("failed writing " + path);
}

ErgodicSolution load_ergodic(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "# ergodic-solution 1") throw std::runtime_error(path + " is not an ergodic solution table");
    std::getline(in, line);
    std::getline(in, line);
    std::istringstream head(line);
    std::string kind;
    double q, u_max, residual;
    ErgodicParams p;
    ShootingConfig c;
    head >> kind >> q >> p.gamma >> p.sigma >> p.abar >> p.lambda >> c.h >> u_max >> residual;
    if (!head) throw std::runtime_error(path + ": malformed header");
    c.u_max = u_max;
    CostSpec cost = kind == "quadratic" ? CostSpec::quadratic(p.lambda) : CostSpec::power(q, p.lambda);
    std::getline(in, line);
    std::vector<double> v;
    std::vector<double> dv;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        double u, vi, dvi;
        row >> u >> vi >> dvi;
        if (!row) throw std::runtime_error(path + ": malformed row");
        v.push_back(vi);
        dv.push_back(dvi);
    }
    return ErgodicSolution(cost, p, c, std::move(v), std::move(dv));
}

namespace {

class GroundTruthSession final : public EngineSession {
public:
    GroundTruthSession(const MarketParams& market, const TimeGrid& grid, GroundTruthForm form, double kappa,
                       std::size_t n)
        : market_(market), grid_(grid), form_(form), kappa_(kappa), integral_(n, 0.0) {}

    void rates(const StepBatch& step, std::span<double> out) override {
        const double tau = grid_.horizon() - step.t;
        if (form_ == GroundTruthForm::feedback) {
            const double c = -kappa_ * std::tanh(kappa_ * tau);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * (step.phi[i] - step.phi_bar[i]);
            return;
        }
        const double abar = market_.a_bar();
        if (step.m > 0) {
            const double w = 1.0 / std::cosh(kappa_ * (grid_.horizon() - grid_.time(step.m - 1)));
            for (std::size_t i = 0; i < out.size(); ++i) integral_[i] += abar * step.dw_prev[i] * w;
        }
        const double c = -kappa_ * std::sinh(kappa_ * tau);
        const double start = market_.delta_phi0() / std::cosh(kappa_ * grid_.horizon());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * (start - integral_[i]);
    }

private:
    const MarketParams& market_;
    const TimeGrid& grid_;
    GroundTruthForm form_;
    double kappa_;
    std::vector<double> integral_;
};

class LeadingOrderSession final : public EngineSession {
public:
    explicit LeadingOrderSession(const LeadingOrderEngine& engine) : engine_(engine), sol_(engine.solution()) {}

    void rates(const StepBatch& step, std::span<double> out) override {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = engine_.rate(sol_, step.t, step.w[i], step.phi[i], step.phi_bar[i]);
        }
    }

private:
    const LeadingOrderEngine& engine_;
    std::shared_ptr<const ErgodicSolution> sol_;
};

}  // namespace

GroundTruthEngine::GroundTruthEngine(MarketParams market, CostSpec cost, TimeGrid grid, GroundTruthForm form)
    : market_(market), cost_(std::move(cost)), grid_(grid), form_(form) {
    market_.validate();
    cost_.validate();
    if (cost_.exponent() != 2.0) throw std::invalid_argument("ground truth strategy needs quadratic costs");
    if (!cost_.liquidity.is_constant()) throw std::invalid_argument("ground truth strategy needs constant liquidity");
    if (!(cost_.lambda > 0.0)) throw std::invalid_argument("ground truth strategy needs lambda > 0");
    const double lambda = cost_.lambda * cost_.liquidity.level();
    kappa_ = std::sqrt(market_.gamma * market_.sigma * market_.sigma / lambda);
}

std::unique_ptr<EngineSession> GroundTruthEngine::start(std::size_t n_paths) const {
    return std::make_unique<GroundTruthSession>(market_, grid_, form_, kappa_, n_paths);
}

LeadingOrderEngine::LeadingOrderEngine(MarketParams market, CostSpec cost,
                                       std::shared_ptr<const ErgodicSolution> solution)
    : market_(market), cost_(std::move(cost)), solution_(std::move(solution)) {
    if (!solution_) throw std::invalid_argument("leading-order engine needs an ergodic solution");
    cost_.validate();
}

std::shared_ptr<const ErgodicSolution> LeadingOrderEngine::solution() const {
    std::lock_guard lock(mutex_);
    return solution_;
}

std::shared_ptr<const ErgodicSolution> LeadingOrderEngine::grow(double needed_u) const {
    std::lock_guard lock(mutex_);
    if (solution_->u_max() >= needed_u) return solution_;
    ShootingConfig cfg = solution_->config();
    while (cfg.u_max < needed_u) cfg.u_max *= 2.0;
    solution_ = std::make_shared<const ErgodicSolution>(solve_ergodic_ode(solution_->cost(), solution_->params(), cfg));
    return solution_;
}

double LeadingOrderEngine::rate(double t, double w, double phi, double phi_bar) const {
    auto sol = solution();
    return rate(sol, t, w, phi, phi_bar);
}

double LeadingOrderEngine::rate(std::shared_ptr<const ErgodicSolution>& sol, double t, double w, double phi,
                                double phi_bar) const {
    const double lambda_t = cost_.lambda_at(t, w);
    try {
        return leading_order_rate(*sol, phi, phi_bar, lambda_t);
    } catch (const ExtrapolationBeyondGrid&) {
        sol = grow(std::abs(phi - phi_bar) / sol->x_scale(lambda_t));
        return leading_order_rate(*sol, phi, phi_bar, lambda_t);
    }
}

std::unique_ptr<EngineSession> LeadingOrderEngine::start(std::size_t) const {
    return std::make_unique<LeadingOrderSession>(*this);
}

}  // namespace hedge
