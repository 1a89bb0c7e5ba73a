#include "hedge/market.hpp"

#include "hedge/errors.hpp"
#include "hedge/rng.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace hedge {

ExtrapolationBeyondGrid::ExtrapolationBeyondGrid(double requested, double limit)
    : std::out_of_range("ergodic solution evaluated at |x| = " + std::to_string(requested) +
                        " beyond grid limit " + std::to_string(limit)),
      requested_(requested),
      limit_(limit) {}

Liquidity Liquidity::constant(double level) {
    if (!(level > 0.0) || !std::isfinite(level)) {
        throw std::invalid_argument("liquidity level must be positive and finite");
    }
    Liquidity l;
    l.level_ = level;
    return l;
}

Liquidity Liquidity::process(Process fn) {
    if (!fn) throw std::invalid_argument("liquidity process must be callable");
    Liquidity l;
    l.fn_ = std::move(fn);
    return l;
}

double Liquidity::at(double t, double w) const {
    if (!fn_) return level_;
    const double v = fn_(t, w);
    if (!(v > 0.0)) throw std::domain_error("liquidity process returned a nonpositive value");
    return v;
}

CostSpec CostSpec::quadratic(double lambda) {
    CostSpec c;
    c.kind = CostKind::quadratic;
    c.q = 2.0;
    c.lambda = lambda;
    return c;
}

CostSpec CostSpec::power(double q, double lambda) {
    CostSpec c;
    c.kind = CostKind::power;
    c.q = q;
    c.lambda = lambda;
    return c;
}

double CostSpec::conjugate_exponent() const noexcept {
    const double e = exponent();
    return e / (e - 1.0);
}

void CostSpec::validate() const {
    if (kind == CostKind::power && !(q > 1.0 && q <= 2.0)) {
        throw std::invalid_argument("q must lie in (1, 2], got " + std::to_string(q));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("lambda must be finite and nonnegative");
    }
    if (liquidity.is_constant() && !(liquidity.level() > 0.0)) {
        throw std::invalid_argument("liquidity level must be positive");
    }
}

double cost_value(const CostSpec& spec, double x) {
    if (spec.kind == CostKind::quadratic) return 0.5 * x * x;
    return std::pow(std::abs(x), spec.q) / spec.q;
}

double cost_marginal(const CostSpec& spec, double x) {
    if (spec.kind == CostKind::quadratic) return x;
    return std::copysign(std::pow(std::abs(x), spec.q - 1.0), x);
}

double cost_marginal_inverse(const CostSpec& spec, double y) {
    if (spec.kind == CostKind::quadratic) return y;
    return std::copysign(std::pow(std::abs(y), 1.0 / (spec.q - 1.0)), y);
}

double cost_marginal_inverse_derivative(const CostSpec& spec, double y) {
    if (spec.kind == CostKind::quadratic) return 1.0;
    const double r = 1.0 / (spec.q - 1.0);
    if (y == 0.0) return r == 1.0 ? 1.0 : 0.0;
    return r * std::pow(std::abs(y), r - 1.0);
}

double cost_legendre(const CostSpec& spec, double y) {
    const double p = spec.conjugate_exponent();
    if (spec.kind == CostKind::quadratic) return 0.5 * y * y;
    return std::pow(std::abs(y), p) / p;
}

double cost_legendre_inverse(const CostSpec& spec, double v) {
    if (v < 0.0) throw std::domain_error("Legendre inverse requires v >= 0");
    if (spec.kind == CostKind::quadratic) return std::sqrt(2.0 * v);
    const double p = spec.conjugate_exponent();
    return std::pow(p * v, 1.0 / p);
}

void MarketParams::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!(shares > 0.0)) throw std::invalid_argument("shares must be positive");
    if (!std::isfinite(mu) || !std::isfinite(xi_vol) || !std::isfinite(phi_init)) {
        throw std::invalid_argument("mu, xi_vol and phi_init must be finite");
    }
}

double MarketParams::phi_bar(double w) const noexcept {
    return mu / (gamma * sigma * sigma) - endowment(w) / sigma;
}

double MarketParams::delta_phi0() const noexcept {
    return phi_init + endowment(0.0) / sigma - mu / (gamma * sigma * sigma);
}

double goal_integrand(const MarketParams& market, double phi, double xi, double cost_g, double lambda_t) {
    const double a = phi * market.mu;
    const double b = phi * market.sigma + xi;
    const double b3 = (b * b) * (0.5 * market.gamma);
    return (a - b3) - cost_g * lambda_t;
}

MarketParams calibrated_market(CostKind kind, double horizon) {
    MarketParams p;
    p.gamma = 1.66e-13;
    p.shares = 2.46e11;
    p.sigma = 1.88;
    p.mu = 0.5 * p.gamma * p.sigma * p.sigma * p.shares;
    p.xi_vol = kind == CostKind::quadratic ? 2.19e10 : 2.33e10;
    p.phi_init = 0.5 * p.shares;
    p.horizon = horizon;
    return p;
}

CostSpec calibrated_cost(CostKind kind) {
    return kind == CostKind::quadratic ? CostSpec::quadratic(1.08e-10) : CostSpec::power(1.5, 5.22e-6);
}

TimeGrid::TimeGrid(double horizon, std::size_t n_steps)
    : horizon_(horizon), n_steps_(n_steps), dt_(horizon / static_cast<double>(n_steps)) {
    if (!(horizon > 0.0)) throw std::invalid_argument("grid horizon must be positive");
    if (n_steps == 0) throw std::invalid_argument("grid needs at least one step");
}

double TimeGrid::time(std::size_t m) const noexcept {
    if (m == n_steps_) return horizon_;
    return horizon_ * static_cast<double>(m) / static_cast<double>(n_steps_);
}

std::vector<double> TimeGrid::times() const {
    std::vector<double> out(n_steps_ + 1);
    for (std::size_t m = 0; m <= n_steps_; ++m) out[m] = time(m);
    return out;
}

PathBatch::PathBatch(std::size_t n_paths, std::size_t n_steps, double dt, std::vector<double> increments,
                     std::uint64_t seed, std::size_t first_path)
    : n_paths_(n_paths),
      n_steps_(n_steps),
      dt_(dt),
      increments_(std::move(increments)),
      seed_(seed),
      first_path_(first_path) {
    if (increments_.size() != n_paths_ * n_steps_) {
        throw std::invalid_argument("increment matrix does not match n_paths x n_steps");
    }
}

std::span<const double> PathBatch::increments(std::size_t path) const {
    return std::span<const double>(increments_).subspan(path * n_steps_, n_steps_);
}

double PathBatch::brownian(std::size_t path, std::size_t m) const {
    double w = 0.0;
    const double* row = increments_.data() + path * n_steps_;
    for (std::size_t k = 0; k < m; ++k) w += row[k];
    return w;
}

std::vector<double> PathBatch::brownian_path(std::size_t path) const {
    std::vector<double> w(n_steps_ + 1, 0.0);
    const double* row = increments_.data() + path * n_steps_;
    for (std::size_t k = 0; k < n_steps_; ++k) w[k + 1] = w[k] + row[k];
    return w;
}

PathBatch PathBatch::negated() const {
    std::vector<double> inc(increments_.size());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = -increments_[i];
    return PathBatch(n_paths_, n_steps_, dt_, std::move(inc), seed_, first_path_);
}

PathBatch PathBatch::refined(std::uint64_t bridge_seed) const {
    const std::size_t fine = 2 * n_steps_;
    std::vector<double> inc(n_paths_ * fine);
    const double half_sd = 0.5 * std::sqrt(dt_);
    for (std::size_t p = 0; p < n_paths_; ++p) {
        auto gen = Xoshiro256pp::for_stream(bridge_seed, first_path_ + p);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t m = 0; m < n_steps_; ++m) {
            const double dw = increment(p, m);
            const double z = half_sd * normal(gen);
            inc[p * fine + 2 * m] = 0.5 * dw + z;
            inc[p * fine + 2 * m + 1] = 0.5 * dw - z;
        }
    }
    return PathBatch(n_paths_, fine, 0.5 * dt_, std::move(inc), seed_, first_path_);
}

PathBatch sample_brownian(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, std::size_t first_path) {
    if (n_paths == 0) throw std::invalid_argument("sample_brownian requires n_paths >= 1");
    const std::size_t n = grid.n_steps();
    const double sd = std::sqrt(grid.dt());
    std::vector<double> inc(n_paths * n);
    for (std::size_t p = 0; p < n_paths; ++p) {
        auto gen = Xoshiro256pp::for_stream(seed, first_path + p);
        std::normal_distribution<double> normal(0.0, 1.0);
        double* row = inc.data() + p * n;
        for (std::size_t m = 0; m < n; ++m) row[m] = sd * normal(gen);
    }
    return PathBatch(n_paths, n, grid.dt(), std::move(inc), seed, first_path);
}

FrictionlessPaths frictionless_path(const MarketParams& params, const PathBatch& batch) {
    FrictionlessPaths out;
    out.n_paths = batch.n_paths();
    out.n_steps = batch.n_steps();
    out.b_bar = params.b_bar();
    out.a_bar = params.a_bar();
    out.phi_bar.resize(out.n_paths * (out.n_steps + 1));
    for (std::size_t p = 0; p < out.n_paths; ++p) {
        double w = 0.0;
        double* row = out.phi_bar.data() + p * (out.n_steps + 1);
        row[0] = params.phi_bar(0.0);
        for (std::size_t m = 0; m < out.n_steps; ++m) {
            w += batch.increment(p, m);
            row[m + 1] = params.phi_bar(w);
        }
    }
    return out;
}

}  // namespace hedge
