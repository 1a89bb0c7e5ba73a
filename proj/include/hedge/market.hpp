#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hedge {

enum class CostKind { quadratic, power };

/// Liquidity multiplier Lambda_t > 0; lambda_t = lambda * Lambda_t.
///
/// Either a positive constant (the default, 1) or a user-supplied function of
/// (t, W_t). Only constants can be written to configuration files.
class Liquidity {
public:
    using Process = std::function<double(double t, double w)>;

    Liquidity() = default;

    static Liquidity constant(double level);
    static Liquidity process(Process fn);

    double at(double t, double w) const;
    bool is_constant() const noexcept { return !fn_; }
    double level() const noexcept { return level_; }

private:
    double level_ = 1.0;
    Process fn_;
};

/// Transaction-cost shape G with magnitude lambda.
///
/// Quadratic: G(x) = x^2/2. Power: G(x) = |x|^q/q with q in (1, 2].
struct CostSpec {
    CostKind kind = CostKind::quadratic;
    double q = 2.0;
    double lambda = 0.0;
    Liquidity liquidity;

    static CostSpec quadratic(double lambda);
    static CostSpec power(double q, double lambda);

    /// q for power costs, 2 for quadratic.
    double exponent() const noexcept { return kind == CostKind::quadratic ? 2.0 : q; }
    /// Conjugate exponent p = q/(q-1) of the Legendre transform.
    double conjugate_exponent() const noexcept;

    double lambda_at(double t, double w) const { return lambda * liquidity.at(t, w); }

    /// Throws std::invalid_argument on q outside (1, 2], negative lambda, or
    /// nonpositive constant liquidity.
    void validate() const;
};

double cost_value(const CostSpec& spec, double x);
double cost_marginal(const CostSpec& spec, double x);
double cost_marginal_inverse(const CostSpec& spec, double y);
/// d/dy of cost_marginal_inverse; the ReLU-style value 0 is used at y = 0 when q < 2.
double cost_marginal_inverse_derivative(const CostSpec& spec, double y);
/// Legendre transform G*(y) = |y|^p/p.
double cost_legendre(const CostSpec& spec, double y);
/// (G*)^{-1}(v) = (p v)^{1/p}; rejects v < 0.
double cost_legendre_inverse(const CostSpec& spec, double v);

/// Bachelier market and mean-variance preferences. Units: shares, trading days.
struct MarketParams {
    double mu = 0.0;         // expected return per day
    double sigma = 1.0;      // volatility per sqrt(day)
    double gamma = 1.0;      // risk aversion
    double shares = 1.0;     // total shares outstanding s
    double xi_vol = 0.0;     // endowment volatility coefficient xi
    double phi_init = 0.0;   // initial position phi_{0-}
    double horizon = 1.0;    // T

    /// Throws std::invalid_argument unless sigma, gamma, horizon, shares > 0.
    void validate() const;

    /// xi_t = xi * W_t.
    double endowment(double w) const noexcept { return xi_vol * w; }
    /// Frictionless position mu/(gamma sigma^2) - xi_t/sigma.
    double phi_bar(double w) const noexcept;
    /// Frictionless drift; zero under the xi_t = xi W_t endowment model.
    double b_bar() const noexcept { return 0.0; }
    /// Frictionless volatility -xi/sigma.
    double a_bar() const noexcept { return -xi_vol / sigma; }
    /// Delta phi_0 = phi_{0-} + xi_0/sigma - mu/(gamma sigma^2).
    double delta_phi0() const noexcept;
};

/// Integrand of the discretized goal at one grid point:
///   (phi mu - (gamma/2)(sigma phi + xi)^2) - lambda_t G(rate),
/// with the operation order shared by every rollout and the evaluator.
double goal_integrand(const MarketParams& market, double phi, double xi, double cost_g, double lambda_t);

/// Calibrated parameters used throughout the experiments: gamma = 1.66e-13,
/// s = 2.46e11, sigma = 1.88, mu = gamma sigma^2 s / 2, phi_{0-} = s/2, and
/// (xi, lambda) = (2.19e10, 1.08e-10) for quadratic costs or (2.33e10, 5.22e-6)
/// for q = 3/2.
MarketParams calibrated_market(CostKind kind, double horizon);
CostSpec calibrated_cost(CostKind kind);

/// Uniform partition t_m = m T / N.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double horizon, std::size_t n_steps);

    std::size_t n_steps() const noexcept { return n_steps_; }
    double horizon() const noexcept { return horizon_; }
    double dt() const noexcept { return dt_; }
    /// t_0 = 0 and t_N = T exactly.
    double time(std::size_t m) const noexcept;
    std::vector<double> times() const;

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_ = 1.0;
    std::size_t n_steps_ = 1;
    double dt_ = 1.0;
};

/// Brownian increments for n_paths paths over a grid, row-major [path][step].
///
/// Path p is generated from stream (seed, first_path + p), so batches that are
/// split or offset regenerate identical paths.
class PathBatch {
public:
    PathBatch() = default;
    PathBatch(std::size_t n_paths, std::size_t n_steps, double dt, std::vector<double> increments,
              std::uint64_t seed = 0, std::size_t first_path = 0);

    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    double dt() const noexcept { return dt_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t first_path() const noexcept { return first_path_; }

    double increment(std::size_t path, std::size_t m) const { return increments_[path * n_steps_ + m]; }
    std::span<const double> increments(std::size_t path) const;
    std::span<const double> all_increments() const noexcept { return increments_; }

    /// W_{t_m}, accumulated left to right from W_0 = 0.
    double brownian(std::size_t path, std::size_t m) const;
    std::vector<double> brownian_path(std::size_t path) const;

    /// The same paths with every increment negated.
    PathBatch negated() const;
    /// Halves the step: each increment is split by a Brownian bridge draw keyed
    /// by (bridge_seed, path), so coarse sums of the refined batch equal this one.
    PathBatch refined(std::uint64_t bridge_seed) const;

private:
    std::size_t n_paths_ = 0;
    std::size_t n_steps_ = 0;
    double dt_ = 0.0;
    std::vector<double> increments_;
    std::uint64_t seed_ = 0;
    std::size_t first_path_ = 0;
};

/// Draws n_paths paths (global indices first_path ...) of N(0, dt) increments.
/// Throws std::invalid_argument when n_paths == 0.
PathBatch sample_brownian(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          std::size_t first_path = 0);

/// State of one path at grid index m.
struct PathState {
    std::size_t m = 0;
    double w = 0.0;
    double phi = 0.0;
    double xi = 0.0;
    double phi_bar = 0.0;
};

/// Frictionless target along each path: phi_bar [path][m] for m = 0..N, plus the
/// (constant) drift and volatility of d phi_bar = b_bar dt + a_bar dW.
struct FrictionlessPaths {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> phi_bar;
    double b_bar = 0.0;
    double a_bar = 0.0;

    double at(std::size_t path, std::size_t m) const { return phi_bar[path * (n_steps + 1) + m]; }
};

FrictionlessPaths frictionless_path(const MarketParams& params, const PathBatch& batch);

}  // namespace hedge
