#pragma once

#include "hedge/engine.hpp"
#include "hedge/market.hpp"

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace hedge {

/// Coefficients of the ergodic ODE (G')^{-1}(g/lambda) g' + (abar^2/2) g'' = gamma sigma^2 x.
struct ErgodicParams {
    double gamma = 1.0;
    double sigma = 1.0;
    double abar = 1.0;
    double lambda = 1.0;
};

ErgodicParams ergodic_params(const MarketParams& market, const CostSpec& cost);

/// Marching shooting configuration, in normalized units (see ErgodicSolution).
struct ShootingConfig {
    double u_max = 12.0;
    double h = 1e-3;             // RK4 step
    double slope_lo = -10.0;     // initial bracket for v'(0)
    double slope_hi = 0.0;
    int max_bisection = 200;
    double blowup_factor = 2.0;  // "too low" once v < -blowup_factor * w(u)
    double agree_tol = 1e-12;    // relative agreement of the bracketing trajectories
    double horizon_cap = 64.0;   // classification integrates at most this far past a segment start

    void validate() const;
};

/// Odd, non-increasing solution g of the ergodic ODE.
///
/// Stored in normalized form x = X u, g = Gamma v with
///   X^{q+2} = lambda abar^2 / (2 gamma sigma^2) * (abar^2/2)^{q-1},  Gamma = 2 gamma sigma^2 X^3 / abar^2,
/// which turns the ODE into v'' = u - sign(v)|v|^{1/(q-1)} v' with v(0) = 0 and
/// v ~ -(p u^2/2)^{1/p}, p = q/(q-1), for large u. For quadratic costs v = -u
/// and X is the stationary standard deviation of the associated OU process.
/// Because v does not depend on lambda, one table serves any lambda_t.
class ErgodicSolution {
public:
    ErgodicSolution(CostSpec cost, ErgodicParams params, ShootingConfig config, std::vector<double> v,
                    std::vector<double> dv);

    const CostSpec& cost() const noexcept { return cost_; }
    const ErgodicParams& params() const noexcept { return params_; }
    const ShootingConfig& config() const noexcept { return config_; }

    // Normalized table: u_i = i h for i = 0..n.
    std::size_t n_nodes() const noexcept { return v_.size(); }
    double u_node(std::size_t i) const noexcept { return static_cast<double>(i) * config_.h; }
    const std::vector<double>& v_nodes() const noexcept { return v_; }
    const std::vector<double>& dv_nodes() const noexcept { return dv_; }
    double u_max() const noexcept { return u_node(v_.size() - 1); }

    /// Interpolated v, v', v'' with odd extension; |u| > u_max throws ExtrapolationBeyondGrid.
    double v_at(double u) const;
    double dv_at(double u) const;
    double d2v_at(double u) const;
    /// Right-hand side u - sign(v)|v|^r v' of the normalized ODE.
    double accel(double u, double v, double dv) const;
    /// v''(u) - accel(u, v(u), v'(u)) from the interpolants.
    double residual(double u) const;
    /// Largest |residual| over all interval midpoints.
    double max_midpoint_residual() const;
    /// Asymptote w(u) = (p u^2/2)^{1/p}.
    double asymptote(double u) const;

    double x_scale(double lambda) const;
    double g_scale(double lambda) const;
    double x_max() const { return x_max(params_.lambda); }
    double x_max(double lambda) const { return x_scale(lambda) * u_max(); }

    /// g and g' in market units at the solve's lambda, or rescaled to another lambda.
    double g(double x) const { return g(x, params_.lambda); }
    double g(double x, double lambda) const;
    double g_prime(double x) const { return g_prime(x, params_.lambda); }
    double g_prime(double x, double lambda) const;
    /// g'(0) in market units.
    double slope0() const;

    /// g(x_max) / (-lambda (G*)^{-1}(gamma sigma^2 x_max^2 / (2 lambda))).
    double asymptote_ratio() const;

private:
    std::size_t interval(double u) const;

    CostSpec cost_;
    ErgodicParams params_;
    ShootingConfig config_;
    std::vector<double> v_;
    std::vector<double> dv_;
    std::vector<double> slope_;  // Fritsch-Carlson limited slopes for v
    double r_ = 1.0;
};

/// Solves the ergodic ODE by marching shooting: bisect v'(0) on the
/// too-high/too-low classification, keep the stretch where the two bracketing
/// trajectories agree, restart from there with the slope re-bisected, and
/// repeat until u_max. Segments do not depend on u_max, so a larger u_max
/// reproduces a smaller solve's table as an exact prefix.
///
/// Throws std::invalid_argument for abar == 0 or lambda <= 0, BracketFailure
/// when a bracket does not straddle the solution, NoConvergence when
/// bisection or marching stalls.
ErgodicSolution solve_ergodic_ode(const CostSpec& cost, const ErgodicParams& params,
                                  const ShootingConfig& config = {});

/// Leading-order rate (G')^{-1}(g(phi - phi_bar)/lambda_t): mean reverting
/// towards phi_bar. Throws ExtrapolationBeyondGrid when |phi - phi_bar| > x_max(lambda_t).
double leading_order_rate(const ErgodicSolution& sol, double phi, double phi_bar, double lambda_t);

/// Euler-Maruyama paths of d Delta = (G')^{-1}(g(Delta)/lambda) dt - abar dW,
/// row-major [path][m], m = 0..N.
std::vector<double> simulate_delta_sde(const ErgodicSolution& sol, const PathBatch& batch, double delta0);

/// -sqrt(gamma sigma^2 lambda) x tanh(sqrt(gamma sigma^2/lambda)(T - t)); rejects non-quadratic costs.
double quadratic_finite_horizon_g(const CostSpec& cost, double t, double x, double gamma, double sigma, double horizon);

/// Writes/reads the solution table. Text format:
///   # ergodic-solution 1
///   # kind q gamma sigma abar lambda h u_max residual
///   <one line with those values>
///   u v dv x g g_prime            (one line per node, %.17g)
void save_ergodic(const std::string& path, const ErgodicSolution& sol);
ErgodicSolution load_ergodic(const std::string& path);

enum class GroundTruthForm { feedback, explicit_formula };

/// Optimal strategy for quadratic costs on a finite horizon, with
/// kappa = sqrt(gamma sigma^2 / lambda):
///   feedback:  rate = -kappa tanh(kappa (T - t)) (phi - phi_bar)
///   explicit:  rate = -kappa sinh(kappa (T - t)) (Delta_0 / cosh(kappa T) - I_t),
///              I_t = sum_{t_k < t} abar dW_k / cosh(kappa (T - t_k))
/// Both vanish at t = T. Requires constant liquidity.
class GroundTruthEngine final : public StrategyEngine {
public:
    GroundTruthEngine(MarketParams market, CostSpec cost, TimeGrid grid,
                      GroundTruthForm form = GroundTruthForm::feedback);

    std::string name() const override { return "ground_truth"; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;
    void check_grid(const TimeGrid& grid) const override { require_grid(grid_, grid, name()); }

    double kappa() const noexcept { return kappa_; }
    GroundTruthForm form() const noexcept { return form_; }

private:
    MarketParams market_;
    CostSpec cost_;
    TimeGrid grid_;
    GroundTruthForm form_;
    double kappa_;
};

/// Leading-order strategy. When a path leaves the solved range, the solution
/// is re-solved with u_max doubled (shared by all sessions); earlier values are
/// unchanged by the regrowth, so results do not depend on evaluation order.
class LeadingOrderEngine final : public StrategyEngine {
public:
    LeadingOrderEngine(MarketParams market, CostSpec cost, std::shared_ptr<const ErgodicSolution> solution);

    std::string name() const override { return "leading_order"; }
    std::unique_ptr<EngineSession> start(std::size_t n_paths) const override;

    double rate(double t, double w, double phi, double phi_bar) const;
    /// As above with a caller-held solution handle, replaced when the range grows.
    double rate(std::shared_ptr<const ErgodicSolution>& sol, double t, double w, double phi, double phi_bar) const;
    std::shared_ptr<const ErgodicSolution> solution() const;
    const CostSpec& cost() const noexcept { return cost_; }

private:
    std::shared_ptr<const ErgodicSolution> grow(double needed_u) const;

    MarketParams market_;
    CostSpec cost_;
    mutable std::mutex mutex_;
    mutable std::shared_ptr<const ErgodicSolution> solution_;
};

}  // namespace hedge
