#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sqpbox/problem.hpp"
#include "sqpbox/qp.hpp"

namespace sqpbox {

/// One row of the convergence history (the columns of the reported tables).
struct IterationRecord {
    int n = 0;
    double objective = 0.0;        // J(u_n), full objective
    double stepsize = 0.0;         // delta_n = |v_{n-1}|_inf / max(1, |u_n|_inf); 0 for n = 0
    std::size_t count_free = 0;
    std::size_t count_lower = 0;
    std::size_t count_upper = 0;
    int qp_iterations = 0;         // SSN iterations of the subproblem that produced u_n
    double wall_time_seconds = 0.0;
};

enum class RunStatus { converged, max_iters, subproblem_failure, diverged };

const char* to_string(RunStatus s);

struct SqpRun {
    std::vector<IterationRecord> records;
    std::vector<GridFunction> iterates;  // u_0 ... u_last
    GridFunction final_control;
    RunStatus status = RunStatus::max_iters;
    std::string message;                 // failure diagnostics, empty on success
};

/// delta_n = |previous_step|_inf / max(1, |current_control|_inf).
double stepsize(const GridFunction& previous_step, const GridFunction& current_control);

/// The control-reduced SQP: per outer iteration one nonlinear state solve,
/// one adjoint solve, and a box-constrained quadratic subproblem solved by
/// semismooth Newton (warm started with the previous step). Stops when
/// max(|u_{n+1}-u_n|_inf, |u_{n+1}-u_n|_inf / max(1, |u_{n+1}|_inf)) falls
/// below cfg.stop_tol or two consecutive objective values are bit-identical.
SqpRun run_sqpnln(ProblemOracle& oracle, const GridFunction& u0, const SqpConfig& cfg);

/// Instance hook for the Lagrange-Newton baseline: state, adjoint state and
/// control are independent iterates; each outer iteration freezes a
/// linear-quadratic subproblem at (u_n, y_n, phi_n) whose reduction to the
/// control is exposed through linear_gradient / apply_hessian and solved with
/// the same semismooth Newton machinery. Only linear solves occur per
/// iteration.
class LagrangeNewtonOracle {
public:
    virtual ~LagrangeNewtonOracle() = default;

    virtual const MeasureSpacePtr& control_space() const = 0;
    virtual const BoxBounds& bounds() const = 0;

    virtual Eigen::VectorXd zero_state() const = 0;
    virtual Eigen::VectorXd zero_adjoint() const = 0;

    /// y = y_u, phi = phi_u (one nonlinear and one linear solve); used for
    /// consistent initialization.
    virtual void consistent_point(const GridFunction& u, Eigen::VectorXd& y,
                                  Eigen::VectorXd& phi) = 0;

    /// Freeze the subproblem linearization at (u, y, phi).
    virtual void set_point(const GridFunction& u, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& phi) = 0;

    /// Derivative representative of the frozen subproblem at v = 0, so that
    /// its reduced linear term is kappa*u_n + phi_tilde(). Coincides with
    /// Phi(u_n) when (y, phi) are consistent with u_n.
    virtual GridFunction phi_tilde() = 0;

    /// Reduced curvature action (excluding the kappa*v part).
    virtual GridFunction apply_hessian(const GridFunction& v) = 0;

    /// Next state/adjoint iterates for the accepted control step v.
    virtual void recover(const GridFunction& v, Eigen::VectorXd& y_next,
                         Eigen::VectorXd& phi_next) = 0;

    /// Smooth objective part at u; reporting only (not part of the iteration).
    virtual double true_objective(const GridFunction& u) = 0;
};

/// Lagrange-Newton driver. Same stopping rule as run_sqpnln; additionally
/// flags divergence when the step norm grows over 5 consecutive iterations
/// or an iterate stops being finite.
SqpRun run_sqplin(LagrangeNewtonOracle& oracle, const GridFunction& u0,
                  const Eigen::VectorXd& y0, const Eigen::VectorXd& phi0,
                  const SqpConfig& cfg);

/// Least-squares fit of log e_{n+1} = log C + r log e_n over the given
/// sequence. Requires >= 3 strictly decreasing positive entries; returns
/// (rate exponent r, constant C).
std::pair<double, double> estimate_rate(const std::vector<double>& error_sequence);

/// |u_n - u_final|_inf for every iterate before the final one.
std::vector<double> convergence_errors(const SqpRun& run);

/// Rate fit against the final iterate: drops round-off-dominated trailing
/// entries (below 1e3 * stop_tol, at most the last two) and fits the last
/// three informative errors, the asymptotic tail. Returns nothing when fewer
/// than 3 usable entries remain.
std::optional<std::pair<double, double>> fitted_rate(const SqpRun& run, double stop_tol);

/// Strict-complementarity diagnostics around the gradient band [-tau, tau].
struct TauBandReport {
    double tau = 0.0;
    std::size_t count_tau_plus = 0;   // kappa*u + Phi(u) >  tau
    std::size_t count_tau_minus = 0;  // kappa*u + Phi(u) < -tau
    std::size_t count_biactive = 0;   // at a bound with |kappa*u + Phi(u)| <= tau
};

TauBandReport tau_band_report(ProblemOracle& oracle, double kappa,
                              const GridFunction& u, double tau);

/// Default band width 1e-6 * |kappa*u + Phi(u)|_inf.
double default_tau(ProblemOracle& oracle, double kappa, const GridFunction& u);

} // namespace sqpbox
