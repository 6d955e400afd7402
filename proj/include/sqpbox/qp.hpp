#pragma once

#include "sqpbox/measure_space.hpp"
#include "sqpbox/problem.hpp"

namespace sqpbox {

/// Data of the constrained quadratic subproblem at a frozen base point u_n:
///
///   min_v  (1/2)[kappa <v,v> + <Phi'(u_n)v, v>] + <linear_term, v>
///   s.t.   alpha <= u_n + v <= beta,
///
/// with linear_term = kappa*u_n + Phi(u_n) and all pairings mu-weighted.
struct QpInstance {
    ProblemOracle* oracle = nullptr;  // frozen at base_point
    GridFunction base_point;          // u_n
    double kappa = 0.0;
    BoxBounds bounds{0.0, 1.0};
    GridFunction linear_term;         // kappa*u_n + Phi(u_n)
};

/// Builds the instance, evaluating linear_term = gradient(oracle, kappa, u_n).
QpInstance make_qp_instance(ProblemOracle& oracle, const GridFunction& base_point,
                            double kappa);

struct QpResult {
    GridFunction step;                    // v_n, feasible: u_n + v_n within bounds
    int ssn_iterations = 0;
    ActiveSetPartition final_active_sets; // classification of u_n + v_n
    double fixed_point_residual = 0.0;    // L^inf, <= tol on success
};

/// Quadratic model value at v.
double qp_objective(const QpInstance& q, const GridFunction& v);

/// Semismooth Newton (primal active set) solver. Each iteration classifies
/// points from the projection fixed point, pins the active ones at their
/// bounds and solves the reduced system (kappa*I + Phi'(u_n))|_free by
/// matrix-free CG in the mu-weighted inner product.
///
/// Success means |u+ - Proj[-(Phi'(u_n)(u+-u_n) + Phi(u_n))/kappa]|_inf <= tol
/// with u+ = u_n + step.
///
/// Throws NonConvergenceError when max_iters is exhausted (carrying the last
/// residual) and IndefinitenessError when CG detects negative curvature.
QpResult solve_ssn(const QpInstance& q, const GridFunction& v_init, double tol,
                   int max_iters, double cg_tol = 1e-12, int cg_max_iters = 0);

/// Independent projected-gradient solver for the same subproblem; stops on
/// the same fixed-point residual. Slow but structurally unrelated to
/// solve_ssn, which makes it a useful cross-check.
GridFunction solve_projected_gradient(const QpInstance& q, double tol,
                                      int max_iters);

} // namespace sqpbox
