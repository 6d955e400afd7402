#pragma once

#include <utility>
#include <vector>

#include "sqpbox/measure_space.hpp"

namespace sqpbox {

/// Abstract problem interface. An instance provides the smooth objective
/// part, the L^inf representative Phi of its derivative, and the action of
/// Phi' -- everything the SQP machinery needs, with state and adjoint
/// computations hidden (and cached) behind these three calls.
///
/// An oracle may cache the state/adjoint pair belonging to the most recent
/// argument u; it is therefore confined to one thread of control during a
/// solve. Distinct instances may run concurrently.
class ProblemOracle {
public:
    virtual ~ProblemOracle() = default;

    virtual const MeasureSpacePtr& control_space() const = 0;
    virtual const BoxBounds& bounds() const = 0;

    /// Smooth objective part (without the Tikhonov term).
    virtual double objective(const GridFunction& u) = 0;

    /// Phi(u): the pointwise representative of the derivative,
    /// d objective(u) v = <Phi(u), v>_mu for all v.
    virtual GridFunction phi(const GridFunction& u) = 0;

    /// Action of Phi'(u) on v. Linear in v; the induced bilinear form
    /// <Phi'(u)v, w>_mu is symmetric up to linear-solver tolerance.
    virtual GridFunction apply_phi_prime(const GridFunction& u, const GridFunction& v) = 0;
};

enum class Method { sqpnln, sqplin };

/// Solver configuration shared by both outer methods.
struct SqpConfig {
    double kappa = 0.1;            // Tikhonov weight, > 0
    double stop_tol = 5e-13;       // outer stopping tolerance (L^inf step)
    int max_outer_iters = 30;
    double qp_tol = 1e-12;         // fixed-point residual tolerance of the QP,
                                   // scaled by max(1, |u_n|_inf) per subproblem
    int qp_max_iters = 100;        // semismooth Newton iteration cap
    double cg_tol = 1e-12;         // relative residual of the inner CG
    int cg_max_iters = 0;          // 0 = 10 x free point count
    Method method = Method::sqpnln;

    void validate() const;
};

/// The full objective J(u) = objective(u) + (kappa/2)|u|^2_mu.
struct FullObjective {
    ProblemOracle* oracle;
    double kappa;

    double value(const GridFunction& u) const;
};

/// Gradient map F(u) = Phi(u) + kappa*u.
GridFunction gradient(ProblemOracle& oracle, double kappa, const GridFunction& u);

/// L^inf norm of u - Proj_[alpha,beta](-Phi(u)/kappa); zero exactly at
/// stationary points.
double kkt_residual(ProblemOracle& oracle, double kappa, const GridFunction& u);

/// Central finite-difference check of the derivative representation:
/// error(h) = |(obj(u+hv) - obj(u-hv))/(2h) - <Phi(u), v>_mu|.
/// Returns (step, error) pairs; errors decay O(h^2) until round-off.
/// Throws DomainError if a perturbed point leaves the admissible domain.
std::vector<std::pair<double, double>> fd_gradient_check(
    ProblemOracle& oracle, const GridFunction& u, const GridFunction& v,
    const std::vector<double>& steps);

/// error(h) = |<Phi(u+hw) - Phi(u-hw), v>_mu/(2h) - <Phi'(u)w, v>_mu|.
std::vector<std::pair<double, double>> fd_hessian_check(
    ProblemOracle& oracle, const GridFunction& u, const GridFunction& v,
    const GridFunction& w, const std::vector<double>& steps);

/// |<Phi'(u)v, w>_mu - <Phi'(u)w, v>_mu|, both orderings computed
/// independently.
double symmetry_defect(ProblemOracle& oracle, const GridFunction& u,
                       const GridFunction& v, const GridFunction& w);

} // namespace sqpbox
