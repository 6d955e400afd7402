#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>

#include "sqpbox/problem.hpp"
#include "sqpbox/qp.hpp"
#include "sqpbox/sqp.hpp"

namespace sqpbox {

/// Dense abstract problem with exactly known structure, used as a testing
/// oracle for the solver stack. The smooth objective is
///
///   objective(u) = (1/2) u^T S u + c^T D u - eps * sum_i w_i cos(u_i),
///
/// with D = diag(mu-weights) and S symmetric, so that
/// Phi(u) = D^{-1} S u + c + eps*sin(u) and Phi'(u)v = D^{-1} S v +
/// eps*cos(u) v are exact and the induced bilinear form is mu-symmetric by
/// construction. eps = 0 makes the problem an exactly solvable QP.
struct SyntheticProblem {
    MeasureSpacePtr space;
    Eigen::MatrixXd S;        // mu-symmetric core: <Phi'(u)v, w>_mu = v^T S w + eps-term
    Eigen::VectorXd c;
    double epsilon = 0.0;
    double h_min = 0.0;       // exact smallest eigenvalue of H = D^{-1}S in the mu metric

    /// Coercivity bound of kappa*I + H on the whole space.
    double coercivity(double kappa) const { return kappa + h_min; }
};

struct SpectrumSpec {
    double min_eig = 0.0;
    double max_eig = 1.0;
};

/// Reproducible synthetic problem: H gets eigenvalues linearly spaced over
/// the spectrum range (so h_min is known exactly) in a random mu-orthonormal
/// basis; c and the measure weights are drawn from the same seed. n <= 64.
SyntheticProblem make_synthetic(std::uint64_t seed, int n, SpectrumSpec spectrum,
                                double epsilon);

/// SyntheticProblem wrapped as a ProblemOracle with the given bounds.
class SyntheticOracle final : public ProblemOracle {
public:
    SyntheticOracle(SyntheticProblem problem, BoxBounds bounds);

    const MeasureSpacePtr& control_space() const override { return problem_.space; }
    const BoxBounds& bounds() const override { return bounds_; }
    double objective(const GridFunction& u) override;
    GridFunction phi(const GridFunction& u) override;
    GridFunction apply_phi_prime(const GridFunction& u, const GridFunction& v) override;

    const SyntheticProblem& problem() const { return problem_; }

private:
    SyntheticProblem problem_;
    BoxBounds bounds_;
};

/// Lagrange-Newton view of a synthetic problem. There is no state equation,
/// so the frozen subproblem is exactly the SQPNLN subproblem and both outer
/// methods coincide iteration for iteration.
class SyntheticLagrangeNewton final : public LagrangeNewtonOracle {
public:
    explicit SyntheticLagrangeNewton(SyntheticOracle& oracle) : oracle_(&oracle) {}

    const MeasureSpacePtr& control_space() const override { return oracle_->control_space(); }
    const BoxBounds& bounds() const override { return oracle_->bounds(); }
    Eigen::VectorXd zero_state() const override { return Eigen::VectorXd(); }
    Eigen::VectorXd zero_adjoint() const override { return Eigen::VectorXd(); }
    void consistent_point(const GridFunction&, Eigen::VectorXd&, Eigen::VectorXd&) override {}
    void set_point(const GridFunction& u, const Eigen::VectorXd&, const Eigen::VectorXd&) override {
        base_ = u;
    }
    GridFunction phi_tilde() override { return oracle_->phi(base_); }
    GridFunction apply_hessian(const GridFunction& v) override {
        return oracle_->apply_phi_prime(base_, v);
    }
    void recover(const GridFunction&, Eigen::VectorXd&, Eigen::VectorXd&) override {}
    double true_objective(const GridFunction& u) override { return oracle_->objective(u); }

private:
    SyntheticOracle* oracle_;
    GridFunction base_;
};

/// Exhaustive oracle for small subproblems: enumerates all 3^n
/// lower/free/upper patterns, solves each equality-constrained QP densely,
/// keeps the feasible stationary candidates and returns the best step.
/// Requires point_count <= 16 and a quadratic form that is positive definite
/// (checked); exact up to dense-solver round-off.
GridFunction brute_force_qp(const QpInstance& q);

struct LipschitzReport {
    double lhs = 0.0;     // |w1 - w0|_L2(mu)
    double rhs = 0.0;     // (1/lambda) |b1 - b0|_L2(mu)
    double lambda = 0.0;  // coercivity constant on the masked subspace (eigensolve)
    bool pass = false;    // lhs <= rhs * (1 + 1e-8)
};

/// Stability of masked box QPs under perturbation of the linear term:
/// solves min (1/2)a(w,w) + <b_i, w>_mu over {w : w = 0 off the mask,
/// lo <= w <= hi on it} for b0 and b1, with a(v,w) = kappa<v,w>_mu +
/// <Hv,w>_mu, and compares |w1-w0| against (1/lambda)|b1-b0|. lambda is
/// obtained from a dense generalized eigensolve on the masked subspace and
/// verified against the problem's claimed whole-space bound (setup error if
/// smaller). The masked QPs are solved by exhaustive enumeration.
LipschitzReport lipschitz_stability_check(const SyntheticProblem& s, double kappa,
                                          const GridFunction& b0, const GridFunction& b1,
                                          const BoxBounds& bounds,
                                          const std::vector<bool>& free_mask);

} // namespace sqpbox
