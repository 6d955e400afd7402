#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <functional>
#include <optional>
#include <memory>
#include <vector>

#include "sqpbox/mesh.hpp"
#include "sqpbox/problem.hpp"
#include "sqpbox/sqp.hpp"

namespace sqpbox {

/// Coefficients of the semilinear parabolic problem with bilinear boundary
/// control
///   dy/dt - Laplace y + f(x,t,y) = 0 in Q,  dy/dn + u y = g on Sigma,
///   y(0) = y0,  objective (1/2)|y - y_d|^2_{L2(Q)}.
struct ParabolicData {
    std::function<double(const double*, double, double)> f, f_y, f_yy;  // (x, t, y)
    std::function<double(const double*, double)> g;                     // (x, t)
    std::function<double(const double*)> y0;
    std::function<double(const double*, double)> y_d;                   // (x, t)
};

/// The boundary-control test problem: f = y^3 - y, g = 1,
/// y0 = prod_i 8 x_i (1 - x_i), y_d = y0(x) cos(pi t).
ParabolicData example_parabolic_data(int dimension);

/// Nodal fields at the time levels of one march. States run over levels
/// 0..M with level 0 the initial interpolant; the backward fields occupy
/// levels 1..M (the terminal condition lives beyond level M and is zero).
struct Trajectory {
    std::vector<Eigen::VectorXd> level;
};

using StepFactorization = std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>;

/// One linearization point: state/adjoint trajectories plus the per-step
/// factorizations of M/tau + K + f_y(y^k) + D(u^k), shared by all four
/// marches at this point.
struct ParabolicState {
    Trajectory y;
    Trajectory phi;                      // empty until march_adjoint ran
    std::vector<StepFactorization> fac;  // index 1..M; [0] unused
};

/// Implicit Euler (dG(0)) discretization of the boundary-control problem.
/// Controls are continuous piecewise linear on Gamma, constant in time over
/// each step; the control measure weight of boundary node b and step k is
/// lumped-boundary-mass(b) * tau, and the bilinear boundary form uses the
/// same lumping, so the discrete gradient formulas are exact.
class ParabolicEngine {
public:
    /// tau = horizon * 2^-time_refinement, so M = 2^time_refinement steps.
    ParabolicEngine(SimplexMesh mesh, ParabolicData data, double horizon,
                    int time_refinement);

    const SimplexMesh& mesh() const { return mesh_; }
    const ParabolicData& data() const { return data_; }
    const MeasureSpacePtr& control_space() const { return control_space_; }
    double horizon() const { return horizon_; }
    double tau() const { return tau_; }
    int steps() const { return steps_; }
    int boundary_count() const { return static_cast<int>(mesh_.boundary_nodes().size()); }

    /// Worker threads for element assembly (default 1); deterministic for a
    /// fixed thread count.
    void set_worker_threads(int t) { threads_ = std::max(1, std::min(t, 64)); }
    int worker_threads() const { return threads_; }

    /// Control value at boundary node b (boundary_nodes() order), step k in 1..M.
    static std::size_t lattice_index(int boundary_count, int k, int b) {
        return static_cast<std::size_t>(k - 1) * boundary_count + b;
    }

    /// Forward implicit Euler march; per-step Newton to residual 1e-14
    /// (scaled), warm started from the previous level or the corresponding
    /// level of warm_start. Factorizations at the converged states are kept
    /// for the backward and linearized marches.
    ParabolicState march_state(const GridFunction& u, const ParabolicState* warm_start = nullptr) const;

    /// Backward adjoint march into state.phi; linear solves with the cached
    /// factorizations.
    void march_adjoint(ParabolicState& state) const;

    /// Residual norm of the discrete step equation at level k (tests).
    double step_residual_norm(const ParabolicState& state, const GridFunction& u, int k) const;

    /// (tau/2) sum_k |y^k - y_d^k|^2_M.
    double objective(const ParabolicState& state) const;

    /// Phi(u) = (-y phi)|_Sigma on the boundary lattice.
    GridFunction boundary_product(const Trajectory& y, const Trajectory& phi) const;

    /// Phi'(u)v = (-y eta - z phi)|_Sigma via one forward and one backward
    /// linear march; w_forms are the per-step curvature forms from
    /// curvature_forms(state).
    GridFunction apply_phi_prime(const ParabolicState& state,
                                 const std::vector<Eigen::SparseMatrix<double>>& w_forms,
                                 const GridFunction& v) const;

    /// Per-step forms int f_yy(x,t_k,y^k) phi^k w v dx (index 1..M).
    std::vector<Eigen::SparseMatrix<double>> curvature_forms(const Trajectory& y,
                                                             const Trajectory& phi) const;

    // Building blocks for the Lagrange-Newton oracle.
    const Eigen::SparseMatrix<double>& mass() const { return mass_; }
    Eigen::VectorXd initial_interpolant() const;
    Eigen::VectorXd desired_state(int k) const;  // nodal y_d at t_k
    Eigen::VectorXd boundary_load(int k) const;  // lumped g
    Eigen::VectorXd nonlinearity_vector(const Eigen::VectorXd& y, int k) const;
    Eigen::SparseMatrix<double> step_matrix(const Eigen::VectorXd& y, const GridFunction& u, int k) const;
    /// Residual of the discrete step equation at level k for the pair
    /// (y^k, y^{k-1}).
    Eigen::VectorXd step_residual(const Eigen::VectorXd& yk, const Eigen::VectorXd& yprev,
                                  const GridFunction& u, int k) const;
    /// Nodal vector with m_b * value_b at boundary nodes, zero inside.
    Eigen::VectorXd boundary_vector(const std::vector<double>& boundary_values) const;
    const std::vector<double>& lumped_mass() const { return mesh_.lumped_boundary_mass(); }

private:
    SimplexMesh mesh_;
    ParabolicData data_;
    double horizon_;
    double tau_;
    int steps_;
    MeasureSpacePtr control_space_;
    QuadratureRule rule_;
    Eigen::SparseMatrix<double> mass_;
    Eigen::SparseMatrix<double> base_;  // mass/tau + stiffness, the fixed pattern
    int threads_ = 1;
};

/// ProblemOracle instance with trajectory caching for the most recent u.
class ParabolicProblem final : public ProblemOracle {
public:
    ParabolicProblem(SimplexMesh mesh, ParabolicData data, BoxBounds bounds,
                     double horizon, int time_refinement);

    const MeasureSpacePtr& control_space() const override { return engine_.control_space(); }
    const BoxBounds& bounds() const override { return bounds_; }
    double objective(const GridFunction& u) override;
    GridFunction phi(const GridFunction& u) override;
    GridFunction apply_phi_prime(const GridFunction& u, const GridFunction& v) override;

    const ParabolicEngine& engine() const { return engine_; }
    void set_worker_threads(int t) { engine_.set_worker_threads(t); }
    const ParabolicState& state_for(const GridFunction& u);

private:
    void ensure_state(const GridFunction& u);
    void ensure_adjoint();
    void ensure_curvature();

    ParabolicEngine engine_;
    BoxBounds bounds_;
    bool cache_valid_ = false;
    std::vector<double> cached_u_;
    ParabolicState state_;
    bool adjoint_done_ = false;
    bool curvature_done_ = false;
    std::vector<Eigen::SparseMatrix<double>> w_forms_;
};

/// Lagrange-Newton view: state and adjoint trajectories (levels 1..M,
/// flattened) are independent iterates; each frozen subproblem costs M
/// factorizations and only linear marches afterwards.
class ParabolicLagrangeNewton final : public LagrangeNewtonOracle {
public:
    ParabolicLagrangeNewton(const ParabolicEngine& engine, BoxBounds bounds);

    const MeasureSpacePtr& control_space() const override { return engine_->control_space(); }
    const BoxBounds& bounds() const override { return bounds_; }
    Eigen::VectorXd zero_state() const override;
    Eigen::VectorXd zero_adjoint() const override;
    void consistent_point(const GridFunction& u, Eigen::VectorXd& y, Eigen::VectorXd& phi) override;
    void set_point(const GridFunction& u, const Eigen::VectorXd& y, const Eigen::VectorXd& phi) override;
    GridFunction phi_tilde() override;
    GridFunction apply_hessian(const GridFunction& v) override;
    void recover(const GridFunction& v, Eigen::VectorXd& y_next, Eigen::VectorXd& phi_next) override;
    double true_objective(const GridFunction& u) override;

private:
    Trajectory unflatten(const Eigen::VectorXd& flat, bool with_initial) const;
    Eigen::VectorXd flatten(const Trajectory& traj) const;
    /// Forward linearized march with per-step extra load; w^0 = 0.
    Trajectory forward_march(const std::vector<Eigen::VectorXd>& loads) const;
    /// Backward march with per-step extra load; terminal zero.
    Trajectory backward_march(const std::vector<Eigen::VectorXd>& loads) const;

    const ParabolicEngine* engine_;
    BoxBounds bounds_;
    GridFunction u_n_;
    Trajectory y_n_, phi_n_;
    std::vector<StepFactorization> fac_;
    std::vector<Eigen::SparseMatrix<double>> w_forms_;
    Trajectory w0_, mu0_;
    std::optional<ParabolicState> scratch_;
};

} // namespace sqpbox
