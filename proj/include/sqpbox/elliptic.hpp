#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>

#include "sqpbox/mesh.hpp"
#include "sqpbox/problem.hpp"
#include "sqpbox/sqp.hpp"

namespace sqpbox {

using SpMat = Eigen::SparseMatrix<double>;

/// Coefficient functions of the semilinear elliptic problem
///   A y + f(x, y) = chi_omega u in Omega,  y = 0 on Gamma,
///   objective integrand L(x, y),  A = -Laplace + a0.
/// All callables receive the coordinate array (dimension entries) and y.
struct EllipticData {
    std::function<double(const double*, double)> f, f_y, f_yy;
    std::function<double(const double*, double)> L, L_y, L_yy;
    double a0 = 0.0;
};

/// The distributed-control test problem: f = e^y, L = 0.5 (y - y_d)^2 with
/// y_d(x) = prod_i 8 x_i (1 - x_i).
EllipticData example_elliptic_data(int dimension);

/// State data at one linearization point: nodal state and adjoint (full node
/// vectors, zero on the boundary) plus the reusable factorization of the
/// linearized operator A_h + f_y(y) on the interior unknowns.
struct EllipticState {
    Eigen::VectorXd y;
    Eigen::VectorXd phi;  // empty until the adjoint solve ran
    std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> factorization;
};

/// Discretization machinery: P1 elements for state and adjoint, piecewise
/// constant controls on the cells of omega, nonlinear terms integrated with
/// the degree-3 volume rule. One factorization per linearization point,
/// shared by the adjoint and both linearized solves.
class EllipticEngine {
public:
    /// omega: cell indices carrying the control; empty means all cells.
    EllipticEngine(SimplexMesh mesh, EllipticData data, std::vector<int> omega = {});

    const SimplexMesh& mesh() const { return mesh_; }
    const EllipticData& data() const { return data_; }
    const MeasureSpacePtr& control_space() const { return control_space_; }
    const std::vector<int>& omega() const { return omega_; }

    /// Worker threads for element assembly (default 1). Results are
    /// deterministic for a fixed thread count.
    void set_worker_threads(int t) { threads_ = std::max(1, std::min(t, 64)); }
    int worker_threads() const { return threads_; }

    /// Newton solve of the discrete state equation; residual tolerance
    /// 1e-14 scaled by the load norm, full steps, at most 50 iterations.
    /// Initialized from warm_start when given, else from zero.
    EllipticState solve_state(const GridFunction& u, const EllipticState* warm_start = nullptr) const;

    /// Euclidean norm of the assembled nonlinear residual at y (interior).
    double state_residual_norm(const Eigen::VectorXd& y_full, const GridFunction& u) const;

    /// Adjoint solve into state.phi (same factorization).
    void solve_adjoint(EllipticState& state) const;

    /// Integral of L(x, y).
    double objective(const EllipticState& state) const;

    /// Element averages over omega: the control-space representative of a
    /// nodal field, exact for the piecewise-constant duality pairing.
    GridFunction control_average(const Eigen::VectorXd& nodal) const;

    /// Linearized state: (A_h + f_y(y)) z = B v.
    Eigen::VectorXd solve_linearized(const EllipticState& state, const GridFunction& v) const;

    /// Second adjoint: (A_h + f_y(y)) eta = W z with the curvature form
    /// W = [L_yy - phi f_yy] assembled at (y, phi).
    Eigen::VectorXd solve_second_adjoint(const EllipticState& state, const SpMat& w_form,
                                         const Eigen::VectorXd& z) const;

    // Assembly blocks, exposed for the Lagrange-Newton oracle and tests.
    int interior_count() const { return static_cast<int>(mesh_.interior_nodes().size()); }
    const SpMat& stiffness() const { return stiffness_; }
    Eigen::VectorXd control_load(const GridFunction& u) const;                    // B u
    Eigen::VectorXd nonlinearity_vector(const Eigen::VectorXd& y_full) const;     // f(x,y) phi_i
    SpMat linearized_matrix(const Eigen::VectorXd& y_full) const;                 // A_h + f_y(y)
    Eigen::VectorXd objective_gradient_vector(const Eigen::VectorXd& y_full) const;  // L_y(x,y) phi_i
    SpMat curvature_form(const Eigen::VectorXd& y_full, const Eigen::VectorXd& phi_full) const;
    Eigen::VectorXd to_full(const Eigen::VectorXd& interior) const;
    Eigen::VectorXd to_interior(const Eigen::VectorXd& full) const;

private:
    SimplexMesh mesh_;
    EllipticData data_;
    std::vector<int> omega_;
    MeasureSpacePtr control_space_;
    QuadratureRule rule_;
    SpMat stiffness_;  // stiffness + a0 * mass, interior unknowns
    int threads_ = 1;
};

/// ProblemOracle instance. Caches state, adjoint and curvature form for the
/// most recent control; an optional control-space gradient shift e turns the
/// instance into a manufactured problem with gradient Phi(u) + e + kappa*u.
class EllipticProblem final : public ProblemOracle {
public:
    EllipticProblem(SimplexMesh mesh, EllipticData data, BoxBounds bounds,
                    std::vector<int> omega = {});

    const MeasureSpacePtr& control_space() const override { return engine_.control_space(); }
    const BoxBounds& bounds() const override { return bounds_; }
    double objective(const GridFunction& u) override;
    GridFunction phi(const GridFunction& u) override;
    GridFunction apply_phi_prime(const GridFunction& u, const GridFunction& v) override;

    const EllipticEngine& engine() const { return engine_; }
    void set_worker_threads(int t) { engine_.set_worker_threads(t); }
    void set_gradient_shift(GridFunction e) { shift_ = std::move(e); invalidate(); }
    void clear_gradient_shift() { shift_.reset(); invalidate(); }
    const std::optional<GridFunction>& gradient_shift() const { return shift_; }

    /// State/adjoint pair for the most recent u (solving if needed).
    const EllipticState& state_for(const GridFunction& u);

private:
    void ensure_state(const GridFunction& u);
    void ensure_adjoint();
    void ensure_curvature();
    void invalidate() { cache_valid_ = false; }

    EllipticEngine engine_;
    BoxBounds bounds_;
    std::optional<GridFunction> shift_;
    bool cache_valid_ = false;
    std::vector<double> cached_u_;
    EllipticState state_;
    bool adjoint_done_ = false;
    bool curvature_done_ = false;
    SpMat w_form_;
};

/// Gradient shift that makes `target` satisfy the discrete projection
/// identity exactly for the shifted problem: on free points the shifted
/// gradient vanishes, on bound-active points it sits `margin` inside the
/// correct sign. Throws std::invalid_argument for infeasible targets or when
/// no point is free.
GridFunction manufacture_gradient_shift(EllipticProblem& problem, double kappa,
                                        const GridFunction& target, double margin);

/// Lagrange-Newton view of the elliptic instance: state and adjoint are
/// independent nodal iterates; each frozen subproblem requires one
/// factorization and only linear solves.
class EllipticLagrangeNewton final : public LagrangeNewtonOracle {
public:
    EllipticLagrangeNewton(const EllipticEngine& engine, BoxBounds bounds);

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
    const EllipticEngine* engine_;
    BoxBounds bounds_;
    // Frozen subproblem data.
    GridFunction u_n_;
    Eigen::VectorXd y_n_, phi_n_;      // full node vectors
    Eigen::SimplicialLDLT<SpMat> fac_;
    SpMat w_form_;
    Eigen::VectorXd w0_;               // interior correction from the state residual
    Eigen::VectorXd lambda0_;          // interior adjoint of the frozen subproblem at v = 0
    Eigen::VectorXd ly_;               // objective gradient vector at y_n
    // Warm start for true_objective bookkeeping.
    std::optional<EllipticState> scratch_;
};

} // namespace sqpbox
