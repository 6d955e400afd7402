#include "sqpbox/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fem_util.hpp"
#include "sqpbox/errors.hpp"

namespace sqpbox {

EllipticData example_elliptic_data(int dimension) {
    EllipticData d;
    d.f = [](const double*, double y) { return std::exp(y); };
    d.f_y = [](const double*, double y) { return std::exp(y); };
    d.f_yy = [](const double*, double y) { return std::exp(y); };
    auto y_d = [dimension](const double* x) {
        double p = 1.0;
        for (int i = 0; i < dimension; ++i) p *= 8.0 * x[i] * (1.0 - x[i]);
        return p;
    };
    d.L = [y_d](const double* x, double y) {
        const double e = y - y_d(x);
        return 0.5 * e * e;
    };
    d.L_y = [y_d](const double* x, double y) { return y - y_d(x); };
    d.L_yy = [](const double*, double) { return 1.0; };
    d.a0 = 0.0;
    return d;
}

EllipticEngine::EllipticEngine(SimplexMesh mesh, EllipticData data, std::vector<int> omega)
    : mesh_(std::move(mesh)), data_(std::move(data)), omega_(std::move(omega)),
      rule_(volume_rule(mesh_.dimension())) {
    if (!data_.f || !data_.f_y || !data_.f_yy || !data_.L || !data_.L_y || !data_.L_yy)
        throw std::invalid_argument("EllipticEngine: incomplete coefficient data");
    if (omega_.empty()) {
        omega_.resize(static_cast<std::size_t>(mesh_.cell_count()));
        for (int c = 0; c < mesh_.cell_count(); ++c) omega_[static_cast<std::size_t>(c)] = c;
    }
    for (int c : omega_)
        if (c < 0 || c >= mesh_.cell_count())
            throw std::invalid_argument("EllipticEngine: omega cell out of range");

    control_space_ = std::make_shared<MeasureSpace>(
        std::vector<double>(omega_.size(), mesh_.cell_volume()));

    // Stiffness + a0 * consistent mass on the interior unknowns; this also
    // fixes the sparsity pattern reused by every linearized operator.
    const int d = mesh_.dimension();
    const int vpc = mesh_.verts_per_cell();
    const double vol = mesh_.cell_volume();
    const double mass_off = vol / ((d + 1.0) * (d + 2.0));
    const int ni = interior_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh_.cell_count()) * vpc * vpc);
    for (int c = 0; c < mesh_.cell_count(); ++c)
        for (int k = 0; k < vpc; ++k) {
            const int ik = mesh_.interior_index()[static_cast<std::size_t>(mesh_.cell_vertex(c, k))];
            if (ik < 0) continue;
            const double* gk = mesh_.basis_gradient(c, k);
            for (int l = 0; l < vpc; ++l) {
                const int il = mesh_.interior_index()[static_cast<std::size_t>(mesh_.cell_vertex(c, l))];
                if (il < 0) continue;
                const double* gl = mesh_.basis_gradient(c, l);
                double dot = 0.0;
                for (int r = 0; r < d; ++r) dot += gk[r] * gl[r];
                const double mass = mass_off * (k == l ? 2.0 : 1.0);
                trips.emplace_back(ik, il, vol * dot + data_.a0 * mass);
            }
        }
    stiffness_.resize(ni, ni);
    stiffness_.setFromTriplets(trips.begin(), trips.end());
    stiffness_.makeCompressed();
}

Eigen::VectorXd EllipticEngine::to_full(const Eigen::VectorXd& interior) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(mesh_.node_count());
    const auto& nodes = mesh_.interior_nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        full[nodes[i]] = interior[static_cast<Eigen::Index>(i)];
    return full;
}

Eigen::VectorXd EllipticEngine::to_interior(const Eigen::VectorXd& full) const {
    const auto& nodes = mesh_.interior_nodes();
    Eigen::VectorXd interior(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        interior[static_cast<Eigen::Index>(i)] = full[nodes[i]];
    return interior;
}

Eigen::VectorXd EllipticEngine::control_load(const GridFunction& u) const {
    if (u.size() != omega_.size())
        throw std::invalid_argument("control_load: control size mismatch");
    Eigen::VectorXd load = Eigen::VectorXd::Zero(interior_count());
    const int vpc = mesh_.verts_per_cell();
    const double contrib = mesh_.cell_volume() / vpc;
    for (std::size_t t = 0; t < omega_.size(); ++t) {
        const int c = omega_[t];
        for (int k = 0; k < vpc; ++k) {
            const int ik = mesh_.interior_index()[static_cast<std::size_t>(mesh_.cell_vertex(c, k))];
            if (ik >= 0) load[ik] += contrib * u.values[t];
        }
    }
    return load;
}

GridFunction EllipticEngine::control_average(const Eigen::VectorXd& nodal) const {
    std::vector<double> out(omega_.size());
    const int vpc = mesh_.verts_per_cell();
    for (std::size_t t = 0; t < omega_.size(); ++t) {
        const int c = omega_[t];
        double sum = 0.0;
        for (int k = 0; k < vpc; ++k) sum += nodal[mesh_.cell_vertex(c, k)];
        out[t] = sum / vpc;
    }
    return GridFunction(control_space_, std::move(out));
}

using detail::csc_index;
using detail::interp;
using detail::parallel_quad_assemble;

namespace {

// Vector assembly of sum_q w_q coeff(x_q, y(x_q)) phi_i(x_q) on the interior
// unknowns, parallel over cells with an ordered merge.
template <class Coeff>
Eigen::VectorXd assemble_interior_vector(const SimplexMesh& mesh, const QuadratureRule& rule,
                                         int threads, int interior_count,
                                         const Eigen::VectorXd& y_full, Coeff&& coeff) {
    const int vpc = mesh.verts_per_cell();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(interior_count);
    std::vector<Eigen::VectorXd> bufs(static_cast<std::size_t>(std::max(1, threads)),
                                      Eigen::VectorXd::Zero(interior_count));
    parallel_quad_assemble(
        mesh, rule, threads, bufs,
        [&](Eigen::VectorXd& buf, int c, const double* bary, const double* xq, double w) {
            const double val = w * coeff(xq, interp(mesh, y_full, c, bary));
            for (int k = 0; k < vpc; ++k) {
                const int ik = mesh.interior_index()[static_cast<std::size_t>(mesh.cell_vertex(c, k))];
                if (ik >= 0) buf[ik] += val * bary[k];
            }
        },
        [&](const Eigen::VectorXd& buf) { out += buf; });
    return out;
}

// Matrix assembly of the interior form sum_q w_q coeff(c, q) phi_i phi_j
// into a copy of the pattern matrix.
template <class Coeff>
SpMat assemble_interior_form(const SimplexMesh& mesh, const QuadratureRule& rule, int threads,
                             const SpMat& pattern, Coeff&& coeff) {
    SpMat out = pattern;
    const int vpc = mesh.verts_per_cell();
    std::vector<std::vector<double>> bufs(
        static_cast<std::size_t>(std::max(1, threads)),
        std::vector<double>(static_cast<std::size_t>(out.nonZeros()), 0.0));
    parallel_quad_assemble(
        mesh, rule, threads, bufs,
        [&](std::vector<double>& buf, int c, const double* bary, const double* xq, double w) {
            const double val = w * coeff(c, bary, xq);
            for (int k = 0; k < vpc; ++k) {
                const int ik = mesh.interior_index()[static_cast<std::size_t>(mesh.cell_vertex(c, k))];
                if (ik < 0) continue;
                for (int l = 0; l < vpc; ++l) {
                    const int il = mesh.interior_index()[static_cast<std::size_t>(mesh.cell_vertex(c, l))];
                    if (il >= 0)
                        buf[static_cast<std::size_t>(csc_index(out, ik, il))] += val * bary[k] * bary[l];
                }
            }
        },
        [&](const std::vector<double>& buf) {
            double* values = out.valuePtr();
            for (std::size_t i = 0; i < buf.size(); ++i) values[i] += buf[i];
        });
    return out;
}

} // namespace

Eigen::VectorXd EllipticEngine::nonlinearity_vector(const Eigen::VectorXd& y_full) const {
    return assemble_interior_vector(mesh_, rule_, threads_, interior_count(), y_full,
                                    [&](const double* x, double y) { return data_.f(x, y); });
}

Eigen::VectorXd EllipticEngine::objective_gradient_vector(const Eigen::VectorXd& y_full) const {
    return assemble_interior_vector(mesh_, rule_, threads_, interior_count(), y_full,
                                    [&](const double* x, double y) { return data_.L_y(x, y); });
}

SpMat EllipticEngine::linearized_matrix(const Eigen::VectorXd& y_full) const {
    return assemble_interior_form(mesh_, rule_, threads_, stiffness_,
                                  [&](int c, const double* bary, const double* xq) {
                                      return data_.f_y(xq, interp(mesh_, y_full, c, bary));
                                  });
}

SpMat EllipticEngine::curvature_form(const Eigen::VectorXd& y_full,
                                     const Eigen::VectorXd& phi_full) const {
    SpMat zero_pattern = stiffness_;
    std::fill(zero_pattern.valuePtr(), zero_pattern.valuePtr() + zero_pattern.nonZeros(), 0.0);
    return assemble_interior_form(mesh_, rule_, threads_, zero_pattern,
                                  [&](int c, const double* bary, const double* xq) {
                                      const double yq = interp(mesh_, y_full, c, bary);
                                      const double pq = interp(mesh_, phi_full, c, bary);
                                      return data_.L_yy(xq, yq) - pq * data_.f_yy(xq, yq);
                                  });
}

double EllipticEngine::objective(const EllipticState& state) const {
    double total = 0.0;
    std::vector<double> bufs(static_cast<std::size_t>(std::max(1, threads_)), 0.0);
    parallel_quad_assemble(
        mesh_, rule_, threads_, bufs,
        [&](double& buf, int c, const double* bary, const double* xq, double w) {
            buf += w * data_.L(xq, interp(mesh_, state.y, c, bary));
        },
        [&](double buf) { total += buf; });
    return total;
}

double EllipticEngine::state_residual_norm(const Eigen::VectorXd& y_full,
                                           const GridFunction& u) const {
    const Eigen::VectorXd y_int = to_interior(y_full);
    const Eigen::VectorXd r =
        stiffness_ * y_int + nonlinearity_vector(y_full) - control_load(u);
    return r.norm();
}

EllipticState EllipticEngine::solve_state(const GridFunction& u,
                                          const EllipticState* warm_start) const {
    const Eigen::VectorXd load = control_load(u);
    const double tol = 1e-14 * (1.0 + load.norm());

    EllipticState state;
    state.y = warm_start && warm_start->y.size() == mesh_.node_count()
                  ? warm_start->y
                  : Eigen::VectorXd::Zero(mesh_.node_count());
    Eigen::VectorXd y_int = to_interior(state.y);

    state.factorization = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
    state.factorization->analyzePattern(stiffness_);

    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd residual =
            stiffness_ * y_int + nonlinearity_vector(state.y) - load;
        if (residual.norm() <= tol) {
            converged = true;
            break;
        }
        state.factorization->factorize(linearized_matrix(state.y));
        if (state.factorization->info() != Eigen::Success)
            throw StateSolveError("elliptic state: linearized operator factorization failed");
        y_int -= state.factorization->solve(residual);
        state.y = to_full(y_int);
    }
    if (!converged)
        throw StateSolveError("elliptic state: Newton did not converge in 50 iterations");

    // Factorize at the converged state; reused by the adjoint and both
    // linearized solves.
    state.factorization->factorize(linearized_matrix(state.y));
    if (state.factorization->info() != Eigen::Success)
        throw StateSolveError("elliptic state: factorization failed at the solution");
    return state;
}

void EllipticEngine::solve_adjoint(EllipticState& state) const {
    if (!state.factorization)
        throw std::invalid_argument("solve_adjoint: state not solved");
    const Eigen::VectorXd rhs = objective_gradient_vector(state.y);
    const Eigen::VectorXd phi_int = state.factorization->solve(rhs);
    state.phi = to_full(phi_int);
}

Eigen::VectorXd EllipticEngine::solve_linearized(const EllipticState& state,
                                                 const GridFunction& v) const {
    return state.factorization->solve(control_load(v));
}

Eigen::VectorXd EllipticEngine::solve_second_adjoint(const EllipticState& state,
                                                     const SpMat& w_form,
                                                     const Eigen::VectorXd& z) const {
    return state.factorization->solve(w_form * z);
}

// ---------------------------------------------------------------------------
// Oracle with caching
// ---------------------------------------------------------------------------

EllipticProblem::EllipticProblem(SimplexMesh mesh, EllipticData data, BoxBounds bounds,
                                 std::vector<int> omega)
    : engine_(std::move(mesh), std::move(data), std::move(omega)), bounds_(bounds) {}

void EllipticProblem::ensure_state(const GridFunction& u) {
    if (cache_valid_ && cached_u_ == u.values) return;
    state_ = engine_.solve_state(u, cache_valid_ ? &state_ : nullptr);
    cached_u_ = u.values;
    cache_valid_ = true;
    adjoint_done_ = false;
    curvature_done_ = false;
}

void EllipticProblem::ensure_adjoint() {
    if (adjoint_done_) return;
    engine_.solve_adjoint(state_);
    adjoint_done_ = true;
}

void EllipticProblem::ensure_curvature() {
    ensure_adjoint();
    if (curvature_done_) return;
    w_form_ = engine_.curvature_form(state_.y, state_.phi);
    curvature_done_ = true;
}

const EllipticState& EllipticProblem::state_for(const GridFunction& u) {
    ensure_state(u);
    ensure_adjoint();
    return state_;
}

double EllipticProblem::objective(const GridFunction& u) {
    ensure_state(u);
    double val = engine_.objective(state_);
    if (shift_) val += weighted_inner(*shift_, u);
    return val;
}

GridFunction EllipticProblem::phi(const GridFunction& u) {
    ensure_state(u);
    ensure_adjoint();
    GridFunction out = engine_.control_average(state_.phi);
    if (shift_) add_scaled(out, 1.0, *shift_);
    return out;
}

GridFunction EllipticProblem::apply_phi_prime(const GridFunction& u, const GridFunction& v) {
    ensure_state(u);
    ensure_curvature();
    const Eigen::VectorXd z = engine_.solve_linearized(state_, v);
    const Eigen::VectorXd eta = engine_.solve_second_adjoint(state_, w_form_, z);
    return engine_.control_average(engine_.to_full(eta));
}

GridFunction manufacture_gradient_shift(EllipticProblem& problem, double kappa,
                                        const GridFunction& target, double margin) {
    // A nonpositive margin would make every bound-active point biactive
    // (gradient zero at the bound), which is the degenerate construction.
    if (!(margin > 0.0))
        throw std::invalid_argument(
            "manufacture_gradient_shift: margin must be positive (zero margin "
            "makes bound-active points biactive)");
    if (problem.gradient_shift())
        throw std::invalid_argument("manufacture_gradient_shift: problem already shifted");
    const BoxBounds& b = problem.bounds();
    for (double t : target.values)
        if (!b.contains(t))
            throw std::invalid_argument("manufacture_gradient_shift: target infeasible");
    const ActiveSetPartition part = classify_active(target, b, 0.0);

    const GridFunction phi_t = problem.phi(target);
    GridFunction e(target.space, std::vector<double>(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i)
        e.values[i] = -kappa * target.values[i] - phi_t.values[i];
    for (std::size_t i : part.lower_active)
        e.values[i] = -kappa * b.lower() - phi_t.values[i] + margin;
    for (std::size_t i : part.upper_active)
        e.values[i] = -kappa * b.upper() - phi_t.values[i] - margin;
    return e;
}

// ---------------------------------------------------------------------------
// Lagrange-Newton view
// ---------------------------------------------------------------------------

EllipticLagrangeNewton::EllipticLagrangeNewton(const EllipticEngine& engine, BoxBounds bounds)
    : engine_(&engine), bounds_(bounds) {}

Eigen::VectorXd EllipticLagrangeNewton::zero_state() const {
    return Eigen::VectorXd::Zero(engine_->mesh().node_count());
}

Eigen::VectorXd EllipticLagrangeNewton::zero_adjoint() const {
    return Eigen::VectorXd::Zero(engine_->mesh().node_count());
}

void EllipticLagrangeNewton::consistent_point(const GridFunction& u, Eigen::VectorXd& y,
                                              Eigen::VectorXd& phi) {
    EllipticState state = engine_->solve_state(u);
    engine_->solve_adjoint(state);
    y = state.y;
    phi = state.phi;
}

void EllipticLagrangeNewton::set_point(const GridFunction& u, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& phi) {
    u_n_ = u;
    y_n_ = y;
    phi_n_ = phi;
    const SpMat j = engine_->linearized_matrix(y_n_);
    fac_.compute(j);
    if (fac_.info() != Eigen::Success)
        throw SolverError("sqplin: linearized operator factorization failed");
    w_form_ = engine_->curvature_form(y_n_, phi_n_);
    ly_ = engine_->objective_gradient_vector(y_n_);

    const Eigen::VectorXd residual = engine_->stiffness() * engine_->to_interior(y_n_) +
                                     engine_->nonlinearity_vector(y_n_) -
                                     engine_->control_load(u_n_);
    w0_ = -fac_.solve(residual);
    lambda0_ = fac_.solve(ly_ + w_form_ * w0_);
}

GridFunction EllipticLagrangeNewton::phi_tilde() {
    return engine_->control_average(engine_->to_full(lambda0_));
}

GridFunction EllipticLagrangeNewton::apply_hessian(const GridFunction& v) {
    const Eigen::VectorXd z = fac_.solve(engine_->control_load(v));
    const Eigen::VectorXd eta = fac_.solve(w_form_ * z);
    return engine_->control_average(engine_->to_full(eta));
}

void EllipticLagrangeNewton::recover(const GridFunction& v, Eigen::VectorXd& y_next,
                                     Eigen::VectorXd& phi_next) {
    const Eigen::VectorXd z = fac_.solve(engine_->control_load(v));
    y_next = y_n_ + engine_->to_full(w0_ + z);
    phi_next = engine_->to_full(lambda0_ + fac_.solve(w_form_ * z));
}

double EllipticLagrangeNewton::true_objective(const GridFunction& u) {
    scratch_ = engine_->solve_state(u, scratch_ ? &*scratch_ : nullptr);
    return engine_->objective(*scratch_);
}

} // namespace sqpbox
