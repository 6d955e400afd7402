#include "sqpbox/parabolic.hpp"

#include <cmath>
#include <stdexcept>

#include "fem_util.hpp"
#include "sqpbox/errors.hpp"

namespace sqpbox {

using detail::csc_entry;
using detail::for_each_quad_point;
using detail::interp;

ParabolicData example_parabolic_data(int dimension) {
    ParabolicData d;
    d.f = [](const double*, double, double y) { return y * y * y - y; };
    d.f_y = [](const double*, double, double y) { return 3.0 * y * y - 1.0; };
    d.f_yy = [](const double*, double, double y) { return 6.0 * y; };
    d.g = [](const double*, double) { return 1.0; };
    auto y0 = [dimension](const double* x) {
        double p = 1.0;
        for (int i = 0; i < dimension; ++i) p *= 8.0 * x[i] * (1.0 - x[i]);
        return p;
    };
    d.y0 = y0;
    d.y_d = [y0](const double* x, double t) { return y0(x) * std::cos(M_PI * t); };
    return d;
}

ParabolicEngine::ParabolicEngine(SimplexMesh mesh, ParabolicData data, double horizon,
                                 int time_refinement)
    : mesh_(std::move(mesh)), data_(std::move(data)), horizon_(horizon),
      rule_(volume_rule(mesh_.dimension())) {
    if (!data_.f || !data_.f_y || !data_.f_yy || !data_.g || !data_.y0 || !data_.y_d)
        throw std::invalid_argument("ParabolicEngine: incomplete coefficient data");
    if (!(horizon_ > 0.0) || time_refinement < 1 || time_refinement > 20)
        throw std::invalid_argument("ParabolicEngine: invalid time discretization");
    steps_ = 1 << time_refinement;
    tau_ = horizon_ / steps_;

    // Control measure: lumped boundary mass times the time step.
    const auto& lumped = mesh_.lumped_boundary_mass();
    std::vector<double> weights;
    weights.reserve(lumped.size() * static_cast<std::size_t>(steps_));
    for (int k = 1; k <= steps_; ++k)
        for (double m : lumped) weights.push_back(m * tau_);
    control_space_ = std::make_shared<MeasureSpace>(std::move(weights));

    // Consistent mass and stiffness over all nodes; base = mass/tau + K
    // fixes the sparsity pattern of every step operator.
    const int d = mesh_.dimension();
    const int vpc = mesh_.verts_per_cell();
    const double vol = mesh_.cell_volume();
    const double mass_off = vol / ((d + 1.0) * (d + 2.0));
    const int nn = mesh_.node_count();
    std::vector<Eigen::Triplet<double>> tm, tk;
    tm.reserve(static_cast<std::size_t>(mesh_.cell_count()) * vpc * vpc);
    tk.reserve(tm.capacity());
    for (int c = 0; c < mesh_.cell_count(); ++c)
        for (int k = 0; k < vpc; ++k) {
            const int ik = mesh_.cell_vertex(c, k);
            const double* gk = mesh_.basis_gradient(c, k);
            for (int l = 0; l < vpc; ++l) {
                const int il = mesh_.cell_vertex(c, l);
                const double* gl = mesh_.basis_gradient(c, l);
                double dot = 0.0;
                for (int r = 0; r < d; ++r) dot += gk[r] * gl[r];
                tm.emplace_back(ik, il, mass_off * (k == l ? 2.0 : 1.0));
                tk.emplace_back(ik, il, vol * dot);
            }
        }
    mass_.resize(nn, nn);
    mass_.setFromTriplets(tm.begin(), tm.end());
    mass_.makeCompressed();
    Eigen::SparseMatrix<double> stiff(nn, nn);
    stiff.setFromTriplets(tk.begin(), tk.end());
    base_ = mass_ / tau_ + stiff;
    base_.makeCompressed();
}

Eigen::VectorXd ParabolicEngine::initial_interpolant() const {
    Eigen::VectorXd y0(mesh_.node_count());
    for (int i = 0; i < mesh_.node_count(); ++i) y0[i] = data_.y0(mesh_.node(i));
    return y0;
}

Eigen::VectorXd ParabolicEngine::desired_state(int k) const {
    const double t = k * tau_;
    Eigen::VectorXd yd(mesh_.node_count());
    for (int i = 0; i < mesh_.node_count(); ++i) yd[i] = data_.y_d(mesh_.node(i), t);
    return yd;
}

Eigen::VectorXd ParabolicEngine::boundary_load(int k) const {
    const double t = k * tau_;
    Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh_.node_count());
    const auto& nodes = mesh_.boundary_nodes();
    const auto& lumped = mesh_.lumped_boundary_mass();
    for (std::size_t b = 0; b < nodes.size(); ++b)
        load[nodes[b]] = lumped[b] * data_.g(mesh_.node(nodes[b]), t);
    return load;
}

Eigen::VectorXd ParabolicEngine::boundary_vector(const std::vector<double>& boundary_values) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh_.node_count());
    const auto& nodes = mesh_.boundary_nodes();
    const auto& lumped = mesh_.lumped_boundary_mass();
    for (std::size_t b = 0; b < nodes.size(); ++b)
        out[nodes[b]] = lumped[b] * boundary_values[b];
    return out;
}

namespace {

// Parallel all-node vector assembly of sum w coeff(x, interp) phi_i.
template <class Coeff>
Eigen::VectorXd assemble_vector(const SimplexMesh& mesh, const QuadratureRule& rule, int threads,
                                const Eigen::VectorXd& field, Coeff&& coeff) {
    const int vpc = mesh.verts_per_cell();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.node_count());
    std::vector<Eigen::VectorXd> bufs(static_cast<std::size_t>(std::max(1, threads)),
                                      Eigen::VectorXd::Zero(mesh.node_count()));
    detail::parallel_quad_assemble(
        mesh, rule, threads, bufs,
        [&](Eigen::VectorXd& buf, int c, const double* bary, const double* xq, double w) {
            const double val = w * coeff(xq, interp(mesh, field, c, bary));
            for (int kk = 0; kk < vpc; ++kk) buf[mesh.cell_vertex(c, kk)] += val * bary[kk];
        },
        [&](const Eigen::VectorXd& buf) { out += buf; });
    return out;
}

// Parallel all-node form assembly into a copy of the pattern matrix.
template <class Coeff>
Eigen::SparseMatrix<double> assemble_form(const SimplexMesh& mesh, const QuadratureRule& rule,
                                          int threads, const Eigen::SparseMatrix<double>& pattern,
                                          Coeff&& coeff) {
    Eigen::SparseMatrix<double> out = pattern;
    const int vpc = mesh.verts_per_cell();
    std::vector<std::vector<double>> bufs(
        static_cast<std::size_t>(std::max(1, threads)),
        std::vector<double>(static_cast<std::size_t>(out.nonZeros()), 0.0));
    detail::parallel_quad_assemble(
        mesh, rule, threads, bufs,
        [&](std::vector<double>& buf, int c, const double* bary, const double* xq, double w) {
            const double val = w * coeff(c, bary, xq);
            for (int a = 0; a < vpc; ++a) {
                const int ia = mesh.cell_vertex(c, a);
                for (int b = 0; b < vpc; ++b)
                    buf[static_cast<std::size_t>(detail::csc_index(out, ia, mesh.cell_vertex(c, b)))] +=
                        val * bary[a] * bary[b];
            }
        },
        [&](const std::vector<double>& buf) {
            double* values = out.valuePtr();
            for (std::size_t i = 0; i < buf.size(); ++i) values[i] += buf[i];
        });
    return out;
}

} // namespace

Eigen::VectorXd ParabolicEngine::nonlinearity_vector(const Eigen::VectorXd& y, int k) const {
    const double t = k * tau_;
    return assemble_vector(mesh_, rule_, threads_, y,
                           [&](const double* x, double yq) { return data_.f(x, t, yq); });
}

Eigen::SparseMatrix<double> ParabolicEngine::step_matrix(const Eigen::VectorXd& y,
                                                         const GridFunction& u, int k) const {
    const double t = k * tau_;
    Eigen::SparseMatrix<double> j =
        assemble_form(mesh_, rule_, threads_, base_, [&](int c, const double* bary, const double* xq) {
            return data_.f_y(xq, t, interp(mesh_, y, c, bary));
        });
    const auto& nodes = mesh_.boundary_nodes();
    const auto& lumped = mesh_.lumped_boundary_mass();
    const int nb = static_cast<int>(nodes.size());
    for (int b = 0; b < nb; ++b)
        csc_entry(j, nodes[static_cast<std::size_t>(b)], nodes[static_cast<std::size_t>(b)]) +=
            lumped[static_cast<std::size_t>(b)] *
            u.values[lattice_index(nb, k, b)];
    return j;
}

Eigen::VectorXd ParabolicEngine::step_residual(const Eigen::VectorXd& yk,
                                               const Eigen::VectorXd& yprev,
                                               const GridFunction& u, int k) const {
    const auto& nodes = mesh_.boundary_nodes();
    const auto& lumped = mesh_.lumped_boundary_mass();
    const int nb = boundary_count();
    Eigen::VectorXd r =
        base_ * yk - mass_ * yprev / tau_ + nonlinearity_vector(yk, k) - boundary_load(k);
    for (std::size_t b = 0; b < nodes.size(); ++b)
        r[nodes[b]] += lumped[b] * u.values[lattice_index(nb, k, static_cast<int>(b))] * yk[nodes[b]];
    return r;
}

ParabolicState ParabolicEngine::march_state(const GridFunction& u,
                                            const ParabolicState* warm_start) const {
    const int nb = boundary_count();
    if (static_cast<int>(u.size()) != nb * steps_)
        throw std::invalid_argument("march_state: control lattice size mismatch");

    ParabolicState state;
    state.y.level.resize(static_cast<std::size_t>(steps_) + 1);
    state.fac.assign(static_cast<std::size_t>(steps_) + 1, nullptr);
    state.y.level[0] = initial_interpolant();

    for (int k = 1; k <= steps_; ++k) {
        const Eigen::VectorXd& yprev = state.y.level[static_cast<std::size_t>(k) - 1];
        const double tol = 1e-14 * (1.0 + (mass_ * yprev / tau_ + boundary_load(k)).norm());

        Eigen::VectorXd y = (warm_start &&
                             static_cast<int>(warm_start->y.level.size()) == steps_ + 1)
                                ? warm_start->y.level[static_cast<std::size_t>(k)]
                                : yprev;

        auto fac = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        fac->analyzePattern(base_);
        bool converged = false;
        for (int it = 0; it < 50; ++it) {
            const Eigen::VectorXd r = step_residual(y, yprev, u, k);
            if (r.norm() <= tol) {
                converged = true;
                break;
            }
            fac->factorize(step_matrix(y, u, k));
            if (fac->info() != Eigen::Success)
                throw StateSolveError("parabolic state: factorization failed at step " +
                                          std::to_string(k), k);
            y -= fac->solve(r);
        }
        if (!converged)
            throw StateSolveError("parabolic state: Newton did not converge at step " +
                                      std::to_string(k), k);
        fac->factorize(step_matrix(y, u, k));
        if (fac->info() != Eigen::Success)
            throw StateSolveError("parabolic state: factorization failed at step " +
                                      std::to_string(k), k);
        state.y.level[static_cast<std::size_t>(k)] = y;
        state.fac[static_cast<std::size_t>(k)] = std::move(fac);
    }
    return state;
}

void ParabolicEngine::march_adjoint(ParabolicState& state) const {
    state.phi.level.assign(static_cast<std::size_t>(steps_) + 1,
                           Eigen::VectorXd::Zero(mesh_.node_count()));
    Eigen::VectorXd next = Eigen::VectorXd::Zero(mesh_.node_count());
    for (int k = steps_; k >= 1; --k) {
        const Eigen::VectorXd rhs =
            mass_ * next / tau_ +
            mass_ * (state.y.level[static_cast<std::size_t>(k)] - desired_state(k));
        next = state.fac[static_cast<std::size_t>(k)]->solve(rhs);
        state.phi.level[static_cast<std::size_t>(k)] = next;
    }
}

double ParabolicEngine::step_residual_norm(const ParabolicState& state, const GridFunction& u,
                                           int k) const {
    return step_residual(state.y.level[static_cast<std::size_t>(k)],
                         state.y.level[static_cast<std::size_t>(k) - 1], u, k)
        .norm();
}

double ParabolicEngine::objective(const ParabolicState& state) const {
    double total = 0.0;
    for (int k = 1; k <= steps_; ++k) {
        const Eigen::VectorXd diff = state.y.level[static_cast<std::size_t>(k)] - desired_state(k);
        total += 0.5 * tau_ * diff.dot(mass_ * diff);
    }
    return total;
}

GridFunction ParabolicEngine::boundary_product(const Trajectory& y, const Trajectory& phi) const {
    const auto& nodes = mesh_.boundary_nodes();
    const int nb = boundary_count();
    std::vector<double> out(static_cast<std::size_t>(nb) * steps_);
    for (int k = 1; k <= steps_; ++k)
        for (int b = 0; b < nb; ++b)
            out[lattice_index(nb, k, b)] =
                -y.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]] *
                phi.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
    return GridFunction(control_space_, std::move(out));
}

std::vector<Eigen::SparseMatrix<double>> ParabolicEngine::curvature_forms(
    const Trajectory& y, const Trajectory& phi) const {
    std::vector<Eigen::SparseMatrix<double>> forms(static_cast<std::size_t>(steps_) + 1);
    Eigen::SparseMatrix<double> zero_pattern = base_;
    std::fill(zero_pattern.valuePtr(), zero_pattern.valuePtr() + zero_pattern.nonZeros(), 0.0);
    for (int k = 1; k <= steps_; ++k) {
        const double t = k * tau_;
        const Eigen::VectorXd& yk = y.level[static_cast<std::size_t>(k)];
        const Eigen::VectorXd& pk = phi.level[static_cast<std::size_t>(k)];
        forms[static_cast<std::size_t>(k)] =
            assemble_form(mesh_, rule_, threads_, zero_pattern,
                          [&](int c, const double* bary, const double* xq) {
                              return data_.f_yy(xq, t, interp(mesh_, yk, c, bary)) *
                                     interp(mesh_, pk, c, bary);
                          });
    }
    return forms;
}

GridFunction ParabolicEngine::apply_phi_prime(const ParabolicState& state,
                                              const std::vector<Eigen::SparseMatrix<double>>& w_forms,
                                              const GridFunction& v) const {
    const auto& nodes = mesh_.boundary_nodes();
    const int nb = boundary_count();
    const int nn = mesh_.node_count();

    // Forward linearized state: J_k z^k = (M/tau) z^{k-1} - (m v y)|_Gamma.
    Trajectory z;
    z.level.assign(static_cast<std::size_t>(steps_) + 1, Eigen::VectorXd::Zero(nn));
    std::vector<double> bvals(static_cast<std::size_t>(nb));
    for (int k = 1; k <= steps_; ++k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[lattice_index(nb, k, b)] *
                state.y.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        Eigen::VectorXd rhs = mass_ * z.level[static_cast<std::size_t>(k) - 1] / tau_ -
                              boundary_vector(bvals);
        z.level[static_cast<std::size_t>(k)] = state.fac[static_cast<std::size_t>(k)]->solve(rhs);
    }

    // Backward second adjoint:
    // J_k eta^k = (M/tau) eta^{k+1} + M z^k - W_k z^k - (m v phi)|_Gamma.
    Trajectory eta;
    eta.level.assign(static_cast<std::size_t>(steps_) + 1, Eigen::VectorXd::Zero(nn));
    Eigen::VectorXd next = Eigen::VectorXd::Zero(nn);
    for (int k = steps_; k >= 1; --k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[lattice_index(nb, k, b)] *
                state.phi.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        Eigen::VectorXd rhs = mass_ * next / tau_ +
                              mass_ * z.level[static_cast<std::size_t>(k)] -
                              w_forms[static_cast<std::size_t>(k)] * z.level[static_cast<std::size_t>(k)] -
                              boundary_vector(bvals);
        next = state.fac[static_cast<std::size_t>(k)]->solve(rhs);
        eta.level[static_cast<std::size_t>(k)] = next;
    }

    std::vector<double> out(static_cast<std::size_t>(nb) * steps_);
    for (int k = 1; k <= steps_; ++k)
        for (int b = 0; b < nb; ++b) {
            const int node = nodes[static_cast<std::size_t>(b)];
            out[lattice_index(nb, k, b)] =
                -(state.y.level[static_cast<std::size_t>(k)][node] *
                      eta.level[static_cast<std::size_t>(k)][node] +
                  z.level[static_cast<std::size_t>(k)][node] *
                      state.phi.level[static_cast<std::size_t>(k)][node]);
        }
    return GridFunction(control_space_, std::move(out));
}

// ---------------------------------------------------------------------------
// Oracle with caching
// ---------------------------------------------------------------------------

ParabolicProblem::ParabolicProblem(SimplexMesh mesh, ParabolicData data, BoxBounds bounds,
                                   double horizon, int time_refinement)
    : engine_(std::move(mesh), std::move(data), horizon, time_refinement), bounds_(bounds) {}

void ParabolicProblem::ensure_state(const GridFunction& u) {
    if (cache_valid_ && cached_u_ == u.values) return;
    state_ = engine_.march_state(u, cache_valid_ ? &state_ : nullptr);
    cached_u_ = u.values;
    cache_valid_ = true;
    adjoint_done_ = false;
    curvature_done_ = false;
}

void ParabolicProblem::ensure_adjoint() {
    if (adjoint_done_) return;
    engine_.march_adjoint(state_);
    adjoint_done_ = true;
}

void ParabolicProblem::ensure_curvature() {
    ensure_adjoint();
    if (curvature_done_) return;
    w_forms_ = engine_.curvature_forms(state_.y, state_.phi);
    curvature_done_ = true;
}

const ParabolicState& ParabolicProblem::state_for(const GridFunction& u) {
    ensure_state(u);
    ensure_adjoint();
    return state_;
}

double ParabolicProblem::objective(const GridFunction& u) {
    ensure_state(u);
    return engine_.objective(state_);
}

GridFunction ParabolicProblem::phi(const GridFunction& u) {
    ensure_state(u);
    ensure_adjoint();
    return engine_.boundary_product(state_.y, state_.phi);
}

GridFunction ParabolicProblem::apply_phi_prime(const GridFunction& u, const GridFunction& v) {
    ensure_state(u);
    ensure_curvature();
    return engine_.apply_phi_prime(state_, w_forms_, v);
}

// ---------------------------------------------------------------------------
// Lagrange-Newton view
// ---------------------------------------------------------------------------

ParabolicLagrangeNewton::ParabolicLagrangeNewton(const ParabolicEngine& engine, BoxBounds bounds)
    : engine_(&engine), bounds_(bounds) {}

Eigen::VectorXd ParabolicLagrangeNewton::zero_state() const {
    return Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(engine_->steps()) * engine_->mesh().node_count());
}

Eigen::VectorXd ParabolicLagrangeNewton::zero_adjoint() const { return zero_state(); }

Trajectory ParabolicLagrangeNewton::unflatten(const Eigen::VectorXd& flat, bool with_initial) const {
    const int nn = engine_->mesh().node_count();
    Trajectory t;
    t.level.assign(static_cast<std::size_t>(engine_->steps()) + 1, Eigen::VectorXd::Zero(nn));
    if (with_initial) t.level[0] = engine_->initial_interpolant();
    for (int k = 1; k <= engine_->steps(); ++k)
        t.level[static_cast<std::size_t>(k)] = flat.segment(static_cast<Eigen::Index>(k - 1) * nn, nn);
    return t;
}

Eigen::VectorXd ParabolicLagrangeNewton::flatten(const Trajectory& traj) const {
    const int nn = engine_->mesh().node_count();
    Eigen::VectorXd flat(static_cast<Eigen::Index>(engine_->steps()) * nn);
    for (int k = 1; k <= engine_->steps(); ++k)
        flat.segment(static_cast<Eigen::Index>(k - 1) * nn, nn) = traj.level[static_cast<std::size_t>(k)];
    return flat;
}

void ParabolicLagrangeNewton::consistent_point(const GridFunction& u, Eigen::VectorXd& y,
                                               Eigen::VectorXd& phi) {
    ParabolicState state = engine_->march_state(u);
    engine_->march_adjoint(state);
    y = flatten(state.y);
    phi = flatten(state.phi);
}

Trajectory ParabolicLagrangeNewton::forward_march(const std::vector<Eigen::VectorXd>& loads) const {
    const int nn = engine_->mesh().node_count();
    Trajectory w;
    w.level.assign(static_cast<std::size_t>(engine_->steps()) + 1, Eigen::VectorXd::Zero(nn));
    for (int k = 1; k <= engine_->steps(); ++k) {
        const Eigen::VectorXd rhs =
            engine_->mass() * w.level[static_cast<std::size_t>(k) - 1] / engine_->tau() +
            loads[static_cast<std::size_t>(k)];
        w.level[static_cast<std::size_t>(k)] = fac_[static_cast<std::size_t>(k)]->solve(rhs);
    }
    return w;
}

Trajectory ParabolicLagrangeNewton::backward_march(const std::vector<Eigen::VectorXd>& loads) const {
    const int nn = engine_->mesh().node_count();
    Trajectory mu;
    mu.level.assign(static_cast<std::size_t>(engine_->steps()) + 1, Eigen::VectorXd::Zero(nn));
    Eigen::VectorXd next = Eigen::VectorXd::Zero(nn);
    for (int k = engine_->steps(); k >= 1; --k) {
        const Eigen::VectorXd rhs = engine_->mass() * next / engine_->tau() +
                                    loads[static_cast<std::size_t>(k)];
        next = fac_[static_cast<std::size_t>(k)]->solve(rhs);
        mu.level[static_cast<std::size_t>(k)] = next;
    }
    return mu;
}

void ParabolicLagrangeNewton::set_point(const GridFunction& u, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& phi) {
    u_n_ = u;
    y_n_ = unflatten(y, true);
    phi_n_ = unflatten(phi, false);
    const int steps = engine_->steps();

    fac_.assign(static_cast<std::size_t>(steps) + 1, nullptr);
    for (int k = 1; k <= steps; ++k) {
        auto fac = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        fac->compute(engine_->step_matrix(y_n_.level[static_cast<std::size_t>(k)], u_n_, k));
        if (fac->info() != Eigen::Success)
            throw SolverError("sqplin: step operator factorization failed at step " +
                              std::to_string(k));
        fac_[static_cast<std::size_t>(k)] = std::move(fac);
    }
    w_forms_ = engine_->curvature_forms(y_n_, phi_n_);

    // Affine parts of the frozen subproblem: state correction from the
    // equation residual, then its adjoint.
    std::vector<Eigen::VectorXd> loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k)
        loads[static_cast<std::size_t>(k)] =
            -engine_->step_residual(y_n_.level[static_cast<std::size_t>(k)],
                                    y_n_.level[static_cast<std::size_t>(k) - 1], u_n_, k);
    w0_ = forward_march(loads);

    std::vector<Eigen::VectorXd> adj_loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
        const Eigen::VectorXd& w0k = w0_.level[static_cast<std::size_t>(k)];
        adj_loads[static_cast<std::size_t>(k)] =
            engine_->mass() * (y_n_.level[static_cast<std::size_t>(k)] - engine_->desired_state(k)) +
            engine_->mass() * w0k - w_forms_[static_cast<std::size_t>(k)] * w0k;
    }
    mu0_ = backward_march(adj_loads);
}

GridFunction ParabolicLagrangeNewton::phi_tilde() {
    const auto& nodes = engine_->mesh().boundary_nodes();
    const int nb = engine_->boundary_count();
    std::vector<double> out(static_cast<std::size_t>(nb) * engine_->steps());
    for (int k = 1; k <= engine_->steps(); ++k)
        for (int b = 0; b < nb; ++b) {
            const int node = nodes[static_cast<std::size_t>(b)];
            out[ParabolicEngine::lattice_index(nb, k, b)] =
                -(phi_n_.level[static_cast<std::size_t>(k)][node] *
                      w0_.level[static_cast<std::size_t>(k)][node] +
                  y_n_.level[static_cast<std::size_t>(k)][node] *
                      mu0_.level[static_cast<std::size_t>(k)][node]);
        }
    return GridFunction(engine_->control_space(), std::move(out));
}

GridFunction ParabolicLagrangeNewton::apply_hessian(const GridFunction& v) {
    const auto& nodes = engine_->mesh().boundary_nodes();
    const int nb = engine_->boundary_count();
    const int steps = engine_->steps();
    std::vector<double> bvals(static_cast<std::size_t>(nb));

    std::vector<Eigen::VectorXd> loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[ParabolicEngine::lattice_index(nb, k, b)] *
                y_n_.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        loads[static_cast<std::size_t>(k)] = -engine_->boundary_vector(bvals);
    }
    const Trajectory z = forward_march(loads);

    std::vector<Eigen::VectorXd> adj_loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[ParabolicEngine::lattice_index(nb, k, b)] *
                phi_n_.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        const Eigen::VectorXd& zk = z.level[static_cast<std::size_t>(k)];
        adj_loads[static_cast<std::size_t>(k)] = engine_->mass() * zk -
                                                 w_forms_[static_cast<std::size_t>(k)] * zk -
                                                 engine_->boundary_vector(bvals);
    }
    const Trajectory mu = backward_march(adj_loads);

    std::vector<double> out(static_cast<std::size_t>(nb) * steps);
    for (int k = 1; k <= steps; ++k)
        for (int b = 0; b < nb; ++b) {
            const int node = nodes[static_cast<std::size_t>(b)];
            out[ParabolicEngine::lattice_index(nb, k, b)] =
                -(phi_n_.level[static_cast<std::size_t>(k)][node] *
                      z.level[static_cast<std::size_t>(k)][node] +
                  y_n_.level[static_cast<std::size_t>(k)][node] *
                      mu.level[static_cast<std::size_t>(k)][node]);
        }
    return GridFunction(engine_->control_space(), std::move(out));
}

void ParabolicLagrangeNewton::recover(const GridFunction& v, Eigen::VectorXd& y_next,
                                      Eigen::VectorXd& phi_next) {
    const auto& nodes = engine_->mesh().boundary_nodes();
    const int nb = engine_->boundary_count();
    const int steps = engine_->steps();
    std::vector<double> bvals(static_cast<std::size_t>(nb));

    std::vector<Eigen::VectorXd> loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[ParabolicEngine::lattice_index(nb, k, b)] *
                y_n_.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        loads[static_cast<std::size_t>(k)] = -engine_->boundary_vector(bvals);
    }
    const Trajectory z = forward_march(loads);

    std::vector<Eigen::VectorXd> adj_loads(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
        for (int b = 0; b < nb; ++b)
            bvals[static_cast<std::size_t>(b)] =
                v.values[ParabolicEngine::lattice_index(nb, k, b)] *
                phi_n_.level[static_cast<std::size_t>(k)][nodes[static_cast<std::size_t>(b)]];
        const Eigen::VectorXd& zk = z.level[static_cast<std::size_t>(k)];
        adj_loads[static_cast<std::size_t>(k)] = engine_->mass() * zk -
                                                 w_forms_[static_cast<std::size_t>(k)] * zk -
                                                 engine_->boundary_vector(bvals);
    }
    const Trajectory mu = backward_march(adj_loads);

    Trajectory y_out = y_n_, phi_out = phi_n_;
    for (int k = 1; k <= steps; ++k) {
        y_out.level[static_cast<std::size_t>(k)] +=
            w0_.level[static_cast<std::size_t>(k)] + z.level[static_cast<std::size_t>(k)];
        phi_out.level[static_cast<std::size_t>(k)] =
            mu0_.level[static_cast<std::size_t>(k)] + mu.level[static_cast<std::size_t>(k)];
    }
    y_next = flatten(y_out);
    phi_next = flatten(phi_out);
}

double ParabolicLagrangeNewton::true_objective(const GridFunction& u) {
    scratch_ = engine_->march_state(u, scratch_ ? &*scratch_ : nullptr);
    return engine_->objective(*scratch_);
}

} // namespace sqpbox
