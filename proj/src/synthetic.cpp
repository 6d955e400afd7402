#include "sqpbox/synthetic.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>

#include "sqpbox/errors.hpp"

namespace sqpbox {

namespace {

Eigen::VectorXd to_eigen(const GridFunction& g) {
    return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

GridFunction from_eigen(const MeasureSpacePtr& space, const Eigen::VectorXd& v) {
    return GridFunction(space, std::vector<double>(v.data(), v.data() + v.size()));
}

} // namespace

SyntheticProblem make_synthetic(std::uint64_t seed, int n, SpectrumSpec spectrum,
                                double epsilon) {
    if (n < 1 || n > 64)
        throw std::invalid_argument("make_synthetic: n must be in [1, 64]");
    if (!(spectrum.min_eig <= spectrum.max_eig))
        throw std::invalid_argument("make_synthetic: empty spectrum range");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> wdist(0.5, 1.5);

    std::vector<double> weights(static_cast<std::size_t>(n));
    for (auto& w : weights) w = wdist(rng) / n;

    SyntheticProblem p;
    p.space = std::make_shared<MeasureSpace>(std::move(weights));
    p.epsilon = epsilon;

    // Eigenvalues of H in the mu metric, linearly spaced so the extremes are
    // exact. S = D^{1/2} Q diag(ev) Q^T D^{1/2}.
    Eigen::VectorXd ev(n);
    for (int i = 0; i < n; ++i)
        ev[i] = n == 1 ? spectrum.min_eig
                       : spectrum.min_eig + (spectrum.max_eig - spectrum.min_eig) * i / (n - 1.0);
    p.h_min = spectrum.min_eig;

    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = unit(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();

    Eigen::VectorXd dsqrt(n);
    for (int i = 0; i < n; ++i) dsqrt[i] = std::sqrt(p.space->weights()[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd core = Q * ev.asDiagonal() * Q.transpose();
    p.S = dsqrt.asDiagonal() * core * dsqrt.asDiagonal();
    p.S = 0.5 * (p.S + p.S.transpose()).eval();

    p.c.resize(n);
    for (int i = 0; i < n; ++i) p.c[i] = unit(rng);
    return p;
}

SyntheticOracle::SyntheticOracle(SyntheticProblem problem, BoxBounds bounds)
    : problem_(std::move(problem)), bounds_(bounds) {}

double SyntheticOracle::objective(const GridFunction& u) {
    const Eigen::VectorXd x = to_eigen(u);
    const auto& w = problem_.space->weights();
    double val = 0.5 * x.dot(problem_.S * x);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        val += problem_.c[i] * w[static_cast<std::size_t>(i)] * x[i] -
               problem_.epsilon * w[static_cast<std::size_t>(i)] * std::cos(x[i]);
    return val;
}

GridFunction SyntheticOracle::phi(const GridFunction& u) {
    const Eigen::VectorXd x = to_eigen(u);
    Eigen::VectorXd out = problem_.S * x;
    const auto& w = problem_.space->weights();
    for (Eigen::Index i = 0; i < x.size(); ++i)
        out[i] = out[i] / w[static_cast<std::size_t>(i)] + problem_.c[i] +
                 problem_.epsilon * std::sin(x[i]);
    return from_eigen(problem_.space, out);
}

GridFunction SyntheticOracle::apply_phi_prime(const GridFunction& u, const GridFunction& v) {
    const Eigen::VectorXd x = to_eigen(u);
    const Eigen::VectorXd d = to_eigen(v);
    Eigen::VectorXd out = problem_.S * d;
    const auto& w = problem_.space->weights();
    for (Eigen::Index i = 0; i < d.size(); ++i)
        out[i] = out[i] / w[static_cast<std::size_t>(i)] +
                 problem_.epsilon * std::cos(x[i]) * d[i];
    return from_eigen(problem_.space, out);
}

namespace {

// Exhaustive solver for min (1/2) x^T A x + b^T x over a box, where A is the
// bilinear-form matrix in point coordinates (already mu-weighted) and x is
// free only on `points`; entries outside are fixed to `fixed`. Enumerates
// lower/free/upper states per point in lexicographic order. Returns false if
// no feasible stationary pattern exists.
struct DenseBoxQp {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd lower, upper;  // per-point bounds (may be +-inf)
    Eigen::VectorXd fixed;         // values for points not in `points`
    std::vector<int> points;

    bool solve(Eigen::VectorXd& best_x, double& best_obj) const {
        const int m = static_cast<int>(points.size());
        if (m > 16) throw std::invalid_argument("brute force QP: more than 16 points");
        std::vector<int> state(static_cast<std::size_t>(m), 0);  // 0 lower, 1 free, 2 upper
        bool found = false;
        best_obj = kInf;
        const double scale = A.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff() + 1.0;
        const double sign_tol = 1e-11 * scale;

        while (true) {
            bool valid = true;
            for (int k = 0; k < m && valid; ++k) {
                if (state[static_cast<std::size_t>(k)] == 0 && lower[points[static_cast<std::size_t>(k)]] == -kInf) valid = false;
                if (state[static_cast<std::size_t>(k)] == 2 && upper[points[static_cast<std::size_t>(k)]] == kInf) valid = false;
            }
            if (valid) try_pattern(state, best_x, best_obj, found, sign_tol);

            int k = m - 1;
            while (k >= 0 && state[static_cast<std::size_t>(k)] == 2) {
                state[static_cast<std::size_t>(k)] = 0;
                --k;
            }
            if (k < 0) break;
            ++state[static_cast<std::size_t>(k)];
        }
        return found;
    }

private:
    void try_pattern(const std::vector<int>& state, Eigen::VectorXd& best_x,
                     double& best_obj, bool& found, double sign_tol) const {
        const int m = static_cast<int>(state.size());
        Eigen::VectorXd x = fixed;
        std::vector<int> free_idx;
        for (int k = 0; k < m; ++k) {
            const int i = points[static_cast<std::size_t>(k)];
            if (state[static_cast<std::size_t>(k)] == 0) x[i] = lower[i];
            else if (state[static_cast<std::size_t>(k)] == 2) x[i] = upper[i];
            else free_idx.push_back(i);
        }
        const int f = static_cast<int>(free_idx.size());
        if (f > 0) {
            Eigen::MatrixXd Aff(f, f);
            Eigen::VectorXd rhs(f);
            for (int r = 0; r < f; ++r) {
                for (int cidx = 0; cidx < f; ++cidx)
                    Aff(r, cidx) = A(free_idx[static_cast<std::size_t>(r)], free_idx[static_cast<std::size_t>(cidx)]);
                double coupling = b[free_idx[static_cast<std::size_t>(r)]];
                for (int j = 0; j < A.cols(); ++j) {
                    bool is_free = false;
                    for (int cidx = 0; cidx < f; ++cidx)
                        if (free_idx[static_cast<std::size_t>(cidx)] == j) { is_free = true; break; }
                    if (!is_free) coupling += A(free_idx[static_cast<std::size_t>(r)], j) * x[j];
                }
                rhs[r] = -coupling;
            }
            const Eigen::VectorXd xf = Aff.ldlt().solve(rhs);
            for (int r = 0; r < f; ++r) {
                const int i = free_idx[static_cast<std::size_t>(r)];
                if (!(xf[r] >= lower[i] && xf[r] <= upper[i])) return;
                x[i] = xf[r];
            }
        }
        // Stationarity sign check at the bound points of this pattern.
        const Eigen::VectorXd grad = A * x + b;
        for (int k = 0; k < m; ++k) {
            const int i = points[static_cast<std::size_t>(k)];
            if (state[static_cast<std::size_t>(k)] == 0 && grad[i] < -sign_tol) return;
            if (state[static_cast<std::size_t>(k)] == 2 && grad[i] > sign_tol) return;
        }
        const double obj = 0.5 * x.dot(A * x) + b.dot(x);
        if (!found || obj < best_obj) {
            found = true;
            best_obj = obj;
            best_x = x;
        }
    }
};

} // namespace

GridFunction brute_force_qp(const QpInstance& q) {
    const int n = static_cast<int>(q.base_point.size());
    if (n > 16)
        throw std::invalid_argument("brute_force_qp: instance has more than 16 points");

    // Densify the curvature operator column by column.
    Eigen::MatrixXd H(n, n);
    for (int j = 0; j < n; ++j) {
        GridFunction e(q.base_point.space, 0.0);
        e.values[static_cast<std::size_t>(j)] = 1.0;
        const GridFunction col = q.oracle->apply_phi_prime(q.base_point, e);
        for (int i = 0; i < n; ++i) H(i, j) = col.values[static_cast<std::size_t>(i)];
    }
    const auto& w = q.base_point.space->weights();
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = w[static_cast<std::size_t>(i)];

    Eigen::MatrixXd A = d.asDiagonal() * (q.kappa * Eigen::MatrixXd::Identity(n, n) + H);
    A = 0.5 * (A + A.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw IndefinitenessError("brute_force_qp: quadratic form is not positive definite");

    DenseBoxQp qp;
    qp.A = A;
    qp.b = d.asDiagonal() * to_eigen(q.linear_term);
    qp.lower.resize(n);
    qp.upper.resize(n);
    for (int i = 0; i < n; ++i) {
        qp.lower[i] = q.bounds.lower_finite() ? q.bounds.lower() - q.base_point.values[static_cast<std::size_t>(i)] : -kInf;
        qp.upper[i] = q.bounds.upper_finite() ? q.bounds.upper() - q.base_point.values[static_cast<std::size_t>(i)] : kInf;
    }
    qp.fixed = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) qp.points.push_back(i);

    Eigen::VectorXd best;
    double best_obj;
    if (!qp.solve(best, best_obj))
        throw IndefinitenessError("brute_force_qp: no feasible stationary pattern");
    return from_eigen(q.base_point.space, best);
}

LipschitzReport lipschitz_stability_check(const SyntheticProblem& s, double kappa,
                                          const GridFunction& b0, const GridFunction& b1,
                                          const BoxBounds& bounds,
                                          const std::vector<bool>& free_mask) {
    const int n = static_cast<int>(s.space->point_count());
    if (static_cast<int>(free_mask.size()) != n ||
        static_cast<int>(b0.size()) != n || static_cast<int>(b1.size()) != n)
        throw std::invalid_argument("lipschitz_stability_check: size mismatch");

    const auto& w = s.space->weights();
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = w[static_cast<std::size_t>(i)];
    Eigen::MatrixXd A = kappa * Eigen::MatrixXd(d.asDiagonal()) + s.S;
    A = 0.5 * (A + A.transpose()).eval();

    std::vector<int> mask_idx;
    for (int i = 0; i < n; ++i)
        if (free_mask[static_cast<std::size_t>(i)]) mask_idx.push_back(i);
    const int m = static_cast<int>(mask_idx.size());
    if (m == 0) throw std::invalid_argument("lipschitz_stability_check: empty mask");

    Eigen::MatrixXd Amm(m, m), Dmm = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r < m; ++r) {
        Dmm(r, r) = d[mask_idx[static_cast<std::size_t>(r)]];
        for (int c = 0; c < m; ++c)
            Amm(r, c) = A(mask_idx[static_cast<std::size_t>(r)], mask_idx[static_cast<std::size_t>(c)]);
    }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Amm, Dmm);
    const double lambda = ges.eigenvalues().minCoeff();
    if (lambda < s.coercivity(kappa) * (1.0 - 1e-10) - 1e-14)
        throw std::invalid_argument(
            "lipschitz_stability_check: masked subspace is less coercive than claimed");
    if (!(lambda > 0.0))
        throw std::invalid_argument("lipschitz_stability_check: form not coercive on the mask");

    auto solve_masked = [&](const GridFunction& b) {
        DenseBoxQp qp;
        qp.A = A;
        qp.b = d.asDiagonal() * to_eigen(b);
        qp.lower = Eigen::VectorXd::Constant(n, bounds.lower());
        qp.upper = Eigen::VectorXd::Constant(n, bounds.upper());
        qp.fixed = Eigen::VectorXd::Zero(n);
        qp.points = mask_idx;
        Eigen::VectorXd x;
        double obj;
        if (!qp.solve(x, obj))
            throw IndefinitenessError("lipschitz_stability_check: masked QP has no solution");
        return x;
    };
    const Eigen::VectorXd w0 = solve_masked(b0);
    const Eigen::VectorXd w1 = solve_masked(b1);

    LipschitzReport rep;
    rep.lambda = lambda;
    const Eigen::VectorXd dw = w1 - w0;
    const Eigen::VectorXd db = to_eigen(b1) - to_eigen(b0);
    rep.lhs = std::sqrt(dw.dot(d.asDiagonal() * dw));
    rep.rhs = std::sqrt(db.dot(d.asDiagonal() * db)) / lambda;
    rep.pass = rep.lhs <= rep.rhs * (1.0 + 1e-8);
    return rep;
}

} // namespace sqpbox
