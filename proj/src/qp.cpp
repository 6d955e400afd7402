#include "sqpbox/qp.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sqpbox/errors.hpp"

namespace sqpbox {

QpInstance make_qp_instance(ProblemOracle& oracle, const GridFunction& base_point,
                            double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("QpInstance: kappa must be positive");
    QpInstance q;
    q.oracle = &oracle;
    q.base_point = base_point;
    q.kappa = kappa;
    q.bounds = oracle.bounds();
    q.linear_term = gradient(oracle, kappa, base_point);
    return q;
}

double qp_objective(const QpInstance& q, const GridFunction& v) {
    const GridFunction hv = q.oracle->apply_phi_prime(q.base_point, v);
    return 0.5 * (q.kappa * weighted_inner(v, v) + weighted_inner(hv, v)) +
           weighted_inner(q.linear_term, v);
}

namespace {

// Point classification codes used by the active-set loop.
enum : std::int8_t { kFree = 0, kLower = 1, kUpper = 2 };

struct Workspace {
    const QpInstance& q;
    std::size_t n;
    const double* mu;           // measure weights
    std::vector<double> phi_n;  // linear_term - kappa*u_n

    explicit Workspace(const QpInstance& q_)
        : q(q_), n(q_.base_point.size()), mu(q_.base_point.space->weights().data()) {
        phi_n.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            phi_n[i] = q.linear_term.values[i] - q.kappa * q.base_point.values[i];
    }

    GridFunction apply_h(const GridFunction& v) const {
        return q.oracle->apply_phi_prime(q.base_point, v);
    }

    // Fixed-point target s = -(Hv + Phi(u_n))/kappa.
    void target(const GridFunction& hv, std::vector<double>& s) const {
        s.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            s[i] = -(hv.values[i] + phi_n[i]) / q.kappa;
    }

    // |u_n + v - P(s)|_inf.
    double residual(const GridFunction& v, const std::vector<double>& s) const {
        const double lo = q.bounds.lower(), hi = q.bounds.upper();
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double proj = std::min(std::max(s[i], lo), hi);
            r = std::max(r, std::abs(q.base_point.values[i] + v.values[i] - proj));
        }
        return r;
    }

    // Largest eigenvalue estimate of kappa*I + H in the mu inner product,
    // by power iteration from a fixed seed.
    double curvature_bound() const {
        std::mt19937_64 rng(0x5eed5eedULL);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        GridFunction x(q.base_point.space, std::vector<double>(n));
        for (auto& xi : x.values) xi = dist(rng);
        double lambda = q.kappa;
        for (int it = 0; it < 30; ++it) {
            GridFunction gx = apply_h(x);
            kern::axpy(q.kappa, x.data(), gx.data(), n);
            const double nrm = std::sqrt(std::abs(weighted_inner(gx, gx)));
            if (nrm == 0.0) break;
            lambda = nrm / std::sqrt(weighted_inner(x, x));
            for (std::size_t i = 0; i < n; ++i) x.values[i] = gx.values[i] / nrm;
        }
        return std::max(lambda, q.kappa) * 1.1;
    }

    // One projected-gradient sweep on v with fixed step 1/curvature.
    void pg_step(GridFunction& v, double step) const {
        const GridFunction hv = apply_h(v);
        const double lo = q.bounds.lower(), hi = q.bounds.upper();
        for (std::size_t i = 0; i < n; ++i) {
            const double grad = q.kappa * v.values[i] + hv.values[i] + q.linear_term.values[i];
            const double u = q.base_point.values[i] + v.values[i] - step * grad;
            v.values[i] = std::min(std::max(u, lo), hi) - q.base_point.values[i];
        }
    }
};

// CG on the free subspace: solve (kappa*I + H)|_FF x = rhs with vectors kept
// full-size and zeroed on active points, all inner products mu-weighted.
// Throws IndefinitenessError on negative curvature.
void cg_free(const Workspace& ws, const std::vector<std::int8_t>& code,
             const GridFunction& rhs, GridFunction& x, double rel_tol,
             int max_iters) {
    const std::size_t n = ws.n;
    auto zero_active = [&](GridFunction& g) {
        for (std::size_t i = 0; i < n; ++i)
            if (code[i] != kFree) g.values[i] = 0.0;
    };
    auto apply = [&](const GridFunction& p) {
        GridFunction tp = ws.apply_h(p);
        kern::axpy(ws.q.kappa, p.data(), tp.data(), n);
        zero_active(tp);
        return tp;
    };

    zero_active(x);
    const double rhs_nrm = std::sqrt(weighted_inner(rhs, rhs));
    if (rhs_nrm == 0.0) {
        for (auto& xi : x.values) xi = 0.0;
        return;
    }
    GridFunction r = rhs;
    {
        GridFunction tx = apply(x);
        kern::axpy(-1.0, tx.data(), r.data(), n);
    }
    GridFunction p = r;
    double rr = weighted_inner(r, r);
    const double stop = rel_tol * rhs_nrm;
    for (int it = 0; it < max_iters && std::sqrt(rr) > stop; ++it) {
        GridFunction tp = apply(p);
        const double ptp = weighted_inner(p, tp);
        if (!(ptp > 0.0))
            throw IndefinitenessError(
                "cg: nonpositive curvature on the free subspace (second-order "
                "condition violated at this iterate)");
        const double alpha = rr / ptp;
        kern::axpy(alpha, p.data(), x.data(), n);
        kern::axpy(-alpha, tp.data(), r.data(), n);
        const double rr_new = weighted_inner(r, r);
        kern::axpby(1.0, r.data(), rr_new / rr, p.data(), p.data(), n);
        rr = rr_new;
    }
}

std::uint64_t pattern_hash(const std::vector<std::int8_t>& code) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int8_t c : code) {
        h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

QpResult solve_ssn(const QpInstance& q, const GridFunction& v_init, double tol,
                   int max_iters, double cg_tol, int cg_max_iters) {
    if (!(q.kappa > 0.0)) throw std::invalid_argument("solve_ssn: kappa must be positive");
    Workspace ws(q);
    const std::size_t n = ws.n;
    const double lo = q.bounds.lower(), hi = q.bounds.upper();

    // Start from the projected warm start.
    GridFunction v = v_init;
    require_same_space(v, q.base_point);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = q.base_point.values[i] + v.values[i];
        v.values[i] = std::min(std::max(u, lo), hi) - q.base_point.values[i];
    }

    std::vector<std::int8_t> code(n, kFree);
    std::vector<double> s;
    std::unordered_map<std::uint64_t, double> seen;
    double pg_curvature = 0.0;
    double res = kInf;

    for (int iter = 1; iter <= max_iters; ++iter) {
        const GridFunction hv = ws.apply_h(v);
        ws.target(hv, s);
        res = ws.residual(v, s);
        if (res <= tol) {
            QpResult out;
            out.step = v;
            out.ssn_iterations = iter - 1;
            GridFunction uplus = linear_combination(1.0, q.base_point, 1.0, v);
            out.final_active_sets = classify_active(uplus, q.bounds, 0.0);
            out.fixed_point_residual = res;
            return out;
        }

        // Classify from the fixed-point target; exact bound hits go lower.
        for (std::size_t i = 0; i < n; ++i) {
            if (q.bounds.lower_finite() && s[i] <= lo) code[i] = kLower;
            else if (q.bounds.upper_finite() && s[i] >= hi) code[i] = kUpper;
            else code[i] = kFree;
        }

        // Cycling guard: a repeated pattern without residual progress breaks
        // the active-set loop; take a few projected-gradient sweeps instead.
        const std::uint64_t key = pattern_hash(code);
        auto it = seen.find(key);
        if (it != seen.end() && res >= it->second * (1.0 - 1e-12)) {
            if (pg_curvature == 0.0) pg_curvature = ws.curvature_bound();
            for (int k = 0; k < 5; ++k) ws.pg_step(v, 1.0 / pg_curvature);
            seen.clear();
            continue;
        }
        if (it == seen.end() || res < it->second) seen[key] = res;

        // Pin active points, solve the reduced system on the free ones.
        std::size_t free_count = 0;
        GridFunction candidate(q.base_point.space, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (code[i] == kLower) candidate.values[i] = lo - q.base_point.values[i];
            else if (code[i] == kUpper) candidate.values[i] = hi - q.base_point.values[i];
            else ++free_count;
        }
        if (free_count > 0) {
            const GridFunction h_act = ws.apply_h(candidate);
            GridFunction rhs(q.base_point.space, std::vector<double>(n));
            GridFunction v_free(q.base_point.space, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                rhs.values[i] = (code[i] == kFree)
                                    ? -(q.linear_term.values[i] + h_act.values[i])
                                    : 0.0;
                v_free.values[i] = (code[i] == kFree) ? v.values[i] : 0.0;
            }
            const int cg_cap = cg_max_iters > 0 ? cg_max_iters
                                                : static_cast<int>(10 * free_count);
            cg_free(ws, code, rhs, v_free, cg_tol, cg_cap);
            for (std::size_t i = 0; i < n; ++i)
                if (code[i] == kFree) candidate.values[i] = v_free.values[i];
        }

        // Exact line search on the quadratic model along the active-set step.
        // Full steps are kept whenever they do not increase the model, which
        // preserves the plain Newton behaviour; damping only engages when the
        // full step overshoots (kappa small against the curvature operator).
        const GridFunction d = linear_combination(1.0, candidate, -1.0, v);
        const double d_norm = kern::max_abs(d.data(), n);
        if (d_norm == 0.0) continue;
        const GridFunction hd = ws.apply_h(d);
        double g_d = 0.0;
        const auto* mu = ws.mu;
        for (std::size_t i = 0; i < n; ++i)
            g_d += mu[i] * (q.kappa * v.values[i] + hv.values[i] + q.linear_term.values[i]) * d.values[i];
        const double h_d = q.kappa * weighted_inner(d, d) + weighted_inner(hd, d);

        double theta = 1.0;
        if (g_d + 0.5 * h_d > 0.0) {
            if (g_d < 0.0 && h_d > 0.0) {
                theta = -g_d / h_d;
            } else {
                // Not a descent direction; take a projected-gradient sweep.
                if (pg_curvature == 0.0) pg_curvature = ws.curvature_bound();
                ws.pg_step(v, 1.0 / pg_curvature);
                continue;
            }
        }
        kern::axpy(theta, d.data(), v.data(), n);
    }
    throw NonConvergenceError(
        "solve_ssn: no convergence in " + std::to_string(max_iters) +
            " iterations (last residual " + std::to_string(res) + ")",
        res, max_iters);
}

GridFunction solve_projected_gradient(const QpInstance& q, double tol,
                                      int max_iters) {
    Workspace ws(q);
    const std::size_t n = ws.n;
    const double lo = q.bounds.lower(), hi = q.bounds.upper();
    const double step = 1.0 / ws.curvature_bound();

    GridFunction v(q.base_point.space, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = q.base_point.values[i];
        v.values[i] = std::min(std::max(u, lo), hi) - u;
    }

    std::vector<double> s;
    double res = kInf;
    for (int iter = 0; iter < max_iters; ++iter) {
        const GridFunction hv = ws.apply_h(v);
        ws.target(hv, s);
        res = ws.residual(v, s);
        if (res <= tol) return v;
        for (std::size_t i = 0; i < n; ++i) {
            const double grad = q.kappa * v.values[i] + hv.values[i] + q.linear_term.values[i];
            const double u = q.base_point.values[i] + v.values[i] - step * grad;
            v.values[i] = std::min(std::max(u, lo), hi) - q.base_point.values[i];
        }
    }
    throw NonConvergenceError(
        "solve_projected_gradient: no convergence in " +
            std::to_string(max_iters) + " iterations (last residual " +
            std::to_string(res) + ")",
        res, max_iters);
}

} // namespace sqpbox
