#include "sqpbox/sqp.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "sqpbox/errors.hpp"

namespace sqpbox {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Converged when the L^inf step (absolute or relative with a saturated
// denominator) is below tol, or the objective has stopped moving entirely.
bool stop_rule(double step_inf, double u_inf, double tol, double j_now, double j_prev) {
    const double crit = std::max(step_inf, step_inf / std::max(1.0, u_inf));
    return crit < tol || j_now == j_prev;
}

} // namespace

const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::converged: return "converged";
        case RunStatus::max_iters: return "max_iters";
        case RunStatus::subproblem_failure: return "subproblem_failure";
        case RunStatus::diverged: return "diverged";
    }
    return "unknown";
}

double stepsize(const GridFunction& previous_step, const GridFunction& current_control) {
    require_same_space(previous_step, current_control);
    return weighted_norm(previous_step, kInf) /
           std::max(1.0, weighted_norm(current_control, kInf));
}

SqpRun run_sqpnln(ProblemOracle& oracle, const GridFunction& u0, const SqpConfig& cfg) {
    cfg.validate();
    SqpRun run;
    GridFunction u = project_box(u0, oracle.bounds());
    const FullObjective full{&oracle, cfg.kappa};

    GridFunction v_prev(u.space, 0.0);
    double j_prev = std::numeric_limits<double>::quiet_NaN();
    int prev_qp_iters = 0;
    double prev_qp_seconds = 0.0;

    for (int n = 0; n <= cfg.max_outer_iters; ++n) {
        const auto t_eval = Clock::now();
        double j_now;
        try {
            j_now = full.value(u);
        } catch (const StateSolveError& e) {
            run.status = RunStatus::subproblem_failure;
            run.message = "state solve failed at iterate " + std::to_string(n) + ": " + e.what();
            break;
        }

        IterationRecord rec;
        rec.n = n;
        rec.objective = j_now;
        rec.stepsize = n == 0 ? 0.0 : stepsize(v_prev, u);
        const ActiveSetPartition part = classify_active(u, oracle.bounds(), 0.0);
        rec.count_free = part.count_free();
        rec.count_lower = part.count_lower();
        rec.count_upper = part.count_upper();
        rec.qp_iterations = prev_qp_iters;
        rec.wall_time_seconds = prev_qp_seconds + seconds_since(t_eval);
        run.records.push_back(rec);
        run.iterates.push_back(u);

        if (n >= 1 && stop_rule(weighted_norm(v_prev, kInf), weighted_norm(u, kInf),
                                cfg.stop_tol, j_now, j_prev)) {
            run.status = RunStatus::converged;
            break;
        }
        if (n == cfg.max_outer_iters) {
            run.status = RunStatus::max_iters;
            break;
        }
        j_prev = j_now;

        const auto t_qp = Clock::now();
        try {
            const QpInstance inst = make_qp_instance(oracle, u, cfg.kappa);
            const double qp_tol = cfg.qp_tol * std::max(1.0, weighted_norm(u, kInf));
            const QpResult res = solve_ssn(inst, v_prev, qp_tol, cfg.qp_max_iters,
                                           cfg.cg_tol, cfg.cg_max_iters);
            v_prev = res.step;
            prev_qp_iters = res.ssn_iterations;
        } catch (const SolverError& e) {
            run.status = RunStatus::subproblem_failure;
            run.message = "subproblem failed at iterate " + std::to_string(n) + ": " + e.what();
            break;
        }
        prev_qp_seconds = seconds_since(t_qp);
        add_scaled(u, 1.0, v_prev);
    }

    run.final_control = u;
    if (run.iterates.empty()) run.iterates.push_back(u);
    return run;
}

namespace {

// Presents a frozen Lagrange-Newton subproblem as a ProblemOracle so the
// same QP machinery applies. Only phi(base) and apply_phi_prime(base, v) are
// meaningful.
class LqAdapter final : public ProblemOracle {
public:
    LqAdapter(LagrangeNewtonOracle& ln, GridFunction phi_tilde)
        : ln_(&ln), phi_tilde_(std::move(phi_tilde)) {}

    const MeasureSpacePtr& control_space() const override { return ln_->control_space(); }
    const BoxBounds& bounds() const override { return ln_->bounds(); }
    double objective(const GridFunction&) override {
        throw std::logic_error("LqAdapter: objective not defined for the frozen subproblem");
    }
    GridFunction phi(const GridFunction&) override { return phi_tilde_; }
    GridFunction apply_phi_prime(const GridFunction&, const GridFunction& v) override {
        return ln_->apply_hessian(v);
    }

private:
    LagrangeNewtonOracle* ln_;
    GridFunction phi_tilde_;
};

} // namespace

SqpRun run_sqplin(LagrangeNewtonOracle& oracle, const GridFunction& u0,
                  const Eigen::VectorXd& y0, const Eigen::VectorXd& phi0,
                  const SqpConfig& cfg) {
    cfg.validate();
    SqpRun run;
    GridFunction u = project_box(u0, oracle.bounds());
    Eigen::VectorXd y = y0, phi = phi0;

    GridFunction v_prev(u.space, 0.0);
    double j_prev = std::numeric_limits<double>::quiet_NaN();
    int prev_qp_iters = 0;
    double prev_qp_seconds = 0.0;
    double last_step_norm = kInf;
    int growth_streak = 0;

    for (int n = 0; n <= cfg.max_outer_iters; ++n) {
        // J(u_n) is bookkeeping for the convergence table; the iteration
        // itself performs only linear solves.
        double j_now;
        try {
            j_now = oracle.true_objective(u) + 0.5 * cfg.kappa * weighted_inner(u, u);
        } catch (const SolverError& e) {
            run.status = RunStatus::subproblem_failure;
            run.message = "objective evaluation failed at iterate " + std::to_string(n) +
                          ": " + e.what();
            break;
        }

        IterationRecord rec;
        rec.n = n;
        rec.objective = j_now;
        rec.stepsize = n == 0 ? 0.0 : stepsize(v_prev, u);
        const ActiveSetPartition part = classify_active(u, oracle.bounds(), 0.0);
        rec.count_free = part.count_free();
        rec.count_lower = part.count_lower();
        rec.count_upper = part.count_upper();
        rec.qp_iterations = prev_qp_iters;
        rec.wall_time_seconds = prev_qp_seconds;
        run.records.push_back(rec);
        run.iterates.push_back(u);

        const double step_norm = weighted_norm(v_prev, kInf);
        if (!std::isfinite(step_norm) || !std::isfinite(j_now)) {
            run.status = RunStatus::diverged;
            run.message = "iterates stopped being finite at iterate " + std::to_string(n);
            break;
        }
        if (n >= 1 && stop_rule(step_norm, weighted_norm(u, kInf), cfg.stop_tol, j_now, j_prev)) {
            run.status = RunStatus::converged;
            break;
        }
        if (n >= 2) {
            growth_streak = step_norm > last_step_norm ? growth_streak + 1 : 0;
            if (growth_streak >= 5) {
                run.status = RunStatus::diverged;
                run.message = "step norm grew over 5 consecutive iterations";
                break;
            }
        }
        if (n >= 1) last_step_norm = step_norm;
        if (n == cfg.max_outer_iters) {
            run.status = RunStatus::max_iters;
            break;
        }
        j_prev = j_now;

        const auto t_qp = Clock::now();
        try {
            oracle.set_point(u, y, phi);
            const GridFunction phi_tilde = oracle.phi_tilde();
            LqAdapter adapter(oracle, phi_tilde);

            QpInstance inst;
            inst.oracle = &adapter;
            inst.base_point = u;
            inst.kappa = cfg.kappa;
            inst.bounds = oracle.bounds();
            inst.linear_term = phi_tilde;
            add_scaled(inst.linear_term, cfg.kappa, u);

            const double qp_tol = cfg.qp_tol * std::max(1.0, weighted_norm(u, kInf));
            const QpResult res = solve_ssn(inst, v_prev, qp_tol, cfg.qp_max_iters,
                                           cfg.cg_tol, cfg.cg_max_iters);
            v_prev = res.step;
            prev_qp_iters = res.ssn_iterations;
            oracle.recover(v_prev, y, phi);
        } catch (const SolverError& e) {
            run.status = RunStatus::subproblem_failure;
            run.message = "subproblem failed at iterate " + std::to_string(n) + ": " + e.what();
            break;
        }
        prev_qp_seconds = seconds_since(t_qp);
        add_scaled(u, 1.0, v_prev);
    }

    run.final_control = u;
    if (run.iterates.empty()) run.iterates.push_back(u);
    return run;
}

std::pair<double, double> estimate_rate(const std::vector<double>& error_sequence) {
    const std::size_t m = error_sequence.size();
    if (m < 3)
        throw std::invalid_argument("estimate_rate: need at least 3 entries");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(error_sequence[i] > 0.0))
            throw std::invalid_argument("estimate_rate: entries must be positive");
        if (i > 0 && !(error_sequence[i] < error_sequence[i - 1]))
            throw std::invalid_argument("estimate_rate: sequence tail is not strictly decreasing");
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double pairs = static_cast<double>(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double x = std::log(error_sequence[i]);
        const double y = std::log(error_sequence[i + 1]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = pairs * sxx - sx * sx;
    if (!(std::abs(denom) > 1e-30))
        throw std::invalid_argument("estimate_rate: degenerate fit");
    const double r = (pairs * sxy - sx * sy) / denom;
    const double log_c = (sy - r * sx) / pairs;
    return {r, std::exp(log_c)};
}

std::vector<double> convergence_errors(const SqpRun& run) {
    std::vector<double> errors;
    if (run.iterates.size() < 2) return errors;
    const GridFunction& ref = run.iterates.back();
    for (std::size_t i = 0; i + 1 < run.iterates.size(); ++i) {
        const GridFunction diff = linear_combination(1.0, run.iterates[i], -1.0, ref);
        errors.push_back(weighted_norm(diff, kInf));
    }
    return errors;
}

std::optional<std::pair<double, double>> fitted_rate(const SqpRun& run, double stop_tol) {
    std::vector<double> errors = convergence_errors(run);
    // Trim the round-off-dominated tail (the final iterate is the reference,
    // so the last entries carry no rate information).
    const double floor = 1e3 * stop_tol;
    int dropped = 0;
    while (!errors.empty() && dropped < 2 && errors.back() <= floor) {
        errors.pop_back();
        ++dropped;
    }
    // The asymptotic tail: the last three informative entries. Earlier
    // iterations are globalization, not rate data.
    if (errors.size() > 3) errors.erase(errors.begin(), errors.end() - 3);
    if (errors.size() < 3) return std::nullopt;
    try {
        return estimate_rate(errors);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

TauBandReport tau_band_report(ProblemOracle& oracle, double kappa,
                              const GridFunction& u, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("tau_band_report: tau must be positive");
    const GridFunction grad = gradient(oracle, kappa, u);
    const BoxBounds& b = oracle.bounds();
    TauBandReport rep;
    rep.tau = tau;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double g = grad.values[i];
        if (g > tau) ++rep.count_tau_plus;
        else if (g < -tau) ++rep.count_tau_minus;
        const bool at_bound = (b.lower_finite() && u.values[i] <= b.lower()) ||
                              (b.upper_finite() && u.values[i] >= b.upper());
        if (at_bound && std::abs(g) <= tau) ++rep.count_biactive;
    }
    return rep;
}

double default_tau(ProblemOracle& oracle, double kappa, const GridFunction& u) {
    const GridFunction grad = gradient(oracle, kappa, u);
    return 1e-6 * weighted_norm(grad, kInf);
}

} // namespace sqpbox
