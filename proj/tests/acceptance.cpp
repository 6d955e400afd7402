// Acceptance suite: one pass/fail line per criterion, nonzero exit count on
// failure. Each criterion pins its tolerances in code; detailed measurements
// are printed so failures are self-explanatory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqpbox/elliptic.hpp"
#include "sqpbox/errors.hpp"
#include "sqpbox/parabolic.hpp"
#include "sqpbox/sqp.hpp"
#include "sqpbox/synthetic.hpp"

using namespace sqpbox;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
};

int failures = 0;

void report(int index, const std::string& name, const Outcome& o, double seconds) {
    std::printf("[%s] criterion %d: %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", index,
                name.c_str(), seconds, o.detail.str().empty() ? "" : " --");
    const std::string d = o.detail.str();
    if (!d.empty()) {
        std::istringstream lines(d);
        std::string line;
        while (std::getline(lines, line)) std::printf("    %s\n", line.c_str());
    }
    if (!o.pass) ++failures;
}

template <class Fn>
void criterion(int index, const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        fn(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << "exception: " << e.what() << "\n";
    }
    report(index, name, o,
           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// --- shared helpers ---------------------------------------------------------

GridFunction elliptic_direction(const EllipticEngine& eng, double scale, double phase = 0.0) {
    const SimplexMesh& mesh = eng.mesh();
    std::vector<double> v(eng.omega().size());
    for (std::size_t t = 0; t < v.size(); ++t) {
        const int c = eng.omega()[t];
        double cx[3] = {0.0, 0.0, 0.0};
        for (int k = 0; k < mesh.verts_per_cell(); ++k)
            for (int r = 0; r < mesh.dimension(); ++r)
                cx[r] += mesh.node(mesh.cell_vertex(c, k))[r] / mesh.verts_per_cell();
        double s = 1.0 + std::sin(2.0 * M_PI * cx[0] + phase);
        if (mesh.dimension() >= 2) s *= 1.0 + 0.5 * std::cos(M_PI * cx[1] + phase);
        v[t] = scale * s;
    }
    return {eng.control_space(), std::move(v)};
}

GridFunction parabolic_direction(const ParabolicEngine& eng, double scale, double phase = 0.0) {
    const SimplexMesh& mesh = eng.mesh();
    const auto& nodes = mesh.boundary_nodes();
    const int nb = eng.boundary_count();
    std::vector<double> v(static_cast<std::size_t>(nb) * eng.steps());
    for (int k = 1; k <= eng.steps(); ++k) {
        const double t = k * eng.tau();
        for (int b = 0; b < nb; ++b) {
            const double* x = mesh.node(nodes[static_cast<std::size_t>(b)]);
            double s = 1.0 + std::sin(2.0 * M_PI * x[0] + phase);
            if (mesh.dimension() >= 2) s *= 1.0 + 0.5 * std::cos(M_PI * x[1] + phase);
            s *= 1.0 + 0.3 * std::cos(M_PI * t / eng.horizon());
            v[ParabolicEngine::lattice_index(nb, k, b)] = scale * s;
        }
    }
    return {eng.control_space(), std::move(v)};
}

GridFunction random_function(const MeasureSpacePtr& s, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<double> v(s->point_count());
    for (auto& x : v) x = dist(rng);
    return {s, std::move(v)};
}

// Second-order decay with a noise-floor model: central differences carry a
// cancellation floor eps_ref/(2h); pairs with both errors at least 10x above
// it must show ratios in [50, 200], and at least one pair must qualify.
void check_fd_decay(Outcome& o, const char* label,
                    const std::vector<std::pair<double, double>>& errors, double eps_ref) {
    int qualifying = 0;
    o.detail << label << ": errors";
    for (auto [h, e] : errors) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.2e", e);
        o.detail << buf;
    }
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
        const auto [h0, e0] = errors[i];
        const auto [h1, e1] = errors[i + 1];
        const double floor0 = eps_ref / (2.0 * h0);
        const double floor1 = eps_ref / (2.0 * h1);
        if (e0 < 10.0 * floor0 || e1 < 10.0 * floor1) continue;
        ++qualifying;
        const double ratio = e0 / e1;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  ratio %.1f", ratio);
        o.detail << buf;
        if (!(ratio >= 50.0 && ratio <= 200.0)) {
            o.pass = false;
            o.detail << " OUT OF [50,200]";
        }
    }
    if (qualifying == 0) {
        o.pass = false;
        o.detail << "  NO PAIR ABOVE THE NOISE FLOOR";
    }
    o.detail << "\n";
}

// Quadratic collapse of the stepsizes: among the recorded deltas above the
// stopping tolerance (smaller ones are converged noise by definition), the
// last three must satisfy delta_{n+1} <= 1e6 * delta_n^2.
void check_delta_tail(Outcome& o, const SqpRun& run, double stop_tol) {
    std::vector<double> deltas;
    for (const auto& r : run.records)
        if (r.n >= 1 && r.stepsize > stop_tol) deltas.push_back(r.stepsize);
    if (deltas.size() > 3) deltas.erase(deltas.begin(), deltas.end() - 3);
    if (deltas.size() < 2) {
        o.pass = false;
        o.detail << "delta tail: fewer than two informative steps\n";
        return;
    }
    o.detail << "delta tail:";
    for (double d : deltas) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.1e", d);
        o.detail << buf;
    }
    for (std::size_t i = 0; i + 1 < deltas.size(); ++i) {
        if (!(deltas[i + 1] <= 1e6 * deltas[i] * deltas[i])) {
            o.pass = false;
            o.detail << "  VIOLATES delta_{n+1} <= 1e6 delta_n^2";
        }
    }
    o.detail << "\n";
}

double rel_linf_diff(const GridFunction& a, const GridFunction& b) {
    const GridFunction diff = linear_combination(1.0, a, -1.0, b);
    return weighted_norm(diff, kInf) / std::max(1e-300, weighted_norm(a, kInf));
}

} // namespace

int main() {
    std::printf("acceptance suite\n");

    // Shared runs, reused by criteria 5-8.
    SqpConfig elliptic_cfg;
    elliptic_cfg.kappa = 0.1;
    EllipticProblem elliptic3(SimplexMesh::unit_cube(3, 3), example_elliptic_data(3),
                              BoxBounds(0.1, 1.0));
    std::optional<SqpRun> elliptic_run;

    SqpConfig parabolic_cfg;
    parabolic_cfg.kappa = 0.3;
    ParabolicProblem parabolic3(SimplexMesh::unit_cube(3, 3), example_parabolic_data(3),
                                BoxBounds(0.1, 100.0, 8.0), 4.0, 3);
    std::optional<SqpRun> parabolic_run;

    criterion(1, "derivative consistency (fd order 2)", [&](Outcome& o) {
        const std::vector<double> steps = {1e-2, 1e-3, 1e-4};
        {
            EllipticProblem p2(SimplexMesh::unit_cube(2, 3), example_elliptic_data(2),
                               BoxBounds(0.1, 1.0));
            GridFunction u(p2.control_space(), 0.55);
            const GridFunction v = elliptic_direction(p2.engine(), 60.0);
            const GridFunction w = elliptic_direction(p2.engine(), 80.0, 1.3);
            const double ref_g = 1e-14 * std::max(1.0, std::abs(p2.objective(u)));
            check_fd_decay(o, "elliptic d2 grad", fd_gradient_check(p2, u, v, steps), ref_g);
            const double ref_h =
                1e-14 * std::max(1.0, std::abs(weighted_inner(p2.phi(u), v)));
            check_fd_decay(o, "elliptic d2 hess", fd_hessian_check(p2, u, v, w, steps), ref_h);
        }
        {
            GridFunction u(elliptic3.control_space(), 0.55);
            const GridFunction v = elliptic_direction(elliptic3.engine(), 60.0);
            const GridFunction w = elliptic_direction(elliptic3.engine(), 80.0, 1.3);
            const double ref_g = 1e-14 * std::max(1.0, std::abs(elliptic3.objective(u)));
            check_fd_decay(o, "elliptic d3 grad", fd_gradient_check(elliptic3, u, v, steps), ref_g);
            const double ref_h =
                1e-14 * std::max(1.0, std::abs(weighted_inner(elliptic3.phi(u), v)));
            check_fd_decay(o, "elliptic d3 hess", fd_hessian_check(elliptic3, u, v, w, steps),
                           ref_h);
        }
        {
            GridFunction u(parabolic3.control_space(), 50.05);
            const GridFunction v = parabolic_direction(parabolic3.engine(), 30.0);
            const GridFunction w = parabolic_direction(parabolic3.engine(), 20.0, 1.1);
            const double ref_g = 1e-14 * std::max(1.0, std::abs(parabolic3.objective(u)));
            check_fd_decay(o, "parabolic d3 grad", fd_gradient_check(parabolic3, u, v, steps),
                           ref_g);
            const double ref_h =
                1e-14 * std::max(1.0, std::abs(weighted_inner(parabolic3.phi(u), v)));
            check_fd_decay(o, "parabolic d3 hess", fd_hessian_check(parabolic3, u, v, w, steps),
                           ref_h);
        }
    });

    criterion(2, "hessian symmetry (<= 1e-9 |v||w|)", [&](Outcome& o) {
        std::mt19937_64 rng(2024);
        auto run_pairs = [&](ProblemOracle& prob, const GridFunction& u, const char* label) {
            double worst = 0.0;
            for (int trial = 0; trial < 20; ++trial) {
                const GridFunction v = random_function(prob.control_space(), rng);
                const GridFunction w = random_function(prob.control_space(), rng);
                const double scale = weighted_norm(v, 2.0) * weighted_norm(w, 2.0);
                const double defect = symmetry_defect(prob, u, v, w) / scale;
                worst = std::max(worst, defect);
            }
            o.detail << label << ": worst normalized defect " << worst << "\n";
            if (!(worst <= 1e-9)) o.pass = false;
        };
        run_pairs(elliptic3, GridFunction(elliptic3.control_space(), 0.55), "elliptic d3");
        run_pairs(parabolic3, GridFunction(parabolic3.control_space(), 50.05), "parabolic d3");
    });

    criterion(3, "qp oracle equivalence (100 seeds, 1e-10)", [&](Outcome& o) {
        std::mt19937_64 rng(1234);
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            SyntheticProblem p = make_synthetic(seed, 8, {0.02, 1.2}, 0.0);
            SyntheticOracle oracle(std::move(p), BoxBounds(-0.6, 0.5));
            GridFunction base = project_box(random_function(oracle.control_space(), rng, 0.5),
                                            oracle.bounds());
            const QpInstance q = make_qp_instance(oracle, base, 0.7);
            const GridFunction exact = brute_force_qp(q);
            const QpResult res =
                solve_ssn(q, GridFunction(oracle.control_space(), 0.0), 1e-12, 100);
            const GridFunction diff = linear_combination(1.0, res.step, -1.0, exact);
            worst = std::max(worst, weighted_norm(diff, kInf));
        }
        o.detail << "worst Linf deviation " << worst << "\n";
        if (!(worst <= 1e-10)) o.pass = false;
    });

    criterion(4, "Lipschitz stability (200 draws + tight case)", [&](Outcome& o) {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        int passed = 0;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            SyntheticProblem p = make_synthetic(seed, 8, {-0.05, 1.0}, 0.0);
            std::vector<bool> mask(8, false);
            int m = 0;
            while (m == 0) {
                m = 0;
                for (std::size_t i = 0; i < 8; ++i) {
                    mask[i] = unit(rng) > 0.0;
                    if (mask[i]) ++m;
                }
            }
            const GridFunction b0 = random_function(p.space, rng);
            const GridFunction b1 = random_function(p.space, rng);
            const auto rep =
                lipschitz_stability_check(p, 0.3, b0, b1, BoxBounds(-0.9, 1.1), mask);
            if (rep.pass) ++passed;
        }
        o.detail << "random draws passing: " << passed << "/200\n";
        if (passed != 200) o.pass = false;

        SyntheticProblem flat = make_synthetic(5, 8, {0.0, 0.0}, 0.0);
        flat.S.setZero();
        flat.h_min = 0.0;
        std::vector<bool> mask(8, false);
        mask[1] = mask[3] = mask[4] = mask[6] = true;
        GridFunction b0 = random_function(flat.space, rng);
        GridFunction b1 = b0;
        for (std::size_t i = 0; i < 8; ++i)
            if (mask[i]) b1.values[i] += 0.5;
        const auto tight =
            lipschitz_stability_check(flat, 0.8, b0, b1, BoxBounds(-10.0, 10.0), mask);
        const double q = tight.lhs / tight.rhs;
        o.detail << "tight case lhs/rhs = " << q << "\n";
        if (!(q >= 1.0 - 1e-10 && q <= 1.0)) o.pass = false;
    });

    criterion(5, "quadratic convergence on the elliptic instance", [&](Outcome& o) {
        GridFunction u0(elliptic3.control_space(), 0.55);
        elliptic_run = run_sqpnln(elliptic3, u0, elliptic_cfg);
        const SqpRun& run = *elliptic_run;
        o.detail << "status " << to_string(run.status) << ", iterations "
                 << run.records.back().n << "\n";
        if (run.status != RunStatus::converged || run.records.back().n > 5) o.pass = false;

        const auto rate = fitted_rate(run, elliptic_cfg.stop_tol);
        if (rate) {
            o.detail << "fitted rate " << rate->first << "\n";
            if (!(rate->first >= 1.7)) o.pass = false;
        } else {
            o.pass = false;
            const auto errors = convergence_errors(run);
            o.detail << "rate not estimable: errors";
            for (double e : errors) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), " %.2e", e);
                o.detail << buf;
            }
            o.detail << " -- convergence collapses below the solver noise floor in one "
                        "quadratic step, leaving fewer than 3 informative iterates\n";
            if (errors.size() >= 3) {
                try {
                    const auto raw = estimate_rate(errors);
                    o.detail << "raw fit over all points: r = " << raw.first
                             << " (final point is solver noise, biasing the slope down)\n";
                } catch (const std::invalid_argument&) {
                }
            }
        }
        check_delta_tail(o, run, elliptic_cfg.stop_tol);
    });

    criterion(6, "convergence-history shape on the parabolic instance", [&](Outcome& o) {
        GridFunction u0(parabolic3.control_space(), 0.5 * (0.1 + 100.0));
        parabolic_run = run_sqpnln(parabolic3, u0, parabolic_cfg);
        const SqpRun& run = *parabolic_run;
        o.detail << "status " << to_string(run.status) << ", iterations "
                 << run.records.back().n << "\n";
        if (run.status != RunStatus::converged || run.records.back().n > 8) o.pass = false;

        // Strictly decreasing stepsizes after n = 2.
        for (std::size_t i = 2; i + 1 < run.records.size(); ++i)
            if (!(run.records[i + 1].stepsize < run.records[i].stepsize)) {
                o.pass = false;
                o.detail << "stepsize not strictly decreasing at n=" << run.records[i + 1].n
                         << "\n";
            }
        check_delta_tail(o, run, parabolic_cfg.stop_tol);

        const auto& last = run.records.back();
        const double total = static_cast<double>(parabolic3.control_space()->point_count());
        const double lower_frac = static_cast<double>(last.count_lower) / total;
        o.detail << "active counts: lower " << last.count_lower << " ("
                 << 100.0 * lower_frac << "%), upper " << last.count_upper << ", free "
                 << last.count_free << "\n";
        if (last.count_upper != 0) o.pass = false;
        if (!(lower_frac >= 0.02 && lower_frac <= 0.40)) o.pass = false;
    });

    criterion(7, "method agreement and sqplin fragility", [&](Outcome& o) {
        // Elliptic: both methods from the cold start agree to < 5e-13 rel Linf.
        if (!elliptic_run) {
            GridFunction u0(elliptic3.control_space(), 0.55);
            elliptic_run = run_sqpnln(elliptic3, u0, elliptic_cfg);
        }
        EllipticProblem holder(SimplexMesh::unit_cube(3, 3), example_elliptic_data(3),
                               BoxBounds(0.1, 1.0));
        EllipticLagrangeNewton elin(holder.engine(), holder.bounds());
        GridFunction eu0(holder.control_space(), 0.55);
        const SqpRun elin_run =
            run_sqplin(elin, eu0, elin.zero_state(), elin.zero_adjoint(), elliptic_cfg);
        const double ediff =
            rel_linf_diff(elliptic_run->final_control, elin_run.final_control);
        o.detail << "elliptic: sqpnln " << to_string(elliptic_run->status) << ", sqplin "
                 << to_string(elin_run.status) << ", rel diff " << ediff << "\n";
        if (elliptic_run->status != RunStatus::converged ||
            elin_run.status != RunStatus::converged || !(ediff < 5e-13))
            o.pass = false;

        // Parabolic, cold start: sqplin must fail to converge while sqpnln
        // converged (criterion 6's run).
        ParabolicProblem pheld(SimplexMesh::unit_cube(3, 3), example_parabolic_data(3),
                               BoxBounds(0.1, 100.0, 8.0), 4.0, 3);
        ParabolicLagrangeNewton plin(pheld.engine(), pheld.bounds());
        GridFunction pu0(pheld.control_space(), 50.05);
        const SqpRun cold =
            run_sqplin(plin, pu0, plin.zero_state(), plin.zero_adjoint(), parabolic_cfg);
        o.detail << "parabolic cold sqplin: " << to_string(cold.status);
        if (!cold.message.empty()) o.detail << " (" << cold.message << ")";
        o.detail << "\n";
        if (cold.status == RunStatus::converged) o.pass = false;
        if (!parabolic_run || parabolic_run->status != RunStatus::converged) o.pass = false;

        // Parabolic, u0 = 0.6 with consistent (y0, phi0): sqplin converges and
        // agrees with sqpnln to < 1e-10 rel Linf.
        ParabolicProblem pnln(SimplexMesh::unit_cube(3, 3), example_parabolic_data(3),
                              BoxBounds(0.1, 100.0, 8.0), 4.0, 3);
        GridFunction u06(pnln.control_space(), 0.6);
        const SqpRun run06 = run_sqpnln(pnln, u06, parabolic_cfg);
        Eigen::VectorXd y0, phi0;
        plin.consistent_point(u06, y0, phi0);
        const SqpRun lin06 = run_sqplin(plin, u06, y0, phi0, parabolic_cfg);
        const double pdiff = rel_linf_diff(run06.final_control, lin06.final_control);
        o.detail << "parabolic u0=0.6: sqpnln " << to_string(run06.status) << ", sqplin "
                 << to_string(lin06.status) << " (" << lin06.records.back().n
                 << " iterations), rel diff " << pdiff << "\n";
        if (run06.status != RunStatus::converged || lin06.status != RunStatus::converged ||
            !(pdiff < 1e-10))
            o.pass = false;
    });

    criterion(8, "kkt and strict-complementarity diagnostics", [&](Outcome& o) {
        auto check = [&](ProblemOracle& prob, double kappa, const SqpRun& run,
                         double stop_tol, const char* label) {
            if (run.status != RunStatus::converged) {
                o.pass = false;
                o.detail << label << ": run not converged\n";
                return;
            }
            const double kkt = kkt_residual(prob, kappa, run.final_control);
            const double tau = default_tau(prob, kappa, run.final_control);
            const TauBandReport rep =
                tau_band_report(prob, kappa, run.final_control, std::max(tau, 1e-300));
            o.detail << label << ": kkt " << kkt << ", tau " << rep.tau << ", biactive "
                     << rep.count_biactive << ", X+ " << rep.count_tau_plus << ", X- "
                     << rep.count_tau_minus << "\n";
            if (!(kkt <= 10.0 * stop_tol) || rep.count_biactive != 0) o.pass = false;

            // Band consistency: strongly positive gradient points sit at the
            // lower bound, strongly negative at the upper bound.
            const GridFunction grad = gradient(prob, kappa, run.final_control);
            const BoxBounds& b = prob.bounds();
            for (std::size_t i = 0; i < grad.size(); ++i) {
                if (grad.values[i] > rep.tau &&
                    run.final_control.values[i] != b.lower()) {
                    o.pass = false;
                    o.detail << label << ": X+ point off the lower bound\n";
                    break;
                }
                if (grad.values[i] < -rep.tau &&
                    run.final_control.values[i] != b.upper()) {
                    o.pass = false;
                    o.detail << label << ": X- point off the upper bound\n";
                    break;
                }
            }
        };
        if (elliptic_run) check(elliptic3, elliptic_cfg.kappa, *elliptic_run,
                                elliptic_cfg.stop_tol, "elliptic");
        if (parabolic_run) check(parabolic3, parabolic_cfg.kappa, *parabolic_run,
                                 parabolic_cfg.stop_tol, "parabolic");
        if (!elliptic_run || !parabolic_run) {
            o.pass = false;
            o.detail << "prerequisite runs missing\n";
        }
    });

    criterion(9, "manufactured-solution recovery (10 seeds, 1D, N=5)", [&](Outcome& o) {
        const double kappa = 0.1;
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            EllipticProblem prob(SimplexMesh::unit_cube(1, 5), example_elliptic_data(1),
                                 BoxBounds(0.1, 1.0));
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> pick(0.0, 1.0);
            std::uniform_real_distribution<double> interior(0.15, 0.95);
            std::vector<double> tv(prob.control_space()->point_count());
            bool any_free = false;
            for (auto& t : tv) {
                const double r = pick(rng);
                if (r < 0.15) t = 0.1;
                else if (r < 0.30) t = 1.0;
                else {
                    t = interior(rng);
                    any_free = true;
                }
            }
            if (!any_free) tv[0] = 0.5;
            GridFunction target(prob.control_space(), tv);
            prob.set_gradient_shift(manufacture_gradient_shift(prob, kappa, target, 0.05));

            GridFunction u0 = target;
            std::uniform_real_distribution<double> noise(-0.05, 0.05);
            for (auto& x : u0.values) x += noise(rng);
            u0 = project_box(u0, prob.bounds());

            SqpConfig cfg;
            cfg.kappa = kappa;
            const SqpRun run = run_sqpnln(prob, u0, cfg);
            if (run.status != RunStatus::converged) {
                o.pass = false;
                o.detail << "seed " << seed << ": " << to_string(run.status) << "\n";
                continue;
            }
            const GridFunction diff =
                linear_combination(1.0, run.final_control, -1.0, target);
            worst = std::max(worst, weighted_norm(diff, kInf));
        }
        o.detail << "worst recovery error " << worst << "\n";
        if (!(worst <= 1e-10)) o.pass = false;
    });

    std::printf("%d of 9 criteria failed\n", failures);
    return failures;
}
