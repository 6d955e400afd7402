#include "sqpbox/runner.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sqpbox/elliptic.hpp"
#include "sqpbox/errors.hpp"
#include "sqpbox/parabolic.hpp"
#include "sqpbox/synthetic.hpp"

namespace sqpbox {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* to_string(ProblemKind p) {
    switch (p) {
        case ProblemKind::elliptic_p1: return "elliptic_p1";
        case ProblemKind::parabolic_p3: return "parabolic_p3";
        case ProblemKind::synthetic: return "synthetic";
    }
    return "unknown";
}

SqpConfig ExperimentConfig::solver() const {
    SqpConfig s;
    s.kappa = kappa;
    s.stop_tol = stop_tol;
    s.max_outer_iters = max_outer_iters;
    s.qp_tol = qp_tol;
    s.qp_max_iters = qp_max_iters;
    s.cg_tol = cg_tol;
    s.cg_max_iters = cg_max_iters;
    s.method = method;
    return s;
}

void ExperimentConfig::validate() const {
    solver().validate();
    if (refinements < 1 || refinements > 12)
        throw std::invalid_argument("config: refinements must be in [1, 12]");
    if (dimension < 1 || dimension > 3)
        throw std::invalid_argument("config: dimension must be 1, 2 or 3");
    if (!(alpha < beta)) throw std::invalid_argument("config: requires alpha < beta");
    if (problem == ProblemKind::parabolic_p3 && !(alpha > -kInf && beta < kInf))
        throw std::invalid_argument("config: the parabolic instance (p > 2) needs finite bounds");
    if (sqplin_init != "zero" && sqplin_init != "consistent")
        throw std::invalid_argument("config: sqplin_init must be zero or consistent");
    if (threads < 1 || threads > 64)
        throw std::invalid_argument("config: threads must be in [1, 64]");
    if (problem == ProblemKind::synthetic && (size < 1 || size > 64))
        throw std::invalid_argument("config: synthetic size must be in [1, 64]");
}

namespace {

double parse_double(const std::string& value, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": invalid number '" + value + "'");
    }
}

int parse_int(const std::string& value, const std::string& context) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": invalid integer '" + value + "'");
    }
}

bool parse_bool(const std::string& value, const std::string& context) {
    if (value == "true" || value == "on" || value == "1") return true;
    if (value == "false" || value == "off" || value == "0") return false;
    throw std::runtime_error(context + ": invalid boolean '" + value + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value, const std::string& context) {
    if (key == "problem") {
        if (value == "elliptic_p1") cfg.problem = ProblemKind::elliptic_p1;
        else if (value == "parabolic_p3") cfg.problem = ProblemKind::parabolic_p3;
        else if (value == "synthetic") cfg.problem = ProblemKind::synthetic;
        else throw std::runtime_error(context + ": unknown problem '" + value + "'");
    } else if (key == "method") {
        if (value == "sqpnln") cfg.method = Method::sqpnln;
        else if (value == "sqplin") cfg.method = Method::sqplin;
        else throw std::runtime_error(context + ": unknown method '" + value + "'");
    } else if (key == "refinements") cfg.refinements = parse_int(value, context);
    else if (key == "dimension") cfg.dimension = parse_int(value, context);
    else if (key == "kappa") cfg.kappa = parse_double(value, context);
    else if (key == "alpha") cfg.alpha = value == "-inf" ? -kInf : parse_double(value, context);
    else if (key == "beta") cfg.beta = value == "inf" ? kInf : parse_double(value, context);
    else if (key == "u0") cfg.u0 = value;
    else if (key == "horizon") cfg.horizon = parse_double(value, context);
    else if (key == "tol") cfg.stop_tol = parse_double(value, context);
    else if (key == "qp_tol") cfg.qp_tol = parse_double(value, context);
    else if (key == "cg_tol") cfg.cg_tol = parse_double(value, context);
    else if (key == "cg_max_iters") cfg.cg_max_iters = parse_int(value, context);
    else if (key == "max_outer_iters") cfg.max_outer_iters = parse_int(value, context);
    else if (key == "qp_max_iters") cfg.qp_max_iters = parse_int(value, context);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, context));
    else if (key == "size") cfg.size = parse_int(value, context);
    else if (key == "epsilon") cfg.epsilon = parse_double(value, context);
    else if (key == "spectrum_min") cfg.spectrum_min = parse_double(value, context);
    else if (key == "spectrum_max") cfg.spectrum_max = parse_double(value, context);
    else if (key == "sqplin_init") cfg.sqplin_init = value;
    else if (key == "threads") cfg.threads = parse_int(value, context);
    else if (key == "record_timings") cfg.record_timings = parse_bool(value, context);
    else if (key == "output") cfg.output = value;
    else throw std::runtime_error(context + ": unknown key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": malformed section header");
            continue;  // sections group keys, the namespace is flat
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": empty key or value");
        apply_config_key(cfg, key, value, path + ":" + std::to_string(lineno));
    }
    return cfg;
}

namespace {

GridFunction initial_control(const ExperimentConfig& cfg, const MeasureSpacePtr& space) {
    if (cfg.u0.empty()) {
        if (!(cfg.alpha > -kInf) || !(cfg.beta < kInf))
            throw std::invalid_argument("config: u0 required with one-sided bounds");
        return GridFunction(space, 0.5 * (cfg.alpha + cfg.beta));
    }
    if (cfg.u0.rfind("file:", 0) == 0) {
        const std::string path = cfg.u0.substr(5);
        std::ifstream in(path);
        if (!in) throw std::runtime_error("u0: cannot open '" + path + "'");
        std::vector<double> values;
        double v;
        while (in >> v) values.push_back(v);
        if (values.size() != space->point_count())
            throw std::runtime_error("u0: file '" + path + "' has " +
                                     std::to_string(values.size()) + " values, expected " +
                                     std::to_string(space->point_count()));
        return GridFunction(space, std::move(values));
    }
    return GridFunction(space, parse_double(cfg.u0, "u0"));
}

} // namespace

InstanceBundle build_instance(const ExperimentConfig& cfg) {
    cfg.validate();
    InstanceBundle bundle;
    switch (cfg.problem) {
        case ProblemKind::elliptic_p1: {
            auto prob = std::make_shared<EllipticProblem>(
                SimplexMesh::unit_cube(cfg.dimension, cfg.refinements),
                example_elliptic_data(cfg.dimension), BoxBounds(cfg.alpha, cfg.beta, 2.0));
            prob->set_worker_threads(cfg.threads);
            bundle.oracle = prob;
            // The adapter references the problem's engine; the bundle keeps
            // both alive together.
            bundle.lagrange_newton =
                std::make_shared<EllipticLagrangeNewton>(prob->engine(), prob->bounds());
            break;
        }
        case ProblemKind::parabolic_p3: {
            const double p = 2.0 * (cfg.dimension + 1);
            auto prob = std::make_shared<ParabolicProblem>(
                SimplexMesh::unit_cube(cfg.dimension, cfg.refinements),
                example_parabolic_data(cfg.dimension), BoxBounds(cfg.alpha, cfg.beta, p),
                cfg.horizon, cfg.refinements);
            prob->set_worker_threads(cfg.threads);
            bundle.oracle = prob;
            bundle.lagrange_newton =
                std::make_shared<ParabolicLagrangeNewton>(prob->engine(), prob->bounds());
            break;
        }
        case ProblemKind::synthetic: {
            auto prob = std::make_shared<SyntheticOracle>(
                make_synthetic(cfg.seed, cfg.size, {cfg.spectrum_min, cfg.spectrum_max},
                               cfg.epsilon),
                BoxBounds(cfg.alpha, cfg.beta, 2.0));
            bundle.oracle = prob;
            bundle.lagrange_newton = std::make_shared<SyntheticLagrangeNewton>(*prob);
            break;
        }
    }
    bundle.u0 = initial_control(cfg, bundle.oracle->control_space());
    return bundle;
}

namespace {

std::string format_objective(double j) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.16e", j);
    return buf;
}

void write_table(const fs::path& path, const SqpRun& run) {
    std::ofstream out(path);
    out << "  n  J(u_n)                   delta_n    #{a<u<b}    #{u=a}    #{u=b}\n";
    for (const auto& r : run.records) {
        char line[160];
        if (r.n == 0)
            std::snprintf(line, sizeof(line), "%3d  %s             %9zu %9zu %9zu\n",
                          r.n, format_objective(r.objective).c_str(), r.count_free,
                          r.count_lower, r.count_upper);
        else
            std::snprintf(line, sizeof(line), "%3d  %s  %8.1e   %9zu %9zu %9zu\n",
                          r.n, format_objective(r.objective).c_str(), r.stepsize,
                          r.count_free, r.count_lower, r.count_upper);
        out << line;
    }
    out << "status: " << to_string(run.status) << "\n";
}

void write_csv(const fs::path& path, const SqpRun& run, bool record_timings) {
    std::ofstream out(path);
    out << "n,objective,stepsize,count_free,count_lower,count_upper,qp_iterations,"
           "wall_time_seconds\n";
    for (const auto& r : run.records) {
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%zu,%zu,%zu,%d,%.3f\n", r.n,
                      r.objective, r.stepsize, r.count_free, r.count_lower, r.count_upper,
                      r.qp_iterations, record_timings ? r.wall_time_seconds : 0.0);
        out << line;
    }
}

ordered_json summary_json(const ExperimentConfig& cfg, const ExperimentResult& res,
                          Method method) {
    const SqpRun& run = res.run;
    ordered_json j;
    j["problem"] = to_string(cfg.problem);
    j["method"] = method == Method::sqpnln ? "sqpnln" : "sqplin";
    j["refinements"] = cfg.refinements;
    j["dimension"] = cfg.dimension;
    j["status"] = to_string(run.status);
    j["iterations"] = run.records.empty() ? 0 : run.records.back().n;
    j["final_objective"] = run.records.empty() ? 0.0 : run.records.back().objective;
    j["final_objective_str"] =
        run.records.empty() ? "" : format_objective(run.records.back().objective);
    if (res.rate) {
        j["fitted_rate"] = res.rate->first;
        j["fitted_rate_constant"] = res.rate->second;
    } else {
        j["fitted_rate"] = nullptr;
    }
    j["kkt_residual"] = res.kkt;
    j["tau"] = res.tau_band.tau;
    j["tau_plus"] = res.tau_band.count_tau_plus;
    j["tau_minus"] = res.tau_band.count_tau_minus;
    j["biactive"] = res.tau_band.count_biactive;
    if (!run.records.empty()) {
        j["count_free"] = run.records.back().count_free;
        j["count_lower"] = run.records.back().count_lower;
        j["count_upper"] = run.records.back().count_upper;
    }
    j["control_points"] = run.final_control.size();
    j["message"] = run.message;
    return j;
}

ExperimentResult run_with_bundle(const ExperimentConfig& cfg, InstanceBundle& bundle,
                                 Method method, const fs::path& outdir) {
    const SqpConfig solver = cfg.solver();
    ExperimentResult res;

    const auto t0 = std::chrono::steady_clock::now();
    if (method == Method::sqpnln) {
        res.run = run_sqpnln(*bundle.oracle, bundle.u0, solver);
    } else {
        Eigen::VectorXd y0 = bundle.lagrange_newton->zero_state();
        Eigen::VectorXd phi0 = bundle.lagrange_newton->zero_adjoint();
        if (cfg.sqplin_init == "consistent")
            bundle.lagrange_newton->consistent_point(bundle.u0, y0, phi0);
        res.run = run_sqplin(*bundle.lagrange_newton, bundle.u0, y0, phi0, solver);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    try {
        res.kkt = kkt_residual(*bundle.oracle, cfg.kappa, res.run.final_control);
        double tau = default_tau(*bundle.oracle, cfg.kappa, res.run.final_control);
        if (!(tau > 0.0)) tau = 1e-12;
        res.tau_band = tau_band_report(*bundle.oracle, cfg.kappa, res.run.final_control, tau);
    } catch (const SolverError&) {
        res.kkt = std::numeric_limits<double>::quiet_NaN();
    }
    if (res.run.status == RunStatus::converged)
        res.rate = fitted_rate(res.run, solver.stop_tol);

    fs::create_directories(outdir);
    res.table_path = outdir / "table.txt";
    res.csv_path = outdir / "records.csv";
    res.summary_path = outdir / "summary.json";
    write_table(res.table_path, res.run);
    write_csv(res.csv_path, res.run, cfg.record_timings);
    std::ofstream(res.summary_path) << summary_json(cfg, res, method).dump(2) << "\n";
    std::ofstream(outdir / "timings.txt")
        << "total_seconds " << res.seconds << "\n"
        << "note measured wall time; informative only\n";
    return res;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    InstanceBundle bundle = build_instance(cfg);
    return run_with_bundle(cfg, bundle, cfg.method, cfg.output);
}

CompareResult compare_methods(const ExperimentConfig& cfg) {
    cfg.validate();
    CompareResult cmp;
    const fs::path outdir(cfg.output);
    fs::create_directories(outdir);

    {
        InstanceBundle bundle = build_instance(cfg);
        cmp.nln = run_with_bundle(cfg, bundle, Method::sqpnln, outdir / "nln");
    }
    {
        InstanceBundle bundle = build_instance(cfg);
        cmp.lin = run_with_bundle(cfg, bundle, Method::sqplin, outdir / "lin");
    }

    cmp.both_converged = cmp.nln.run.status == RunStatus::converged &&
                         cmp.lin.run.status == RunStatus::converged;
    if (cmp.nln.run.final_control.size() == cmp.lin.run.final_control.size()) {
        const GridFunction diff = linear_combination(1.0, cmp.nln.run.final_control, -1.0,
                                                     cmp.lin.run.final_control);
        cmp.rel_linf_diff = weighted_norm(diff, kInf) /
                            std::max(1e-300, weighted_norm(cmp.nln.run.final_control, kInf));
    }

    cmp.report_path = outdir / "compare.txt";
    cmp.json_path = outdir / "compare.json";
    {
        std::ofstream out(cmp.report_path);
        auto describe = [&](const char* name, const ExperimentResult& r) {
            out << name << ": status=" << to_string(r.run.status)
                << " iterations=" << (r.run.records.empty() ? 0 : r.run.records.back().n)
                << " seconds=" << r.seconds;
            if (!r.run.message.empty()) out << " (" << r.run.message << ")";
            out << "\n";
        };
        describe("sqpnln", cmp.nln);
        describe("sqplin", cmp.lin);
        out << "final_control_rel_linf_diff: " << cmp.rel_linf_diff << "\n";
        out << "agree: " << (cmp.both_converged && cmp.rel_linf_diff < cfg.stop_tol ? "yes" : "no")
            << "\n";
    }
    {
        ordered_json j;
        auto entry = [&](const ExperimentResult& r) {
            ordered_json e;
            e["status"] = to_string(r.run.status);
            e["iterations"] = r.run.records.empty() ? 0 : r.run.records.back().n;
            e["seconds"] = r.seconds;
            e["message"] = r.run.message;
            return e;
        };
        j["sqpnln"] = entry(cmp.nln);
        j["sqplin"] = entry(cmp.lin);
        j["rel_linf_diff"] = cmp.rel_linf_diff;
        j["both_converged"] = cmp.both_converged;
        std::ofstream(cmp.json_path) << j.dump(2) << "\n";
    }
    return cmp;
}

} // namespace sqpbox
