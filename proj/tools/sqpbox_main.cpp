// Command-line experiment runner: configures a problem instance, runs the
// selected outer method (or both, for comparisons) and writes the
// convergence table, CSV records and a summary.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>

#include "sqpbox/errors.hpp"
#include "sqpbox/runner.hpp"

using namespace sqpbox;

namespace {

struct CliOverrides {
    std::map<std::string, std::string> values;
};

void add_common_flags(CLI::App* cmd, std::string& config_path, CliOverrides& over) {
    cmd->add_option("--config", config_path, "config file (flat key = value pairs)");
    // Every config key is overridable by a flag of the same name.
    static const char* keys[] = {
        "problem", "method", "refinements", "dimension", "kappa", "alpha", "beta",
        "u0", "horizon", "tol", "qp_tol", "cg_tol", "cg_max_iters", "max_outer_iters",
        "qp_max_iters", "seed", "size", "epsilon", "spectrum_min", "spectrum_max",
        "sqplin_init", "threads", "record_timings", "output"};
    for (const char* key : keys) {
        const std::string flag = std::string("--") + key;
        cmd->add_option_function<std::string>(
            flag, [&over, key](const std::string& v) { over.values[key] = v; },
            std::string("config key ") + key);
    }
}

ExperimentConfig assemble_config(const std::string& config_path, const CliOverrides& over) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    for (const auto& [key, value] : over.values)
        apply_config_key(cfg, key, value, std::string("--") + key);
    return cfg;
}

void print_run_summary(const ExperimentResult& res) {
    const auto& run = res.run;
    std::printf("status: %s\n", to_string(run.status));
    if (!run.message.empty()) std::printf("  %s\n", run.message.c_str());
    if (!run.records.empty()) {
        std::printf("iterations: %d\n", run.records.back().n);
        std::printf("final objective: %.16e\n", run.records.back().objective);
    }
    std::printf("kkt residual: %.3e\n", res.kkt);
    if (res.rate) std::printf("fitted rate: %.3f\n", res.rate->first);
    std::printf("outputs: %s\n", res.table_path.parent_path().string().c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"box-constrained SQP solver for PDE optimal control test problems"};
    app.require_subcommand(1);

    std::string run_config, cmp_config;
    CliOverrides run_over, cmp_over;
    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
    add_common_flags(run_cmd, run_config, run_over);
    CLI::App* cmp_cmd = app.add_subcommand("compare", "run sqpnln and sqplin on the same instance");
    add_common_flags(cmp_cmd, cmp_config, cmp_over);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const ExperimentConfig cfg = assemble_config(run_config, run_over);
            const ExperimentResult res = run_experiment(cfg);
            print_run_summary(res);
            return res.run.status == RunStatus::converged ? 0 : 2;
        }
        const ExperimentConfig cfg = assemble_config(cmp_config, cmp_over);
        const CompareResult cmp = compare_methods(cfg);
        std::printf("sqpnln: %s (%d iterations, %.3f s)\n", to_string(cmp.nln.run.status),
                    cmp.nln.run.records.empty() ? 0 : cmp.nln.run.records.back().n,
                    cmp.nln.seconds);
        std::printf("sqplin: %s (%d iterations, %.3f s)\n", to_string(cmp.lin.run.status),
                    cmp.lin.run.records.empty() ? 0 : cmp.lin.run.records.back().n,
                    cmp.lin.seconds);
        std::printf("relative Linf difference of final controls: %.3e\n", cmp.rel_linf_diff);
        std::printf("report: %s\n", cmp.report_path.string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
