#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "sqpbox/problem.hpp"
#include "sqpbox/sqp.hpp"

namespace sqpbox {

enum class ProblemKind { elliptic_p1, parabolic_p3, synthetic };

const char* to_string(ProblemKind p);

/// Everything a run needs, readable from a flat key = value config file
/// (with optional [section] grouping lines) and overridable by command-line
/// flags of the same names.
struct ExperimentConfig {
    ProblemKind problem = ProblemKind::elliptic_p1;
    Method method = Method::sqpnln;
    int refinements = 3;   // N, h = 2^-N (and time step T * 2^-N)
    int dimension = 3;
    double kappa = 0.1;
    double alpha = 0.1;
    double beta = 1.0;
    std::string u0;        // empty -> (alpha+beta)/2; a number; or file:PATH
    double horizon = 4.0;  // parabolic T

    double stop_tol = 5e-13;
    double qp_tol = 1e-12;
    double cg_tol = 1e-12;
    int cg_max_iters = 0;
    int max_outer_iters = 30;
    int qp_max_iters = 100;

    std::uint64_t seed = 1;     // synthetic
    int size = 16;              // synthetic point count
    double epsilon = 0.0;       // synthetic nonlinearity amplitude
    double spectrum_min = 0.05; // synthetic curvature spectrum
    double spectrum_max = 0.8;

    std::string sqplin_init = "zero";  // zero | consistent
    int threads = 1;
    bool record_timings = false;       // measured times in records.csv
    std::string output = "out";

    SqpConfig solver() const;
    void validate() const;
};

/// Parse a config file; throws std::runtime_error with file:line diagnostics.
ExperimentConfig parse_config_file(const std::string& path);

/// Apply one key = value pair; context prefixes error messages.
void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value, const std::string& context);

/// The problem instance bundle an experiment runs against.
struct InstanceBundle {
    std::shared_ptr<ProblemOracle> oracle;
    std::shared_ptr<LagrangeNewtonOracle> lagrange_newton;
    GridFunction u0;
};

InstanceBundle build_instance(const ExperimentConfig& cfg);

struct ExperimentResult {
    SqpRun run;
    double kkt = 0.0;
    TauBandReport tau_band;
    std::optional<std::pair<double, double>> rate;
    double seconds = 0.0;
    std::filesystem::path table_path, csv_path, summary_path;
};

/// Run one experiment and write table.txt, records.csv, summary.json and
/// timings.txt into cfg.output. The first three are deterministic for a
/// fixed config (measured times only enter records.csv when record_timings
/// is set); timings.txt carries the measured wall time.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct CompareResult {
    ExperimentResult nln, lin;
    double rel_linf_diff = 0.0;  // final controls, when both converged
    bool both_converged = false;
    std::filesystem::path report_path, json_path;
};

/// Run both methods on the instance and write a comparison report
/// (compare.txt, compare.json, with per-method outputs in nln/ and lin/).
CompareResult compare_methods(const ExperimentConfig& cfg);

} // namespace sqpbox
