#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sqpbox/runner.hpp"

using namespace sqpbox;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("sqpbox_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("config file parsing with sections and diagnostics") {
    const fs::path dir = temp_dir("cfg");
    const fs::path cfgfile = dir / "exp.cfg";
    std::ofstream(cfgfile) << "# experiment\n"
                           << "[problem]\n"
                           << "problem = synthetic\n"
                           << "size = 10\n"
                           << "alpha = -0.4\n"
                           << "beta = 0.4\n"
                           << "\n"
                           << "[solver]\n"
                           << "kappa = 0.7\n"
                           << "tol = 1e-12\n"
                           << "threads = 2\n";
    ExperimentConfig cfg = parse_config_file(cfgfile.string());
    CHECK(cfg.problem == ProblemKind::synthetic);
    CHECK(cfg.size == 10);
    CHECK(cfg.kappa == 0.7);
    CHECK(cfg.stop_tol == 1e-12);
    CHECK(cfg.threads == 2);

    std::ofstream(cfgfile) << "problem = synthetic\nnot_a_key = 3\n";
    try {
        parse_config_file(cfgfile.string());
        FAIL("expected parse error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":2") != std::string::npos);        // line number
        CHECK(msg.find("not_a_key") != std::string::npos); // offending key
    }

    std::ofstream(cfgfile) << "kappa = abc\n";
    CHECK_THROWS_AS(parse_config_file(cfgfile.string()), std::runtime_error);
}

TEST_CASE("config validation rules") {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::parabolic_p3;
    cfg.alpha = 0.1;
    cfg.beta = kInf;  // p = 2(d+1) > 2 needs finite bounds
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.beta = 100.0;
    CHECK_NOTHROW(cfg.validate());
    cfg.sqplin_init = "sideways";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("experiment outputs are byte-identical across runs") {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::synthetic;
    cfg.size = 14;
    cfg.alpha = -0.5;
    cfg.beta = 0.5;
    cfg.kappa = 0.3;
    cfg.epsilon = 1e-2;
    cfg.spectrum_min = 0.05;
    cfg.spectrum_max = 0.6;

    const fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2");
    cfg.output = d1.string();
    run_experiment(cfg);
    cfg.output = d2.string();
    run_experiment(cfg);
    CHECK(slurp(d1 / "records.csv") == slurp(d2 / "records.csv"));
    CHECK(slurp(d1 / "table.txt") == slurp(d2 / "table.txt"));
    CHECK(slurp(d1 / "summary.json") == slurp(d2 / "summary.json"));
}

TEST_CASE("csv layout matches the record fields") {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::synthetic;
    cfg.size = 8;
    cfg.alpha = -1.0;
    cfg.beta = 1.0;
    cfg.kappa = 0.5;
    const fs::path dir = temp_dir("csv");
    cfg.output = dir.string();
    ExperimentResult res = run_experiment(cfg);

    std::ifstream in(dir / "records.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "n,objective,stepsize,count_free,count_lower,count_upper,qp_iterations,"
          "wall_time_seconds");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == res.run.records.size());
}

TEST_CASE("u0 from file and constant") {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::synthetic;
    cfg.size = 4;
    cfg.alpha = -1.0;
    cfg.beta = 1.0;
    const fs::path dir = temp_dir("u0");
    const fs::path ufile = dir / "u0.txt";
    std::ofstream(ufile) << "0.1\n-0.2\n0.3\n0.4\n";
    cfg.u0 = "file:" + ufile.string();
    InstanceBundle bundle = build_instance(cfg);
    CHECK(bundle.u0.values == std::vector<double>{0.1, -0.2, 0.3, 0.4});

    std::ofstream(ufile) << "0.1\n-0.2\n";  // wrong count
    CHECK_THROWS_AS(build_instance(cfg), std::runtime_error);

    cfg.u0 = "0.25";
    bundle = build_instance(cfg);
    for (double v : bundle.u0.values) CHECK(v == 0.25);

    cfg.u0.clear();
    bundle = build_instance(cfg);
    for (double v : bundle.u0.values) CHECK(v == 0.0);  // (alpha+beta)/2
}

TEST_CASE("compare on an affine synthetic problem gives identical iteration counts") {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::synthetic;
    cfg.size = 12;
    cfg.alpha = -0.5;
    cfg.beta = 0.6;
    cfg.kappa = 0.4;
    cfg.epsilon = 0.0;  // Phi affine: the two methods coincide
    const fs::path dir = temp_dir("cmp");
    cfg.output = dir.string();
    CompareResult cmp = compare_methods(cfg);
    CHECK(cmp.both_converged);
    CHECK(cmp.nln.run.records.size() == cmp.lin.run.records.size());
    CHECK(cmp.rel_linf_diff < cfg.stop_tol);
    CHECK(fs::exists(cmp.report_path));
    CHECK(fs::exists(cmp.json_path));
    CHECK(fs::exists(dir / "nln" / "records.csv"));
    CHECK(fs::exists(dir / "lin" / "records.csv"));
}

TEST_CASE("thread count does not change results materially and is deterministic") {
    ExperimentConfig base;
    base.problem = ProblemKind::elliptic_p1;
    base.dimension = 2;
    base.refinements = 3;
    base.kappa = 0.1;
    base.alpha = 0.1;
    base.beta = 1.0;

    ExperimentConfig c1 = base, c2 = base, c2b = base;
    const fs::path d1 = temp_dir("thr1"), d2 = temp_dir("thr2"), d2b = temp_dir("thr2b");
    c1.threads = 1;
    c1.output = d1.string();
    c2.threads = 2;
    c2.output = d2.string();
    c2b.threads = 2;
    c2b.output = d2b.string();

    ExperimentResult r1 = run_experiment(c1);
    ExperimentResult r2 = run_experiment(c2);
    run_experiment(c2b);

    REQUIRE(r1.run.status == RunStatus::converged);
    REQUIRE(r2.run.status == RunStatus::converged);
    const GridFunction diff =
        linear_combination(1.0, r1.run.final_control, -1.0, r2.run.final_control);
    CHECK(weighted_norm(diff, kInf) <= 1e-11);
    // Same thread count twice: byte-identical outputs.
    CHECK(slurp(d2 / "records.csv") == slurp(d2b / "records.csv"));
    CHECK(slurp(d2 / "summary.json") == slurp(d2b / "summary.json"));
}
