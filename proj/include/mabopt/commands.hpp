#pragma once

/**
 * @file
 * The simulate / optimize / figure-data runs behind the command-line tool,
 * split into a computation step and a step that writes the result files.
 */

#include "mabopt/config.hpp"
#include "mabopt/io.hpp"
#include "mabopt/ocp.hpp"

#include <chrono>
#include <filesystem>
#include <sstream>
#include <string>

namespace mabopt {

struct SimulationRun {
    Trajectory trajectory;
    Summary summary;
};

/// Base-case recipe simulated on the configured grid.
inline SimulationRun run_simulation(const RunConfig& cfg) {
    cfg.validate();
    const ControlGrid grid = cfg.grid();
    const std::vector<Input> inputs = build_base_case(cfg.resolved_schedule(), grid, cfg.params, cfg.bounds);
    SimulationRun run;
    run.trajectory = simulate(cfg.x0, inputs, grid, cfg.params, cfg.integrator);
    run.summary = summarize(run.trajectory);
    return run;
}

/// trajectory.csv, summary.txt and manifest.toml.
inline void write_simulation(const SimulationRun& run, const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir / "trajectory.csv", io::trajectory_csv(run.trajectory));
    io::write_file_atomic(dir / "summary.txt", io::summary_text(run.summary));
    io::write_file_atomic(dir / "manifest.toml", to_toml(cfg));
}

struct OptimizationRun {
    int setup = 1;
    OcpResult result;
    Trajectory baseline;
    Summary summary;  ///< of the re-simulated solution, improvement versus the baseline
    double seconds = 0.0;
};

inline OptimizationRun run_optimization(const RunConfig& cfg, int setup, std::ostream* log = nullptr) {
    cfg.validate();
    OptimizationRun run;
    run.setup = setup;
    run.baseline = run_simulation(cfg).trajectory;
    const OcpSpec spec = build_ocp(setup, cfg.ocp_config());
    nlp::SolverOptions opts = cfg.solver;
    opts.log = log;
    const auto t0 = std::chrono::steady_clock::now();
    run.result = solve_ocp(spec, initial_guess(spec, cfg.guess), opts);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.summary = summarize(run.result.solution.resimulated, run.baseline.metrics.final_mab);
    return run;
}

inline std::string solver_report_text(const OptimizationRun& run) {
    const nlp::SolverReport& r = run.result.solve.report;
    const ExtractedSolution& s = run.result.solution;
    std::ostringstream out;
    auto kv = [&](std::string_view key, const std::string& value) { out << key << " = " << value << "\n"; };
    kv("setup", std::to_string(run.setup));
    kv("status", nlp::to_string(r.status));
    kv("iterations", std::to_string(r.iterations));
    kv("objective", io::format_number(r.objective));
    kv("stationarity", io::format_number(r.stationarity));
    kv("feasibility", io::format_number(r.feasibility));
    kv("complementarity", io::format_number(r.complementarity));
    kv("evaluations", std::to_string(r.evaluations));
    kv("exact_hessian", r.exact_hessian ? "true" : "false");
    kv("hessian_resets", std::to_string(r.hessian_resets));
    kv("node_final_mab_g", io::format_number(s.nodes.metrics.final_mab));
    kv("resimulated_final_mab_g", io::format_number(s.resimulated.metrics.final_mab));
    kv("max_relative_mismatch", io::format_number(s.max_relative_mismatch));
    kv("consistent", s.consistent ? "true" : "false");
    return out.str();
}

inline std::string solver_history_csv(const nlp::SolverReport& r) {
    std::string out =
        "iteration,objective,stationarity,feasibility,complementarity,barrier,step,dual_step,regularization,soc\n";
    for (const nlp::IterationRecord& h : r.history) {
        out += std::to_string(h.iteration);
        for (double v : {h.objective, h.stationarity, h.feasibility, h.complementarity, h.barrier, h.step, h.dual_step,
                         h.regularization}) {
            out += "," + io::format_number(v);
        }
        out += h.second_order_correction ? ",1\n" : ",0\n";
    }
    return out;
}

/**
 * solution.csv (re-simulated controls), nodes.csv (solver states),
 * summary.txt, solver_report.txt, solver_history.csv, comparison.md and
 * manifest.toml.
 */
inline void write_optimization(const OptimizationRun& run, const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir / "solution.csv", io::trajectory_csv(run.result.solution.resimulated));
    io::write_file_atomic(dir / "nodes.csv", io::trajectory_csv(run.result.solution.nodes));
    io::write_file_atomic(dir / "summary.txt", io::summary_text(run.summary));
    io::write_file_atomic(dir / "solver_report.txt", solver_report_text(run));
    io::write_file_atomic(dir / "solver_history.csv", solver_history_csv(run.result.solve.report));
    const std::vector<io::ComparisonRow> rows{
        {"Base case", run.baseline.metrics.final_mab, std::nullopt},
        {"Opt. (" + std::to_string(run.setup) + ")", run.summary.final_mab, run.summary.improvement},
    };
    io::write_file_atomic(dir / "comparison.md", io::comparison_table(rows));
    io::write_file_atomic(dir / "manifest.toml", to_toml(cfg));
}

/// glucose_inhibition.csv, product_inhibition.csv and manifest.toml.
inline void write_figure_data(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir / "glucose_inhibition.csv", io::glucose_inhibition_csv(cfg.params));
    io::write_file_atomic(dir / "product_inhibition.csv", io::product_inhibition_csv(cfg.params));
    io::write_file_atomic(dir / "manifest.toml", to_toml(cfg));
}

}  // namespace mabopt
