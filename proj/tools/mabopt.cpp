// mabopt: simulate the base-case recipe, optimize the perfusion reactor and
// export figure data.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure or an
// optimization that did not converge.

#include "mabopt/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct Options {
    std::string config_path;
    std::string out_dir;
    std::optional<int> move_blocking;
    std::optional<double> tol;
    int setup = 1;
    bool verbose = false;
};

mabopt::RunConfig resolve(const Options& o) {
    mabopt::RunConfig cfg = o.config_path.empty() ? mabopt::RunConfig{} : mabopt::load_config(o.config_path);
    if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
    if (o.move_blocking) cfg.move_blocking = *o.move_blocking;
    if (o.tol) cfg.solver.kkt_tol = *o.tol;
    cfg.validate();
    return cfg;
}

void print_summary(const mabopt::Summary& s) {
    std::printf("final mAb      %.4f g\n", s.final_mab);
    std::printf("volume range   [%.4f, %.4f] L\n", s.min_volume, s.max_volume);
    std::printf("min glucose    %.4g g\n", s.min_glucose);
    std::printf("min lactate    %.4g g\n", s.min_lactate);
    if (s.improvement) std::printf("improvement    %.1f %%\n", *s.improvement);
}

int cmd_simulate(const Options& o) {
    const mabopt::RunConfig cfg = resolve(o);
    const mabopt::SimulationRun run = mabopt::run_simulation(cfg);
    mabopt::write_simulation(run, cfg, cfg.output_dir);
    if (run.trajectory.negative_glucose || run.trajectory.negative_lactate) {
        std::fprintf(stderr, "warning: simulated glucose or lactate mass became negative\n");
    }
    print_summary(run.summary);
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return kExitOk;
}

int cmd_optimize(const Options& o) {
    const mabopt::RunConfig cfg = resolve(o);
    const mabopt::OptimizationRun run = mabopt::run_optimization(cfg, o.setup, o.verbose ? &std::cerr : nullptr);
    mabopt::write_optimization(run, cfg, cfg.output_dir);
    const mabopt::nlp::SolverReport& r = run.result.solve.report;
    std::printf("setup %d: %s after %d iterations (%.1f s)\n", o.setup, mabopt::nlp::to_string(r.status),
                r.iterations, run.seconds);
    std::printf("base case mAb  %.4f g\n", run.baseline.metrics.final_mab);
    print_summary(run.summary);
    if (!run.result.solution.consistent) {
        std::fprintf(stderr, "warning: re-simulation differs from the solver states by %.3g (relative)\n",
                     run.result.solution.max_relative_mismatch);
    }
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return r.converged() ? kExitOk : kExitNumerical;
}

int cmd_figure_data(const Options& o) {
    const mabopt::RunConfig cfg = resolve(o);
    mabopt::write_figure_data(cfg, cfg.output_dir);
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perfusion bioreactor simulation and dynamic optimization"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "TOML run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out_dir, "output directory (overrides [output] dir)");
    };

    CLI::App* sim = app.add_subcommand("simulate", "simulate the base-case recipe");
    common(sim);

    CLI::App* opt = app.add_subcommand("optimize", "solve an optimal control setup");
    common(opt);
    opt->add_option("--setup", o.setup, "1: free, 2: terminal glucose, 3: fixed sampling, 4: both")
        ->required()
        ->check(CLI::Range(1, 4));
    opt->add_option("--move-blocking", o.move_blocking, "intervals per control move");
    opt->add_option("--tol", o.tol, "KKT tolerance");
    opt->add_flag("--verbose,-v", o.verbose, "print solver iterations to stderr");

    CLI::App* fig = app.add_subcommand("figure-data", "write inhibition curves");
    common(fig);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*opt) return cmd_optimize(o);
        return cmd_figure_data(o);
    } catch (const mabopt::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    }
}
