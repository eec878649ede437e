// Command-line driver for the stationary Fokker-Planck experiments: sampling,
// density estimation, grid-based solves, neural training/evaluation, and the
// Q(h) / noise-contraction diagnostics. Every subcommand is reproducible from
// (config, seed): outputs are byte-identical across runs.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fpsolve/experiments.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed_override, "override the config's root seed");
    cmd->add_option("--out", args.out_dir, "output directory (default: current)");
}

int dispatch(const std::string& name, const CommonArgs& args) {
    fpsolve::ExperimentConfig cfg = fpsolve::load_config(args.config_path);
    if (args.seed_override) cfg.seed = *args.seed_override;
    if (name == "sample") return fpsolve::run_sample(cfg, args.out_dir);
    if (name == "density") return fpsolve::run_density(cfg, args.out_dir);
    if (name == "grid-solve") return fpsolve::run_grid_solve(cfg, args.out_dir);
    if (name == "train") return fpsolve::run_train(cfg, args.out_dir);
    if (name == "eval") return fpsolve::run_eval(cfg, args.out_dir);
    if (name == "qh") return fpsolve::run_qh(cfg, args.out_dir);
    if (name == "thm1") return fpsolve::run_thm1(cfg, args.out_dir);
    throw fpsolve::config_error("unknown subcommand '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-driven and neural solvers for stationary Fokker-Planck equations"};
    app.require_subcommand(1);

    const char* names[] = {"sample", "density", "grid-solve", "train", "eval", "qh", "thm1"};
    const char* descriptions[] = {
        "sample training and reference collocation points",
        "attach density estimates to the reference set",
        "Monte Carlo estimate plus constrained/penalized grid solves",
        "double-shuffle neural network training",
        "evaluate a checkpoint on a grid or on 2D slices",
        "Q(h) spectral diagnostic over a refinement sequence",
        "noise-contraction ratio experiment over a refinement sequence"};

    CommonArgs args;
    for (int i = 0; i < 7; ++i) add_common(app.add_subcommand(names[i], descriptions[i]), args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // CLI misuse is a validation failure
    }

    try {
        return dispatch(app.get_subcommands().front()->get_name(), args);
    } catch (const fpsolve::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fpsolve::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
}
