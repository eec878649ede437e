#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fpsolve/cgfilter.hpp"
#include "fpsolve/config.hpp"
#include "fpsolve/csv.hpp"
#include "fpsolve/gridsolver.hpp"
#include "fpsolve/sampler.hpp"
#include "fpsolve/train.hpp"

namespace fpsolve {

namespace detail {

inline std::string joined(const std::string& out_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(out_dir) / p).string();
}

inline void ensure_out_dir(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
}

inline DensityField exact_on_grid(const SdeModel& model, const GridSpec& grid) {
    const auto& sol = model.exact_solution();
    return sample_on_grid(grid, [&](const Vec& x) { return sol.density(x); });
}

}  // namespace detail

/// `sample`: draws the training set and the reference set with Algorithm-2
/// style mixture sampling and writes both as point CSVs.
inline int run_sample(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();

    TrajectoryConfig tx = cfg.trajectory;
    tx.seed = derive_seed(cfg.seed, "sample-x");
    ReferenceSet train;
    train.points = sample_collocation(model, domain, cfg.sample.train_count, cfg.sample.alpha, tx);

    TrajectoryConfig ty = cfg.trajectory;
    ty.seed = derive_seed(cfg.seed, "sample-y");
    ReferenceSet ref;
    ref.points = sample_collocation(model, domain, cfg.sample.reference_count, cfg.sample.alpha, ty);

    csv::Metadata meta = {{"model", cfg.model},
                          {"alpha", csv::format(cfg.sample.alpha)},
                          {"seed", std::to_string(cfg.seed)}};
    csv::write_reference(detail::joined(out_dir, cfg.paths.train_points), train, meta);
    csv::write_reference(detail::joined(out_dir, cfg.paths.reference_points), ref, meta);
    std::cout << "sample: wrote " << train.points.size() << " training points and "
              << ref.points.size() << " reference points\n";
    return 0;
}

/// `density`: attaches density estimates to the reference set. Grid-based
/// samplers snap the points to the estimation grid first (duplicates merge).
inline int run_density(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();
    ReferenceSet ref = csv::read_reference(detail::joined(out_dir, cfg.paths.reference_points));
    if (ref.points.empty()) throw config_error("density: reference point file is empty");
    ref.densities.clear();

    const std::string& sampler = cfg.density.sampler;
    csv::Metadata meta = {{"model", cfg.model},
                          {"sampler", sampler},
                          {"seed", std::to_string(cfg.seed)}};

    if (sampler == "exact" || sampler == "exact+noise") {
        if (!model.has_exact_solution())
            throw config_error("density: sampler '" + sampler + "' needs a model with a "
                               "closed-form invariant density");
        const auto& sol = model.exact_solution();
        for (const Vec& y : ref.points) ref.densities.push_back(sol.density(y));
        if (sampler == "exact+noise") {
            RngStream rng(derive_seed(cfg.seed, "density-noise"), "noise");
            ref.densities = inject_multiplicative_noise(ref.densities, cfg.density.noise_alpha, rng);
            meta.emplace_back("noise_alpha", csv::format(cfg.density.noise_alpha));
        }
    } else if (sampler == "mc" || sampler == "mc-split") {
        GridSpec grid(domain, cfg.grid.points_per_axis);
        auto snapped = snap_to_grid(ref.points, grid);
        ref.points.clear();
        for (auto& s : snapped) ref.points.push_back(s.point);
        TrajectoryConfig t = cfg.trajectory;
        t.seed = derive_seed(cfg.seed, "density-mc");
        meta.emplace_back("mc_steps", std::to_string(cfg.density.mc_steps));
        if (sampler == "mc") {
            auto field = estimate_density_full_grid(model, grid, cfg.density.mc_steps, t);
            for (const auto& s : snapped) ref.densities.push_back(field.at(s.index));
        } else {
            ref.densities = estimate_density_split(model, grid, ref, cfg.density.mc_steps, t);
        }
    } else if (sampler == "cg") {
        auto cl = conditional_linear_decomposition(model);
        GridSpec grid(domain, cfg.grid.points_per_axis);
        Vec h(cl.dim_obs());
        for (int i = 0; i < cl.dim_obs(); ++i)
            h[i] = cfg.density.cg_neighborhood.value_or(grid.box_size(i));
        TrajectoryConfig t = cfg.trajectory;
        t.seed = derive_seed(cfg.seed, "density-cg");
        auto cgd = cg_reference_densities(cl, ref, cfg.density.cg_horizon, h, t);
        ref.densities = cgd.densities;
        meta.emplace_back("cg_horizon", csv::format(cfg.density.cg_horizon));
        meta.emplace_back("cg_neighborhood", csv::format(h[0]));
    }

    csv::write_reference(detail::joined(out_dir, cfg.paths.reference_densities), ref, meta);
    std::size_t missing = 0;
    for (double v : ref.densities) missing += is_missing(v) ? 1 : 0;
    std::cout << "density: wrote " << ref.points.size() << " reference densities (" << missing
              << " missing) via " << sampler << "\n";
    return 0;
}

/// `grid-solve`: Monte Carlo estimate plus both data-driven solves, with
/// solution and error maps and a per-method report.
inline int run_grid_solve(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();
    GridSpec grid(domain, cfg.grid.points_per_axis);

    TrajectoryConfig t = cfg.trajectory;
    t.seed = derive_seed(cfg.seed, "gridsolve-mc");
    auto v = estimate_density_full_grid(model, grid, cfg.density.mc_steps, t);
    auto A = assemble_operator(model, grid);
    auto constrained = solve_constrained(A, v);
    auto penalized = solve_unconstrained(A, v);

    csv::Metadata meta = {{"model", cfg.model}, {"seed", std::to_string(cfg.seed)}};
    csv::write_grid(detail::joined(out_dir, "mc_density.csv"), v, meta);
    csv::write_grid(detail::joined(out_dir, "constrained.csv"), constrained.solution, meta);
    csv::write_grid(detail::joined(out_dir, "penalized.csv"), penalized.solution, meta);

    std::vector<std::vector<double>> report_rows;
    std::vector<std::string> header = {"method", "residual_norm", "data_misfit", "discrete_l2_error"};
    auto report_line = [&](int method, const SolveReport& r) {
        report_rows.push_back({static_cast<double>(method), r.residual_norm, r.data_misfit,
                               r.discrete_l2_error.value_or(std::numeric_limits<double>::quiet_NaN())});
    };

    if (model.has_exact_solution()) {
        auto exact = detail::exact_on_grid(model, grid);
        auto error_field = [&](const DensityField& f) {
            DensityField e(grid);
            for (std::size_t i = 0; i < e.values.size(); ++i)
                e.values[i] = f.values[i] - exact.values[i];
            return e;
        };
        const double mc_err = discrete_l2_error(v, exact);
        constrained.discrete_l2_error = discrete_l2_error(constrained.solution, exact);
        penalized.discrete_l2_error = discrete_l2_error(penalized.solution, exact);
        csv::write_grid(detail::joined(out_dir, "mc_error.csv"), error_field(v), meta);
        csv::write_grid(detail::joined(out_dir, "constrained_error.csv"),
                        error_field(constrained.solution), meta);
        csv::write_grid(detail::joined(out_dir, "penalized_error.csv"),
                        error_field(penalized.solution), meta);

        std::vector<double> boundary(grid.num_nodes(), 0.0);
        const auto& sol = model.exact_solution();
        for (std::size_t flat : boundary_nodes(grid))
            boundary[flat] = sol.density(grid.node(grid.multi_index(flat)));
        auto baseline = solve_baseline(A, boundary);
        csv::write_grid(detail::joined(out_dir, "baseline.csv"), baseline, meta);
        const double base_err = discrete_l2_error(baseline, exact);

        std::cout << "grid-solve: discrete L2 errors vs exact:\n"
                  << "  monte-carlo  " << csv::format(mc_err) << "\n"
                  << "  constrained  " << csv::format(*constrained.discrete_l2_error) << "\n"
                  << "  penalized    " << csv::format(*penalized.discrete_l2_error) << "\n"
                  << "  baseline u*  " << csv::format(base_err) << "\n";
        const bool smoothed = *constrained.discrete_l2_error < mc_err &&
                              *penalized.discrete_l2_error < mc_err;
        std::cout << "  error ordering MC > both solver outputs: "
                  << (smoothed ? "ok" : "VIOLATED") << "\n";

        const Vec vv = Eigen::Map<const Vec>(v.values.data(), v.values.size());
        report_rows.push_back({0.0, (A.matrix * vv).norm(), 0.0, mc_err});
        report_line(1, constrained);
        report_line(2, penalized);
        report_rows.push_back({3.0, 0.0, 0.0, base_err});
    } else {
        const Vec vv = Eigen::Map<const Vec>(v.values.data(), v.values.size());
        report_rows.push_back({0.0, (A.matrix * vv).norm(), 0.0,
                               std::numeric_limits<double>::quiet_NaN()});
        report_line(1, constrained);
        report_line(2, penalized);
    }
    csv::Metadata report_meta = meta;
    report_meta.emplace_back("methods", "0=monte-carlo 1=constrained 2=penalized 3=baseline");
    csv::write_rows(detail::joined(out_dir, "report.csv"), report_meta, header, report_rows);
    return 0;
}

/// `train`: double-shuffle training from the sampled sets; writes the
/// checkpoint and the loss history. Exit code 3 flags a non-converged run
/// (artifacts are still written).
inline int run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    ReferenceSet train_set = csv::read_reference(detail::joined(out_dir, cfg.paths.train_points));
    ReferenceSet ref = csv::read_reference(detail::joined(out_dir, cfg.paths.reference_densities));
    if (!ref.has_densities())
        throw config_error("train: '" + cfg.paths.reference_densities + "' carries no densities");

    TrainConfig tc;
    tc.batch_x = std::min<long>(cfg.train.batch_x, static_cast<long>(train_set.points.size()));
    tc.batch_y = cfg.train.batch_y;  // clipped below once missing values are known
    tc.budget = cfg.train.budget;
    tc.l1_threshold = cfg.train.l1_threshold;
    tc.l2_threshold = cfg.train.l2_threshold;
    tc.rescale = cfg.train.rescale;
    tc.seed = cfg.seed;
    tc.adam.step_size = cfg.train.step_size;

    std::size_t usable = 0;
    for (double v : ref.densities) usable += is_missing(v) ? 0 : 1;
    tc.batch_y = std::min<long>(tc.batch_y, static_cast<long>(usable));

    MlpParams init = init_params(default_layer_sizes(model.dim()), derive_seed(cfg.seed, "init"));
    auto result = train_double_shuffle(model, std::move(init), train_set.points, ref, tc);

    csv::write_checkpoint(detail::joined(out_dir, cfg.paths.checkpoint), result.params,
                          result.target_scale);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < result.history.size(); ++i)
        rows.push_back({static_cast<double>(i), result.history[i][0], result.history[i][1]});
    csv::write_rows(detail::joined(out_dir, cfg.paths.history),
                    {{"model", cfg.model}, {"seed", std::to_string(cfg.seed)}},
                    {"iter", "L1", "L2"}, rows);

    std::cout << "train: " << result.iterations << " iterations, L1="
              << csv::format(result.history.back()[0]) << " L2="
              << csv::format(result.history.back()[1])
              << (result.converged ? " (converged)" : " (budget exhausted)") << "\n";
    return result.converged ? 0 : 3;
}

/// `eval`: evaluates a checkpoint on a grid (2D models) or on configured 2D
/// slices (higher dimensions); reports discrete L2 errors when the model has
/// an exact solution.
inline int run_eval(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();
    auto [params, scale] = csv::read_checkpoint(detail::joined(out_dir, cfg.paths.checkpoint));
    if (params.input_dim() != model.dim())
        throw config_error("eval: checkpoint input dimension does not match the model");

    csv::Metadata meta = {{"model", cfg.model},
                          {"target_scale", csv::format(scale)}};

    if (model.dim() == 2) {
        GridSpec grid(domain, cfg.eval.points_per_axis);
        auto field = evaluate_on_grid(params, grid);
        for (double& v : field.values) v *= scale;
        csv::write_grid(detail::joined(out_dir, "eval_grid.csv"), field, meta);
        if (model.has_exact_solution()) {
            auto exact = detail::exact_on_grid(model, grid);
            DensityField err(grid);
            for (std::size_t i = 0; i < err.values.size(); ++i)
                err.values[i] = field.values[i] - exact.values[i];
            csv::write_grid(detail::joined(out_dir, "eval_error.csv"), err, meta);
            std::cout << "eval: discrete L2 error vs exact = "
                      << csv::format(discrete_l2_error(field, exact)) << "\n";
        } else {
            std::cout << "eval: wrote eval_grid.csv\n";
        }
        return 0;
    }

    if (cfg.eval.slices.empty())
        throw config_error("eval: models with n > 2 need eval.slices (fixed values for the "
                           "non-varying axes)");
    const int ax = cfg.eval.slice_axes[0];
    const int ay = cfg.eval.slice_axes[1];
    if (ax < 0 || ay < 0 || ax >= model.dim() || ay >= model.dim() || ax == ay)
        throw config_error("eval: slice_axes out of range");
    for (std::size_t k = 0; k < cfg.eval.slices.size(); ++k) {
        const auto& fixed_values = cfg.eval.slices[k];
        if (static_cast<int>(fixed_values.size()) != model.dim() - 2)
            throw config_error("eval: slice " + std::to_string(k) + " needs " +
                               std::to_string(model.dim() - 2) + " fixed values");
        Vec fixed = Vec::Zero(model.dim());
        std::size_t fi = 0;
        for (int axis = 0; axis < model.dim(); ++axis) {
            if (axis != ax && axis != ay) fixed[axis] = fixed_values[fi++];
        }
        GridSpec slice_grid(Domain({{domain.lower(ax), domain.upper(ax)},
                                    {domain.lower(ay), domain.upper(ay)}}),
                            cfg.eval.points_per_axis);
        auto field = evaluate_slice(params, slice_grid, ax, ay, fixed);
        for (double& v : field.values) v *= scale;
        csv::Metadata slice_meta = meta;
        slice_meta.emplace_back("slice_axes", std::to_string(ax) + "," + std::to_string(ay));
        for (int axis = 0, sfi = 0; axis < model.dim(); ++axis) {
            if (axis != ax && axis != ay) {
                slice_meta.emplace_back("fixed_x" + std::to_string(axis + 1),
                                        csv::format(fixed_values[sfi++]));
            }
        }
        const std::string path =
            detail::joined(out_dir, "eval_slice_" + std::to_string(k) + ".csv");
        if (model.has_exact_solution()) {
            const auto& sol = model.exact_solution();
            auto exact = sample_on_grid(slice_grid, [&](const Vec& p2) {
                Vec x = fixed;
                x[ax] = p2[0];
                x[ay] = p2[1];
                return sol.density(x);
            });
            const double err = discrete_l2_error(field, exact);
            slice_meta.emplace_back("discrete_l2_error", csv::format(err));
            std::cout << "eval: slice " << k << " discrete L2 error vs exact = "
                      << csv::format(err) << "\n";
        } else {
            std::cout << "eval: wrote slice " << k << "\n";
        }
        csv::write_grid(path, field, slice_meta);
    }
    return 0;
}

/// `qh`: the Q(h) spectral diagnostic over a grid refinement sequence.
inline int run_qh(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();
    std::vector<std::vector<double>> rows;
    for (int n_axis : cfg.qh.axis_points) {
        auto d = compute_q(model, GridSpec(domain, n_axis));
        rows.push_back({d.h, d.q, static_cast<double>(d.rank)});
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a[0] > b[0]; });
    csv::write_rows(detail::joined(out_dir, "qh.csv"),
                    {{"model", cfg.model}}, {"h", "Q", "rank"}, rows);
    std::cout << "qh: wrote " << rows.size() << " rows";
    bool decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) decreasing = decreasing && rows[i][1] < rows[i - 1][1];
    std::cout << (decreasing ? " (Q strictly decreasing)" : " (Q NOT monotone)") << "\n";
    return 0;
}

/// `thm1`: the noise-contraction ratio experiment over a refinement sequence.
inline int run_thm1(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_out_dir(out_dir);
    const SdeModel model = model_from_name(cfg.model);
    const Domain domain = cfg.resolve_domain();
    std::vector<GridSpec> grids;
    for (int n_axis : cfg.thm1.axis_points) grids.emplace_back(domain, n_axis);
    std::function<double(const Vec&)> boundary;
    if (!model.has_exact_solution()) boundary = [](const Vec&) { return 1.0; };
    auto pts = theorem1_ratio(model, grids, cfg.thm1.zeta, cfg.thm1.trials,
                              derive_seed(cfg.seed, "thm1"), boundary);
    std::vector<std::vector<double>> rows;
    for (const auto& p : pts) rows.push_back({p.h, p.ratio});
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a[0] > b[0]; });
    csv::write_rows(detail::joined(out_dir, "thm1.csv"),
                    {{"model", cfg.model},
                     {"zeta", csv::format(cfg.thm1.zeta)},
                     {"trials", std::to_string(cfg.thm1.trials)},
                     {"seed", std::to_string(cfg.seed)}},
                    {"h", "ratio"}, rows);
    std::cout << "thm1: wrote " << rows.size() << " rows\n";
    return 0;
}

}  // namespace fpsolve
