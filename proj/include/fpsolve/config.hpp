#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpsolve/errors.hpp"
#include "fpsolve/grid.hpp"
#include "fpsolve/models.hpp"
#include "fpsolve/sampler.hpp"
#include "fpsolve/train.hpp"

namespace fpsolve {

using json = nlohmann::ordered_json;

/// Pure-diffusion diagnostic models (f = 0, Sigma = I on the unit box), used
/// by the spectral and noise-contraction experiments.
inline SdeModel make_free_diffusion(int n) {
    std::vector<std::array<double, 2>> b(n, {0.0, 1.0});
    return SdeModel("free" + std::to_string(n) + "d", n,
                    [](const Vec& x) { return Vec(Vec::Zero(x.size())); },
                    [](const Vec&) { return 0.0; }, Mat::Identity(n, n), Domain(std::move(b)));
}

/// Model lookup for configs: the four built-in systems plus the free-diffusion
/// diagnostics free1d/free2d/free3d.
inline SdeModel model_from_name(const std::string& name) {
    if (name == "free1d") return make_free_diffusion(1);
    if (name == "free2d") return make_free_diffusion(2);
    if (name == "free3d") return make_free_diffusion(3);
    return make_builtin(name);
}

/// Declarative experiment description: one file drives every subcommand.
struct ExperimentConfig {
    std::string model = "ring2d";
    std::optional<std::vector<std::array<double, 2>>> domain;  // default: the model's own
    std::uint64_t seed = 0;

    TrajectoryConfig trajectory;  // seed filled from the root seed per use

    struct Sample {
        long train_count = 10000;
        long reference_count = 256;
        double alpha = 0.7;
    } sample;

    struct Grid {
        int points_per_axis = 100;
    } grid;

    struct Density {
        std::string sampler = "exact";  // mc | mc-split | cg | exact | exact+noise
        double noise_alpha = 0.1;       // for exact+noise
        long mc_steps = 1000000;        // for mc / mc-split
        double cg_horizon = 1000.0;     // for cg
        std::optional<double> cg_neighborhood;  // default: grid box size
    } density;

    struct Train {
        int batch_x = 128;
        int batch_y = 128;
        long budget = 20000;
        double l1_threshold = 1e-5;
        double l2_threshold = 1e-5;
        bool rescale = false;
        double step_size = 1e-3;
    } train;

    struct Eval {
        int points_per_axis = 100;
        std::vector<int> slice_axes = {0, 1};       // the two varying axes
        std::vector<std::vector<double>> slices;    // fixed values of the other axes
    } eval;

    struct Qh {
        std::vector<int> axis_points = {8, 16, 32, 64};
    } qh;

    struct Thm1 {
        std::vector<int> axis_points = {10, 20, 40, 80};
        double zeta = 0.1;
        int trials = 20;
    } thm1;

    struct Paths {
        std::string train_points = "train_points.csv";
        std::string reference_points = "reference_points.csv";
        std::string reference_densities = "reference_densities.csv";
        std::string checkpoint = "checkpoint.csv";
        std::string history = "history.csv";
    } paths;

    /// Resolved numerical domain.
    Domain resolve_domain() const {
        const SdeModel m = model_from_name(model);
        if (!domain) return m.default_domain();
        Domain d(*domain);
        if (d.dim() != m.dim())
            throw config_error("config: domain dimension " + std::to_string(d.dim()) +
                               " does not match model dimension " + std::to_string(m.dim()));
        return d;
    }

    void validate() const {
        model_from_name(model);  // throws for unknown names
        resolve_domain();
        trajectory.validate();
        if (sample.train_count < 1) throw config_error("config sample.train_count: must be >= 1");
        if (sample.reference_count < 1)
            throw config_error("config sample.reference_count: must be >= 1");
        if (sample.alpha < 0.0 || sample.alpha > 1.0)
            throw config_error("config sample.alpha: must be in [0, 1]");
        if (grid.points_per_axis < 3)
            throw config_error("config grid.points_per_axis: must be >= 3");
        const char* samplers[] = {"mc", "mc-split", "cg", "exact", "exact+noise"};
        bool known = false;
        for (const char* s : samplers) known = known || density.sampler == s;
        if (!known)
            throw config_error("config density.sampler: unknown sampler '" + density.sampler +
                               "' (expected mc, mc-split, cg, exact or exact+noise)");
        if (density.noise_alpha < 0.0 || density.noise_alpha >= 1.0)
            throw config_error("config density.noise_alpha: must be in [0, 1)");
        if (density.mc_steps < 0) throw config_error("config density.mc_steps: must be >= 0");
        if (!(density.cg_horizon > 0.0))
            throw config_error("config density.cg_horizon: must be positive");
        if (train.batch_x < 1 || train.batch_y < 1)
            throw config_error("config train: batch sizes must be >= 1");
        if (train.budget < 0) throw config_error("config train.budget: must be >= 0");
        if (!(train.step_size > 0.0)) throw config_error("config train.step_size: must be positive");
        if (eval.points_per_axis < 3)
            throw config_error("config eval.points_per_axis: must be >= 3");
        if (eval.slice_axes.size() != 2)
            throw config_error("config eval.slice_axes: exactly two varying axes");
        if (thm1.trials < 1) throw config_error("config thm1.trials: must be >= 1");
        if (!(thm1.zeta > 0.0)) throw config_error("config thm1.zeta: must be positive");
        for (int n : qh.axis_points)
            if (n < 3) throw config_error("config qh.axis_points: entries must be >= 3");
        for (int n : thm1.axis_points)
            if (n < 3) throw config_error("config thm1.axis_points: entries must be >= 3");
    }
};

namespace detail {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::read_field(j, "model", c.model);
    detail::read_field(j, "seed", c.seed);
    if (j.contains("domain")) {
        std::vector<std::array<double, 2>> bounds;
        try {
            bounds = j.at("domain").get<std::vector<std::array<double, 2>>>();
        } catch (const json::exception& e) {
            throw config_error(std::string("config field 'domain': ") + e.what());
        }
        c.domain = std::move(bounds);
    }
    if (j.contains("trajectory")) {
        const json& t = j.at("trajectory");
        detail::read_field(t, "dt", c.trajectory.dt);
        detail::read_field(t, "burn_in_time", c.trajectory.burn_in_time);
        detail::read_field(t, "internal_gap", c.trajectory.internal_gap);
    }
    if (j.contains("sample")) {
        const json& s = j.at("sample");
        detail::read_field(s, "train_count", c.sample.train_count);
        detail::read_field(s, "reference_count", c.sample.reference_count);
        detail::read_field(s, "alpha", c.sample.alpha);
    }
    if (j.contains("grid")) detail::read_field(j.at("grid"), "points_per_axis", c.grid.points_per_axis);
    if (j.contains("density")) {
        const json& d = j.at("density");
        detail::read_field(d, "sampler", c.density.sampler);
        detail::read_field(d, "noise_alpha", c.density.noise_alpha);
        detail::read_field(d, "mc_steps", c.density.mc_steps);
        detail::read_field(d, "cg_horizon", c.density.cg_horizon);
        if (d.contains("cg_neighborhood"))
            c.density.cg_neighborhood = d.at("cg_neighborhood").get<double>();
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        detail::read_field(t, "batch_x", c.train.batch_x);
        detail::read_field(t, "batch_y", c.train.batch_y);
        detail::read_field(t, "budget", c.train.budget);
        detail::read_field(t, "l1_threshold", c.train.l1_threshold);
        detail::read_field(t, "l2_threshold", c.train.l2_threshold);
        detail::read_field(t, "rescale", c.train.rescale);
        detail::read_field(t, "step_size", c.train.step_size);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        detail::read_field(e, "points_per_axis", c.eval.points_per_axis);
        detail::read_field(e, "slice_axes", c.eval.slice_axes);
        detail::read_field(e, "slices", c.eval.slices);
    }
    if (j.contains("qh")) detail::read_field(j.at("qh"), "axis_points", c.qh.axis_points);
    if (j.contains("thm1")) {
        const json& t = j.at("thm1");
        detail::read_field(t, "axis_points", c.thm1.axis_points);
        detail::read_field(t, "zeta", c.thm1.zeta);
        detail::read_field(t, "trials", c.thm1.trials);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        detail::read_field(p, "train_points", c.paths.train_points);
        detail::read_field(p, "reference_points", c.paths.reference_points);
        detail::read_field(p, "reference_densities", c.paths.reference_densities);
        detail::read_field(p, "checkpoint", c.paths.checkpoint);
        detail::read_field(p, "history", c.paths.history);
    }
    c.validate();
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["model"] = c.model;
    if (c.domain) j["domain"] = *c.domain;
    j["seed"] = c.seed;
    j["trajectory"] = {{"dt", c.trajectory.dt},
                       {"burn_in_time", c.trajectory.burn_in_time},
                       {"internal_gap", c.trajectory.internal_gap}};
    j["sample"] = {{"train_count", c.sample.train_count},
                   {"reference_count", c.sample.reference_count},
                   {"alpha", c.sample.alpha}};
    j["grid"] = {{"points_per_axis", c.grid.points_per_axis}};
    j["density"] = {{"sampler", c.density.sampler},
                    {"noise_alpha", c.density.noise_alpha},
                    {"mc_steps", c.density.mc_steps},
                    {"cg_horizon", c.density.cg_horizon}};
    if (c.density.cg_neighborhood) j["density"]["cg_neighborhood"] = *c.density.cg_neighborhood;
    j["train"] = {{"batch_x", c.train.batch_x}, {"batch_y", c.train.batch_y},
                  {"budget", c.train.budget},   {"l1_threshold", c.train.l1_threshold},
                  {"l2_threshold", c.train.l2_threshold}, {"rescale", c.train.rescale},
                  {"step_size", c.train.step_size}};
    j["eval"] = {{"points_per_axis", c.eval.points_per_axis},
                 {"slice_axes", c.eval.slice_axes},
                 {"slices", c.eval.slices}};
    j["qh"] = {{"axis_points", c.qh.axis_points}};
    j["thm1"] = {{"axis_points", c.thm1.axis_points}, {"zeta", c.thm1.zeta},
                 {"trials", c.thm1.trials}};
    j["paths"] = {{"train_points", c.paths.train_points},
                  {"reference_points", c.paths.reference_points},
                  {"reference_densities", c.paths.reference_densities},
                  {"checkpoint", c.paths.checkpoint},
                  {"history", c.paths.history}};
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << config_to_json(c).dump(2) << "\n";
}

}  // namespace fpsolve
