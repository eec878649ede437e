#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "fpsolve/errors.hpp"
#include "fpsolve/grid.hpp"
#include "fpsolve/models.hpp"
#include "fpsolve/rng.hpp"

namespace fpsolve {

/// Euler-Maruyama trajectory parameters. burn_in_time is discarded before any
/// sampling; internal_gap spaces retained trajectory samples so they are not
/// too close to each other.
struct TrajectoryConfig {
    double dt = 1e-3;
    double burn_in_time = 10.0;
    double internal_gap = 1e-2;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(dt > 0.0)) throw config_error("trajectory: dt must be positive");
        if (burn_in_time < 0.0) throw config_error("trajectory: burn_in_time must be >= 0");
        if (internal_gap < dt) throw config_error("trajectory: internal_gap must be >= dt");
    }

    long burn_in_steps() const { return static_cast<long>(std::llround(burn_in_time / dt)); }
    long gap_steps() const { return std::max<long>(1, std::llround(internal_gap / dt)); }
};

inline double missing_density() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

/// Collocation points, optionally carrying density estimates. A NaN density is
/// the missing-value marker for points a sampler never visited.
struct ReferenceSet {
    std::vector<Vec> points;
    std::vector<double> densities;  // empty, or one entry per point

    bool has_densities() const { return !densities.empty(); }

    void check() const {
        if (!densities.empty() && densities.size() != points.size())
            throw config_error("reference set: density count does not match point count");
    }
};

/// One Euler-Maruyama step: x + f(x) dt + sigma sqrt(dt) xi.
inline Vec em_step(const SdeModel& model, const Vec& x, double dt, RngStream& rng) {
    Vec xi(model.dim());
    for (int i = 0; i < model.dim(); ++i) xi[i] = rng.normal();
    Vec next = x + model.drift(x) * dt + std::sqrt(dt) * (model.sigma() * xi);
    if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "trajectory blow-up for model '" << model.name() << "' at state [";
        for (int i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
        msg << "]";
        throw numeric_error(msg.str());
    }
    return next;
}

/// A single sequential trajectory; state advances in-place.
class Trajectory {
public:
    Trajectory(const SdeModel& model, const TrajectoryConfig& cfg, std::string_view stream_name)
        : model_(&model), dt_(cfg.dt), rng_(cfg.seed, stream_name),
          state_(model.default_domain().midpoint()) {
        cfg.validate();
    }

    void advance(long steps) {
        for (long i = 0; i < steps; ++i) state_ = em_step(*model_, state_, dt_, rng_);
    }

    const Vec& state() const { return state_; }
    RngStream& rng() { return rng_; }

private:
    const SdeModel* model_;
    double dt_;
    RngStream rng_;
    Vec state_;
};

/// Mixture sampler for collocation points: with probability alpha the shared
/// trajectory is advanced by the internal gap and its state is taken, else the
/// point is drawn uniformly on D. Trajectory states falling outside D are kept.
inline std::vector<Vec> sample_collocation(const SdeModel& model, const Domain& domain,
                                           std::size_t count, double alpha,
                                           const TrajectoryConfig& cfg) {
    if (count < 1) throw config_error("sample_collocation: count must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw config_error("sample_collocation: alpha must be in [0,1]");
    Trajectory traj(model, cfg, "collocation-trajectory");
    traj.advance(cfg.burn_in_steps());
    RngStream choice(cfg.seed, "collocation-choice");
    RngStream uniform(cfg.seed, "collocation-uniform");

    std::vector<Vec> points;
    points.reserve(count);
    const long gap = cfg.gap_steps();
    for (std::size_t i = 0; i < count; ++i) {
        if (choice.uniform01() <= alpha) {
            traj.advance(gap);
            points.push_back(traj.state());
        } else {
            Vec x(domain.dim());
            for (int k = 0; k < domain.dim(); ++k) x[k] = uniform.uniform(domain.lower(k), domain.upper(k));
            points.push_back(std::move(x));
        }
    }
    return points;
}

/// A point snapped to its nearest grid node.
struct SnappedPoint {
    Vec point;
    std::vector<int> index;
};

/// Maps points to their nearest grid nodes, dropping duplicates (first
/// occurrence wins). Points outside D are rejected.
inline std::vector<SnappedPoint> snap_to_grid(const std::vector<Vec>& points,
                                              const GridSpec& grid) {
    std::vector<SnappedPoint> out;
    out.reserve(points.size());
    std::unordered_set<std::size_t> seen;
    for (const Vec& p : points) {
        if (!grid.domain().contains(p)) {
            std::ostringstream msg;
            msg << "snap_to_grid: point [";
            for (int i = 0; i < p.size(); ++i) msg << (i ? ", " : "") << p[i];
            msg << "] lies outside the domain";
            throw config_error(msg.str());
        }
        auto idx = grid.nearest_node_clamped(p);
        const std::size_t flat = grid.flat_index(idx);
        if (seen.insert(flat).second) out.push_back({grid.node(idx), std::move(idx)});
    }
    return out;
}

/// Histogram density estimate on the full grid from one long trajectory.
/// Every post-burn-in step contributes to L; samples with no node box are
/// dropped from the counts. Guarded to n <= 3 where the N^n array is cheap.
inline DensityField estimate_density_full_grid(const SdeModel& model, const GridSpec& grid,
                                               long steps, const TrajectoryConfig& cfg) {
    if (model.dim() > 3)
        throw config_error("estimate_density_full_grid: n > 3 needs estimate_density_split");
    if (steps < 0) throw config_error("estimate_density_full_grid: steps must be >= 0");
    Trajectory traj(model, cfg, "density-trajectory");
    traj.advance(cfg.burn_in_steps());

    std::vector<long> counts(grid.num_nodes(), 0);
    std::vector<int> idx;
    for (long l = 0; l < steps; ++l) {
        traj.advance(1);
        if (grid.nearest_node(traj.state(), idx)) ++counts[grid.flat_index(idx)];
    }
    DensityField field(grid);
    const double norm = static_cast<double>(steps) * grid.box_volume();
    if (steps > 0) {
        for (std::size_t i = 0; i < counts.size(); ++i) field.values[i] = counts[i] / norm;
    }
    return field;
}

namespace detail {

inline std::size_t half_flat_index(const std::vector<int>& idx, int from, int to, int n) {
    std::size_t f = 0;
    for (int i = from; i < to; ++i) f = f * n + idx[i];
    return f;
}

inline std::vector<int> grid_aligned_index(const GridSpec& grid, const Vec& p) {
    std::vector<int> idx(grid.dim());
    for (int i = 0; i < grid.dim(); ++i) {
        const double raw = (p[i] - grid.domain().lower(i)) / grid.box_size(i);
        const int k = static_cast<int>(std::llround(raw));
        if (std::abs(raw - k) > 1e-9 || k < 0 || k >= grid.points_per_axis()) {
            std::ostringstream msg;
            msg << "reference point not grid-aligned on axis " << i << " (offset " << raw << ")";
            throw config_error(msg.str());
        }
        idx[i] = k;
    }
    return idx;
}

/// Intersection size of two sorted index lists; writes the single common
/// element when the intersection is a singleton.
inline int intersect_singleton(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                               std::size_t& out) {
    std::size_t i = 0, j = 0;
    int found = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            out = a[i];
            if (++found > 1) return found;
            ++i;
            ++j;
        }
    }
    return found;
}

}  // namespace detail

/// Memory-light density estimate at grid-snapped reference points for even n:
/// the axes are split into two halves, each half gets an N^{n/2} array of
/// bucket membership lists, and a sample scores reference point j exactly when
/// the two membership lists it hits intersect in {j}.
inline std::vector<double> estimate_density_split(const SdeModel& model, const GridSpec& grid,
                                                  const ReferenceSet& reference, long steps,
                                                  const TrajectoryConfig& cfg) {
    const int n = model.dim();
    if (n % 2 != 0) throw config_error("estimate_density_split: dimension must be even");
    if (grid.dim() != n) throw config_error("estimate_density_split: grid dimension mismatch");
    const int half = n / 2;
    const int N = grid.points_per_axis();

    std::size_t half_nodes = 1;
    for (int i = 0; i < half; ++i) half_nodes *= static_cast<std::size_t>(N);

    // Bucket membership lists: first half_nodes entries for the leading axes,
    // the rest for the trailing axes.
    std::vector<std::vector<std::size_t>> buckets(2 * half_nodes);
    for (std::size_t j = 0; j < reference.points.size(); ++j) {
        const auto idx = detail::grid_aligned_index(grid, reference.points[j]);
        buckets[detail::half_flat_index(idx, 0, half, N)].push_back(j);
        buckets[half_nodes + detail::half_flat_index(idx, half, n, N)].push_back(j);
    }
    for (auto& b : buckets) std::sort(b.begin(), b.end());

    Trajectory traj(model, cfg, "density-trajectory");
    traj.advance(cfg.burn_in_steps());

    std::vector<long> hits(reference.points.size(), 0);
    std::vector<int> idx;
    for (long l = 0; l < steps; ++l) {
        traj.advance(1);
        if (!grid.nearest_node(traj.state(), idx)) continue;
        const auto& first = buckets[detail::half_flat_index(idx, 0, half, N)];
        const auto& second = buckets[half_nodes + detail::half_flat_index(idx, half, n, N)];
        if (first.empty() || second.empty()) continue;
        std::size_t j = 0;
        if (detail::intersect_singleton(first, second, j) == 1) ++hits[j];
    }

    std::vector<double> densities(reference.points.size(), 0.0);
    if (steps > 0) {
        const double norm = static_cast<double>(steps) * grid.box_volume();
        for (std::size_t j = 0; j < densities.size(); ++j) densities[j] = hits[j] / norm;
    }
    return densities;
}

/// Multiplies each density by an independent U([1-alpha, 1+alpha]) draw.
/// Missing values stay missing.
inline std::vector<double> inject_multiplicative_noise(std::vector<double> densities, double alpha,
                                                       RngStream& rng) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw config_error("inject_multiplicative_noise: alpha must be in [0,1)");
    for (double& v : densities) {
        const double r = rng.uniform(1.0 - alpha, 1.0 + alpha);
        if (!is_missing(v)) v *= r;
    }
    return densities;
}

}  // namespace fpsolve
