#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fpsolve/grid.hpp"
#include "fpsolve/mlp.hpp"
#include "fpsolve/rng.hpp"
#include "fpsolve/sampler.hpp"

namespace fpsolve {

struct AdamHyper {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second-moment accumulators matching the parameter shapes.
struct AdamState {
    std::vector<Mat> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step = 0;
    AdamHyper hyper;
};

inline AdamState make_adam_state(const MlpParams& p, AdamHyper hyper = {}) {
    AdamState s;
    s.hyper = hyper;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        s.m_w.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        s.v_w.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        s.m_b.push_back(Vec::Zero(p.biases[l].size()));
        s.v_b.push_back(Vec::Zero(p.biases[l].size()));
    }
    return s;
}

/// One bias-corrected Adam step, in place.
inline void adam_update(MlpParams& p, const MlpGrads& g, AdamState& s) {
    if (g.weights.size() != p.num_layers())
        throw config_error("adam_update: gradient shape mismatch");
    ++s.step;
    const double b1 = s.hyper.beta1, b2 = s.hyper.beta2;
    const double mc = 1.0 - std::pow(b1, static_cast<double>(s.step));
    const double vc = 1.0 - std::pow(b2, static_cast<double>(s.step));
    const double alpha = s.hyper.step_size;
    const double eps = s.hyper.epsilon;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        s.m_w[l] = b1 * s.m_w[l] + (1.0 - b1) * g.weights[l];
        s.v_w[l] = b2 * s.v_w[l] + (1.0 - b2) * g.weights[l].cwiseProduct(g.weights[l]);
        p.weights[l].array() -=
            alpha * (s.m_w[l].array() / mc) / ((s.v_w[l].array() / vc).sqrt() + eps);
        s.m_b[l] = b1 * s.m_b[l] + (1.0 - b1) * g.biases[l];
        s.v_b[l] = b2 * s.v_b[l] + (1.0 - b2) * g.biases[l].cwiseProduct(g.biases[l]);
        p.biases[l].array() -=
            alpha * (s.m_b[l].array() / mc) / ((s.v_b[l].array() / vc).sqrt() + eps);
    }
}

struct TrainConfig {
    int batch_x = 128;
    int batch_y = 128;
    long budget = 20000;
    double l1_threshold = 1e-5;
    double l2_threshold = 1e-5;
    std::uint64_t seed = 0;
    bool rescale = false;       // divide targets by their max so the maximum is 1
    double smoothing_decay = 0.99;
    AdamHyper adam;

    void validate(std::size_t n_train, std::size_t n_ref) const {
        if (batch_x < 1 || static_cast<std::size_t>(batch_x) > n_train)
            throw config_error("train: batch_x must be in [1, |training set|]");
        if (batch_y < 1 || static_cast<std::size_t>(batch_y) > n_ref)
            throw config_error("train: batch_y must be in [1, |reference set|]");
        if (budget < 0) throw config_error("train: budget must be >= 0");
    }
};

struct TrainResult {
    MlpParams params;
    std::vector<std::array<double, 2>> history;  // per-iteration (L1, L2)
    bool converged = false;
    long iterations = 0;
    double target_scale = 1.0;  // multiply network outputs by this to undo rescaling
};

namespace detail {

/// Endless shuffled batch source over indices 0..n-1 (reshuffles on wrap).
class BatchCursor {
public:
    BatchCursor(std::size_t n, std::uint64_t seed, std::string_view name) : rng_(seed, name) {
        idx_.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx_[i] = i;
        rng_.shuffle(idx_);
    }

    void fill(std::size_t count, std::vector<std::size_t>& out) {
        out.clear();
        for (std::size_t i = 0; i < count; ++i) {
            if (pos_ == idx_.size()) {
                rng_.shuffle(idx_);
                pos_ = 0;
            }
            out.push_back(idx_[pos_++]);
        }
    }

private:
    RngStream rng_;
    std::vector<std::size_t> idx_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Alternating mini-batch training of L1 (PDE residual over the training set)
/// and L2 (data misfit over the reference set), each with its own Adam state
/// and its own shuffling stream. Stops when the exponentially smoothed losses
/// are both under their thresholds, or when the budget runs out (then the
/// best-so-far parameters are returned with converged = false).
inline TrainResult train_double_shuffle(const SdeModel& model, MlpParams params,
                                        const std::vector<Vec>& train_points,
                                        const ReferenceSet& reference, const TrainConfig& cfg) {
    if (train_points.empty()) throw config_error("train: empty training set");
    if (!reference.has_densities())
        throw config_error("train: reference set carries no densities");
    reference.check();

    // missing-density markers are excluded up front
    std::vector<Vec> ref_points;
    std::vector<double> ref_values;
    for (std::size_t i = 0; i < reference.points.size(); ++i) {
        if (!is_missing(reference.densities[i])) {
            ref_points.push_back(reference.points[i]);
            ref_values.push_back(reference.densities[i]);
        }
    }
    if (ref_points.empty()) throw config_error("train: every reference density is missing");
    cfg.validate(train_points.size(), ref_points.size());

    TrainResult result;
    result.target_scale = 1.0;
    if (cfg.rescale) {
        double vmax = 0.0;
        for (double v : ref_values) vmax = std::max(vmax, v);
        if (!(vmax > 0.0)) throw config_error("train: rescaling needs a positive maximum target");
        for (double& v : ref_values) v /= vmax;
        result.target_scale = vmax;
    }

    // iteration 0: evaluate both losses once so already-converged inputs
    // return before any update
    auto full_l1 = loss_and_grad_L1(model, params, train_points);
    auto full_l2 = loss_and_grad_L2(params, ref_points, ref_values);
    double smooth_l1 = full_l1.first;
    double smooth_l2 = full_l2.first;
    result.history.push_back({full_l1.first, full_l2.first});
    if (smooth_l1 < cfg.l1_threshold && smooth_l2 < cfg.l2_threshold) {
        result.params = std::move(params);
        result.converged = true;
        return result;
    }

    detail::BatchCursor cursor_x(train_points.size(), cfg.seed, "shuffle-x");
    detail::BatchCursor cursor_y(ref_points.size(), cfg.seed, "shuffle-y");
    AdamState adam_x = make_adam_state(params, cfg.adam);
    AdamState adam_y = make_adam_state(params, cfg.adam);

    MlpParams best = params;
    double best_score = smooth_l1 + smooth_l2;

    std::vector<std::size_t> batch_idx;
    std::vector<Vec> batch_points;
    std::vector<double> batch_values;
    const double decay = cfg.smoothing_decay;

    for (long iter = 1; iter <= cfg.budget; ++iter) {
        cursor_x.fill(cfg.batch_x, batch_idx);
        batch_points.clear();
        for (std::size_t i : batch_idx) batch_points.push_back(train_points[i]);
        auto [l1, g1] = loss_and_grad_L1(model, params, batch_points);
        adam_update(params, g1, adam_x);

        cursor_y.fill(cfg.batch_y, batch_idx);
        batch_points.clear();
        batch_values.clear();
        for (std::size_t i : batch_idx) {
            batch_points.push_back(ref_points[i]);
            batch_values.push_back(ref_values[i]);
        }
        auto [l2, g2] = loss_and_grad_L2(params, batch_points, batch_values);
        adam_update(params, g2, adam_y);

        result.history.push_back({l1, l2});
        smooth_l1 = decay * smooth_l1 + (1.0 - decay) * l1;
        smooth_l2 = decay * smooth_l2 + (1.0 - decay) * l2;
        result.iterations = iter;

        if (smooth_l1 + smooth_l2 < best_score) {
            best_score = smooth_l1 + smooth_l2;
            best = params;
        }
        if (smooth_l1 < cfg.l1_threshold && smooth_l2 < cfg.l2_threshold) {
            result.converged = true;
            result.params = std::move(params);
            return result;
        }
    }
    result.converged = false;
    result.params = std::move(best);
    return result;
}

/// Network values at every node of a grid (the grid dimension must match the
/// network input).
inline DensityField evaluate_on_grid(const MlpParams& p, const GridSpec& grid) {
    if (grid.dim() != p.input_dim())
        throw config_error("evaluate_on_grid: grid dimension does not match the network input");
    return sample_on_grid(grid, [&](const Vec& x) { return forward(p, x); });
}

/// Two-dimensional slice through a higher-dimensional network: axes vary_x and
/// vary_y run over the 2D grid, every other coordinate is pinned to `fixed`.
inline DensityField evaluate_slice(const MlpParams& p, const GridSpec& grid2d, int vary_x,
                                   int vary_y, const Vec& fixed) {
    const int n = p.input_dim();
    if (grid2d.dim() != 2) throw config_error("evaluate_slice: slice grid must be 2D");
    if (fixed.size() != n) throw config_error("evaluate_slice: fixed point must be full-dimensional");
    if (vary_x < 0 || vary_x >= n || vary_y < 0 || vary_y >= n || vary_x == vary_y)
        throw config_error("evaluate_slice: invalid slice axes");
    Vec x = fixed;
    return sample_on_grid(grid2d, [&](const Vec& p2) {
        x[vary_x] = p2[0];
        x[vary_y] = p2[1];
        return forward(p, x);
    });
}

}  // namespace fpsolve
