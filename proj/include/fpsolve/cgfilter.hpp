#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "fpsolve/errors.hpp"
#include "fpsolve/models.hpp"
#include "fpsolve/sampler.hpp"

namespace fpsolve {

/// SDE with conditional linear structure: the state splits into an observed
/// block X_I and a hidden block X_II with
///   dX_I  = [A0(t,X_I) + A1(t,X_I) X_II] dt + Sigma_I  dW_I
///   dX_II = [a0(t,X_I) + a1(t,X_I) X_II] dt + Sigma_II dW_II
/// so that X_II given the X_I path is Gaussian.
class ConditionalLinearModel {
public:
    using VecFn = std::function<Vec(double, const Vec&)>;
    using MatFn = std::function<Mat(double, const Vec&)>;

    ConditionalLinearModel(SdeModel base, int dim_obs, VecFn A0, MatFn A1, VecFn a0, MatFn a1,
                           Mat sigma_obs, Mat sigma_hidden, bool paper_covariance_noise = false)
        : base_(std::move(base)),
          dim_obs_(dim_obs),
          dim_hidden_(base_.dim() - dim_obs),
          A0_(std::move(A0)),
          A1_(std::move(A1)),
          a0_(std::move(a0)),
          a1_(std::move(a1)),
          sigma_obs_(std::move(sigma_obs)),
          sigma_hidden_(std::move(sigma_hidden)),
          paper_covariance_noise_(paper_covariance_noise) {
        if (dim_obs_ < 1 || dim_hidden_ < 1)
            throw config_error("conditional linear model: both blocks must be non-empty");
        if (paper_covariance_noise_ && dim_obs_ != dim_hidden_)
            throw config_error("conditional linear model: the as-printed covariance noise term "
                               "needs n_I == n_II");
        const Mat obs_cov = sigma_obs_ * sigma_obs_.transpose();
        Eigen::LLT<Mat> llt(obs_cov);
        if (llt.info() != Eigen::Success)
            throw numeric_error("conditional linear model: Sigma_I Sigma_I^T is singular");
        obs_cov_inv_ = llt.solve(Mat::Identity(dim_obs_, dim_obs_));
    }

    const SdeModel& base() const { return base_; }
    int dim_obs() const { return dim_obs_; }
    int dim_hidden() const { return dim_hidden_; }
    Vec A0(double t, const Vec& x) const { return A0_(t, x); }
    Mat A1(double t, const Vec& x) const { return A1_(t, x); }
    Vec a0(double t, const Vec& x) const { return a0_(t, x); }
    Mat a1(double t, const Vec& x) const { return a1_(t, x); }
    const Mat& sigma_obs() const { return sigma_obs_; }
    const Mat& sigma_hidden() const { return sigma_hidden_; }
    const Mat& obs_cov_inv() const { return obs_cov_inv_; }
    bool paper_covariance_noise() const { return paper_covariance_noise_; }

private:
    SdeModel base_;
    int dim_obs_;
    int dim_hidden_;
    VecFn A0_;
    MatFn A1_;
    VecFn a0_;
    MatFn a1_;
    Mat sigma_obs_;
    Mat sigma_hidden_;
    Mat obs_cov_inv_;
    bool paper_covariance_noise_;
};

/// Conditional mean and covariance of the hidden block.
struct FilterState {
    Vec mean;
    Mat cov;
};

/// Explicit Euler update of the conditional mean/covariance equations, driven
/// by the observed increment dx_I. The additive covariance noise is
/// Sigma_II Sigma_II^T (the printed Sigma_I Sigma_I^T is dimensionally
/// inconsistent whenever n_I != n_II and is kept behind a compatibility flag).
inline FilterState filter_step(const ConditionalLinearModel& m, const FilterState& state,
                               const Vec& x_obs, const Vec& dx_obs, double dt, double t = 0.0) {
    if (!(dt > 0.0)) throw config_error("filter_step: dt must be positive");
    const Vec A0 = m.A0(t, x_obs);
    const Mat A1 = m.A1(t, x_obs);
    const Vec a0 = m.a0(t, x_obs);
    const Mat a1 = m.a1(t, x_obs);

    const Mat cov_a1t = state.cov * A1.transpose();              // n_II x n_I
    const Mat gain = cov_a1t * m.obs_cov_inv();                  // n_II x n_I
    const Vec innovation = dx_obs - (A0 + A1 * state.mean) * dt;

    FilterState next;
    next.mean = state.mean + (a0 + a1 * state.mean) * dt + gain * innovation;

    const Mat noise = m.paper_covariance_noise()
                          ? Mat(m.sigma_obs() * m.sigma_obs().transpose())
                          : Mat(m.sigma_hidden() * m.sigma_hidden().transpose());
    Mat dcov = a1 * state.cov + state.cov * a1.transpose() + noise -
               gain * cov_a1t.transpose();
    next.cov = state.cov + dcov * dt;
    next.cov = 0.5 * (next.cov + next.cov.transpose()).eval();

    // clamp stray negative eigenvalues to zero (they stay above -1e-10)
    Eigen::LLT<Mat> llt(next.cov);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(next.cov);
        Vec lambda = eig.eigenvalues().cwiseMax(0.0);
        next.cov = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
        next.cov = 0.5 * (next.cov + next.cov.transpose()).eval();
    }
    return next;
}

/// Gaussian density with mean/covariance of the filter state.
inline double gaussian_density(const FilterState& state, const Vec& y) {
    const int n = static_cast<int>(state.mean.size());
    if (y.size() != n) throw config_error("gaussian_density: dimension mismatch");
    Eigen::LLT<Mat> llt(state.cov);
    if (llt.info() != Eigen::Success)
        throw numeric_error("gaussian_density: covariance is not positive-definite");
    const Vec diff = y - state.mean;
    const Vec z = llt.matrixL().solve(diff);
    double log_det = 0.0;
    for (int i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
    const double log_norm = -0.5 * n * std::log(2.0 * 3.14159265358979323846) - log_det;
    return std::exp(log_norm - 0.5 * z.squaredNorm());
}

/// Densities produced by the conditional Gaussian sampler, with per-point
/// visit statistics (used for the error reports).
struct CgDensities {
    std::vector<double> densities;          // joint density estimates (NaN = never visited)
    std::vector<long> visits;               // S(j)
    std::vector<double> conditional_means;  // mean of recorded Gaussian values (NaN = never visited)
};

/// Reference densities from one long trajectory of the base model with a
/// co-integrated conditional Gaussian filter. At every discrete time with
/// |X_I(t) - y_I^j| < h per axis, the Gaussian density of the hidden block at
/// y_II^j is recorded; the joint density combines the Monte Carlo marginal of
/// the observed block with the averaged conditional density:
///   v(y_j) = sum_i v_{i,j} / (L * vol(box)),  vol(box) = prod 2 h_axis.
inline CgDensities cg_reference_densities(const ConditionalLinearModel& m,
                                          const ReferenceSet& reference, double horizon,
                                          const Vec& neighborhood, const TrajectoryConfig& cfg) {
    cfg.validate();
    const int n_obs = m.dim_obs();
    const int n_hid = m.dim_hidden();
    if (neighborhood.size() != n_obs)
        throw config_error("cg_reference_densities: neighborhood needs one half-width per "
                           "observed axis");
    if (!(neighborhood.minCoeff() > 0.0))
        throw config_error("cg_reference_densities: neighborhood half-widths must be positive");
    const long steps = static_cast<long>(std::llround(horizon / cfg.dt));
    if (steps < 1) throw config_error("cg_reference_densities: horizon shorter than one step");

    std::vector<Vec> ref_obs, ref_hid;
    ref_obs.reserve(reference.points.size());
    ref_hid.reserve(reference.points.size());
    for (const Vec& y : reference.points) {
        if (y.size() != m.base().dim())
            throw config_error("cg_reference_densities: reference point dimension mismatch");
        ref_obs.push_back(y.head(n_obs));
        ref_hid.push_back(y.tail(n_hid));
    }

    Trajectory traj(m.base(), cfg, "cg-trajectory");
    FilterState state;
    state.mean = traj.state().tail(n_hid);
    state.cov = Mat::Zero(n_hid, n_hid);

    double t = 0.0;
    auto step_filter = [&]() {
        const Vec x_obs = traj.state().head(n_obs);
        const Vec before = traj.state();
        traj.advance(1);
        const Vec dx_obs = traj.state().head(n_obs) - before.head(n_obs);
        state = filter_step(m, state, x_obs, dx_obs, cfg.dt, t);
        t += cfg.dt;
    };
    for (long i = 0; i < cfg.burn_in_steps(); ++i) step_filter();

    std::vector<long> visit_count(reference.points.size(), 0);
    std::vector<double> value_sum(reference.points.size(), 0.0);
    for (long l = 0; l < steps; ++l) {
        const Vec x_obs = traj.state().head(n_obs);
        for (std::size_t j = 0; j < ref_obs.size(); ++j) {
            bool inside = true;
            for (int k = 0; k < n_obs; ++k) {
                if (std::abs(x_obs[k] - ref_obs[j][k]) >= neighborhood[k]) {
                    inside = false;
                    break;
                }
            }
            if (inside) {
                value_sum[j] += gaussian_density(state, ref_hid[j]);
                ++visit_count[j];
            }
        }
        step_filter();
    }

    double box_volume = 1.0;
    for (int k = 0; k < n_obs; ++k) box_volume *= 2.0 * neighborhood[k];

    CgDensities out;
    out.densities.resize(reference.points.size());
    out.conditional_means.resize(reference.points.size());
    out.visits = visit_count;
    bool any_visited = false;
    for (std::size_t j = 0; j < reference.points.size(); ++j) {
        if (visit_count[j] == 0) {
            out.densities[j] = missing_density();
            out.conditional_means[j] = missing_density();
        } else {
            any_visited = true;
            out.densities[j] = value_sum[j] / (static_cast<double>(steps) * box_volume);
            out.conditional_means[j] = value_sum[j] / visit_count[j];
        }
    }
    if (!any_visited)
        throw numeric_error("cg_reference_densities: no reference point was ever visited; "
                            "increase the horizon T or the neighborhood size");
    return out;
}

/// Conditional linear decompositions of the built-in models that have one.
inline ConditionalLinearModel conditional_linear_decomposition(const SdeModel& model) {
    if (model.name() == "gibbs2d") {
        return ConditionalLinearModel(
            model, 1,
            [](double, const Vec& x) { return Vec(Vec::Constant(1, -std::pow(x[0], 5))); },
            [](double, const Vec& x) { return Mat(Mat::Constant(1, 1, x[0] * x[0])); },
            [](double, const Vec& x) { return Vec(Vec::Constant(1, std::pow(x[0], 3) / 3.0)); },
            [](double, const Vec&) { return Mat(Mat::Constant(1, 1, -7.0 / 3.0)); },
            Mat::Identity(1, 1), Mat::Identity(1, 1));
    }
    if (model.name() == "turb6d") {
        return ConditionalLinearModel(
            model, 1,
            [](double, const Vec& x) { return Vec(Vec::Constant(1, -0.1 * x[0] + 0.5)); },
            [](double, const Vec& x) { return Mat(Mat::Constant(1, 5, 0.25 * x[0])); },
            [](double, const Vec& x) { return Vec(Vec::Constant(5, -0.25 * x[0] * x[0])); },
            [](double, const Vec&) {
                Mat a1 = Mat::Zero(5, 5);
                a1.diagonal() << -0.2, -0.5, -1.0, -2.0, -5.0;
                return a1;
            },
            Mat::Constant(1, 1, 2.0),
            [] {
                Mat s = Mat::Zero(5, 5);
                s.diagonal() << 0.5, 0.2, 0.1, 0.1, 0.1;
                return s;
            }(),
            false);
    }
    throw config_error("model '" + model.name() + "' has no conditional linear decomposition");
}

}  // namespace fpsolve
