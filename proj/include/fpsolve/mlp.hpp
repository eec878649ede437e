#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "fpsolve/errors.hpp"
#include "fpsolve/models.hpp"
#include "fpsolve/rng.hpp"

namespace fpsolve {

/// Sigmoid feedforward network. Every layer, including the output, applies the
/// sigmoid, so the output lives in (0,1); density targets are rescaled to
/// match when needed.
struct MlpParams {
    std::vector<int> layer_sizes;  // [n, hidden..., 1]
    std::vector<Mat> weights;      // weights[l]: layer_sizes[l+1] x layer_sizes[l]
    std::vector<Vec> biases;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return weights.size(); }
};

/// Hidden widths used throughout: 16, 128, 128, 128, 16, 4 with one output
/// neuron; the input width depends on the model.
inline std::vector<int> default_layer_sizes(int input_dim) {
    return {input_dim, 16, 128, 128, 128, 16, 4, 1};
}

/// Scaled-uniform weight init (half-width sqrt(6/(fan_in+fan_out))), zero biases.
inline MlpParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw config_error("init_params: need at least two layer sizes");
    for (int s : layer_sizes) {
        if (s < 1) throw config_error("init_params: layer sizes must be positive");
    }
    RngStream rng(seed, "mlp-init");
    MlpParams p;
    p.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double half_width = std::sqrt(6.0 / (fan_in + fan_out));
        Mat w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-half_width, half_width);
        }
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vec::Zero(fan_out));
    }
    return p;
}

namespace detail {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace detail

inline double forward(const MlpParams& p, const Vec& x) {
    if (x.size() != p.input_dim()) throw config_error("forward: input dimension mismatch");
    Vec z = x;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        Vec a = p.weights[l] * z + p.biases[l];
        z.resize(a.size());
        for (Eigen::Index i = 0; i < a.size(); ++i) z[i] = detail::sigmoid(a[i]);
    }
    return z[0];
}

namespace detail {

/// Per-layer jet states of one forward pass. Values, input-Jacobians and
/// input-Hessians are kept for every layer so the reverse pass can replay the
/// chain rule; Hessians are stored one flattened n x n matrix per neuron row.
struct JetTape {
    std::vector<Vec> z;   // post-activation values, z[0] = x
    std::vector<Mat> jz;  // post-activation Jacobians wrt x, jz[0] = I
    std::vector<Mat> hz;  // post-activation flattened Hessians, hz[0] = 0
    std::vector<Vec> a;   // pre-activations per layer
    std::vector<Mat> ja;
    std::vector<Mat> ha;
};

inline void forward_jet_tape(const MlpParams& p, const Vec& x, JetTape& tape) {
    const int n = p.input_dim();
    const std::size_t L = p.num_layers();
    tape.z.resize(L + 1);
    tape.jz.resize(L + 1);
    tape.hz.resize(L + 1);
    tape.a.resize(L);
    tape.ja.resize(L);
    tape.ha.resize(L);

    tape.z[0] = x;
    tape.jz[0] = Mat::Identity(n, n);
    tape.hz[0] = Mat::Zero(n, n * n);

    for (std::size_t l = 0; l < L; ++l) {
        const Mat& w = p.weights[l];
        tape.a[l] = w * tape.z[l] + p.biases[l];
        tape.ja[l] = w * tape.jz[l];
        tape.ha[l] = w * tape.hz[l];

        const Eigen::Index m = tape.a[l].size();
        tape.z[l + 1].resize(m);
        tape.jz[l + 1].resize(m, n);
        tape.hz[l + 1].resize(m, n * n);
        Mat outer(n, n);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double s = sigmoid(tape.a[l][i]);
            const double d1 = s * (1.0 - s);
            const double d2 = d1 * (1.0 - 2.0 * s);
            tape.z[l + 1][i] = s;
            tape.jz[l + 1].row(i) = d1 * tape.ja[l].row(i);
            // H_s = d1 H_a + d2 J_a J_a^T, flattened row-wise
            const auto ja_row = tape.ja[l].row(i);
            outer.noalias() = ja_row.transpose() * ja_row;
            tape.hz[l + 1].row(i) =
                d1 * tape.ha[l].row(i) +
                d2 * Eigen::Map<const Eigen::RowVectorXd>(outer.data(), n * n);
        }
    }
}

}  // namespace detail

/// Network value with exact gradient and Hessian in the input.
inline ScalarJet forward_jet(const MlpParams& p, const Vec& x) {
    if (x.size() != p.input_dim()) throw config_error("forward_jet: input dimension mismatch");
    const int n = p.input_dim();
    detail::JetTape tape;
    detail::forward_jet_tape(p, x, tape);
    ScalarJet out;
    out.value = tape.z.back()[0];
    out.grad = tape.jz.back().row(0).transpose();
    out.hess = Eigen::Map<const Mat>(tape.hz.back().row(0).data(), n, n);
    return out;
}

/// PDE residual L u~(x, theta) of the network at x.
inline double residual(const SdeModel& model, const MlpParams& p, const Vec& x) {
    return generator_apply(model, forward_jet(p, x), x);
}

/// Gradient accumulator shaped like the parameters.
struct MlpGrads {
    std::vector<Mat> weights;
    std::vector<Vec> biases;
};

inline MlpGrads zero_grads(const MlpParams& p) {
    MlpGrads g;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        g.weights.push_back(Mat::Zero(p.weights[l].rows(), p.weights[l].cols()));
        g.biases.push_back(Vec::Zero(p.biases[l].size()));
    }
    return g;
}

namespace detail {

/// Reverse pass over the jet tape: accumulates dscale * d(residual)/d(theta)
/// into grads, where the residual seed is given as adjoints of the output jet.
inline void backprop_jet(const MlpParams& p, const JetTape& tape, double value_bar,
                         const Vec& grad_bar, const Mat& hess_bar, MlpGrads& grads) {
    const int n = p.input_dim();
    const std::size_t L = p.num_layers();

    // adjoints of the post-activation state of the current layer
    Vec zb = Vec::Zero(1);
    zb[0] = value_bar;
    Mat jzb = Mat::Zero(1, n);
    jzb.row(0) = grad_bar.transpose();
    Mat hzb = Mat::Zero(1, n * n);
    hzb.row(0) = Eigen::Map<const Eigen::RowVectorXd>(hess_bar.data(), n * n);

    Eigen::RowVectorXd hzb_row(n * n);
    for (std::size_t li = L; li-- > 0;) {
        const Eigen::Index m = tape.a[li].size();
        // sigmoid backward: adjoints wrt the pre-activation jet
        Vec ab(m);
        Mat jab(m, n), hab(m, n * n);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double s = tape.z[li + 1][i];
            const double d1 = s * (1.0 - s);
            const double d2 = d1 * (1.0 - 2.0 * s);
            const double d3 = d1 * (1.0 - 2.0 * s) * (1.0 - 2.0 * s) - 2.0 * d1 * d1;

            const auto ja_row = tape.ja[li].row(i);
            const auto ha_row = tape.ha[li].row(i);
            // rows of column-major matrices are strided: copy before mapping
            hzb_row = hzb.row(i);
            const Eigen::Map<const Mat> hbar(hzb_row.data(), n, n);

            const double j_dot = jzb.row(i).dot(ja_row);
            const double h_dot = hzb_row.dot(ha_row);
            const double quad = ja_row * hbar * ja_row.transpose();
            ab[i] = zb[i] * d1 + d2 * (j_dot + h_dot) + d3 * quad;
            jab.row(i) = d1 * jzb.row(i) + 2.0 * d2 * (ja_row * hbar);
            hab.row(i) = d1 * hzb_row;
        }
        // affine backward: parameter and input adjoints
        grads.weights[li].noalias() += ab * tape.z[li].transpose();
        grads.weights[li].noalias() += jab * tape.jz[li].transpose();
        grads.weights[li].noalias() += hab * tape.hz[li].transpose();
        grads.biases[li] += ab;
        if (li > 0) {
            zb = p.weights[li].transpose() * ab;
            jzb = p.weights[li].transpose() * jab;
            hzb = p.weights[li].transpose() * hab;
        }
    }
}

}  // namespace detail

/// Mean squared PDE residual over the batch with its exact parameter gradient,
/// computed by reverse accumulation through the second-order jet propagation.
inline std::pair<double, MlpGrads> loss_and_grad_L1(const SdeModel& model, const MlpParams& p,
                                                    const std::vector<Vec>& batch) {
    if (batch.empty()) throw config_error("loss_and_grad_L1: empty batch");
    const int n = p.input_dim();
    if (model.dim() != n) throw config_error("loss_and_grad_L1: model dimension mismatch");
    MlpGrads grads = zero_grads(p);
    double loss = 0.0;
    detail::JetTape tape;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const Vec& x : batch) {
        detail::forward_jet_tape(p, x, tape);
        const double u = tape.z.back()[0];
        const Vec grad = tape.jz.back().row(0).transpose();
        const Mat hess = Eigen::Map<const Mat>(tape.hz.back().row(0).data(), n, n);
        const double r = generator_apply(model, u, grad, hess, x);
        loss += r * r * inv_batch;

        // seed the adjoints of r = -(div f u + f . grad) + 1/2 sum S_ij hess_ij
        const double w = 2.0 * r * inv_batch;
        const double value_bar = -model.drift_divergence(x) * w;
        const Vec grad_bar = -w * model.drift(x);
        const Mat hess_bar = 0.5 * w * model.diffusion();
        detail::backprop_jet(p, tape, value_bar, grad_bar, hess_bar, grads);
    }
    return {loss, std::move(grads)};
}

/// Mean squared data misfit over the batch with its exact parameter gradient.
inline std::pair<double, MlpGrads> loss_and_grad_L2(const MlpParams& p,
                                                    const std::vector<Vec>& batch,
                                                    const std::vector<double>& targets) {
    if (batch.empty()) throw config_error("loss_and_grad_L2: empty batch");
    if (batch.size() != targets.size())
        throw config_error("loss_and_grad_L2: target count does not match batch");
    MlpGrads grads = zero_grads(p);
    double loss = 0.0;
    const std::size_t L = p.num_layers();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<Vec> z(L + 1);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        z[0] = batch[s];
        for (std::size_t l = 0; l < L; ++l) {
            Vec a = p.weights[l] * z[l] + p.biases[l];
            z[l + 1].resize(a.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) z[l + 1][i] = detail::sigmoid(a[i]);
        }
        const double diff = z[L][0] - targets[s];
        loss += diff * diff * inv_batch;

        Vec zb = Vec::Zero(1);
        zb[0] = 2.0 * diff * inv_batch;
        for (std::size_t li = L; li-- > 0;) {
            Vec ab(z[li + 1].size());
            for (Eigen::Index i = 0; i < ab.size(); ++i) {
                const double sig = z[li + 1][i];
                ab[i] = zb[i] * sig * (1.0 - sig);
            }
            grads.weights[li].noalias() += ab * z[li].transpose();
            grads.biases[li] += ab;
            if (li > 0) zb = p.weights[li].transpose() * ab;
        }
    }
    return {loss, std::move(grads)};
}

}  // namespace fpsolve
