#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fpsolve/grid.hpp"

namespace fpsolve {

/// Value, gradient and Hessian of a scalar function at a point.
struct ScalarJet {
    double value = 0.0;
    Vec grad;
    Mat hess;
};

namespace quadrature {

/// Nodes/weights of the 8-point Gauss-Legendre rule on [-1, 1].
inline const std::array<double, 8>& gl8_nodes() {
    static const std::array<double, 8> x = {
        -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
        0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
    return x;
}

inline const std::array<double, 8>& gl8_weights() {
    static const std::array<double, 8> w = {
        0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
        0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
    return w;
}

/// Composite 8-point Gauss-Legendre on [a, b] split into `segments` panels.
template <typename F>
double integrate_1d(F&& f, double a, double b, int segments = 16) {
    const double w = (b - a) / segments;
    double total = 0.0;
    for (int s = 0; s < segments; ++s) {
        const double mid = a + (s + 0.5) * w;
        for (int q = 0; q < 8; ++q) {
            total += gl8_weights()[q] * f(mid + 0.5 * w * gl8_nodes()[q]);
        }
    }
    return total * 0.5 * w;
}

/// Tensor-product composite Gauss-Legendre over a rectangular domain.
/// Used for normalization constants up to n = 4.
template <typename F>
double integrate_nd(F&& f, const Domain& domain, int segments_per_axis = 8) {
    const int n = domain.dim();
    const int per_axis = 8 * segments_per_axis;
    std::vector<std::vector<double>> nodes(n), weights(n);
    for (int i = 0; i < n; ++i) {
        const double w = domain.length(i) / segments_per_axis;
        for (int s = 0; s < segments_per_axis; ++s) {
            const double mid = domain.lower(i) + (s + 0.5) * w;
            for (int q = 0; q < 8; ++q) {
                nodes[i].push_back(mid + 0.5 * w * gl8_nodes()[q]);
                weights[i].push_back(0.5 * w * gl8_weights()[q]);
            }
        }
    }
    double total = 0.0;
    Vec x(n);
    std::vector<int> idx(n, 0);
    while (true) {
        double wprod = 1.0;
        for (int i = 0; i < n; ++i) {
            x[i] = nodes[i][idx[i]];
            wprod *= weights[i][idx[i]];
        }
        total += wprod * f(x);
        int axis = n - 1;
        while (axis >= 0) {
            if (++idx[axis] < per_axis) break;
            idx[axis] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
    return total;
}

}  // namespace quadrature

/// Closed-form invariant density u(x) = exp(-2 V(x)/sigma^2) / normalization,
/// available for the gradient-flow benchmark systems. The normalization is
/// computed once over the model's numerical domain; the domain is chosen so
/// the mass outside it is below 1e-8.
class ExactSolution {
public:
    ExactSolution(std::function<double(const Vec&)> potential_value,
                  std::function<ScalarJet(const Vec&)> potential_jet, double sigma_sq,
                  Domain domain, int quad_segments = 12)
        : potential_value_(std::move(potential_value)),
          potential_jet_(std::move(potential_jet)),
          two_over_sigma_sq_(2.0 / sigma_sq),
          domain_(std::move(domain)) {
        normalization_ = quadrature::integrate_nd(
            [&](const Vec& x) { return unnormalized_density(x); }, domain_, quad_segments);
        if (!(normalization_ > 0.0) || !std::isfinite(normalization_))
            throw std::runtime_error("ExactSolution: normalization is not a positive finite number");
    }

    double unnormalized_density(const Vec& x) const {
        return std::exp(-two_over_sigma_sq_ * potential_value_(x));
    }

    double density(const Vec& x) const { return unnormalized_density(x) / normalization_; }

    /// Density with exact gradient and Hessian:
    ///   grad u = -c u grad V,   hess u = u (c^2 grad V grad V^T - c hess V),
    /// with c = 2/sigma^2.
    ScalarJet jet(const Vec& x) const {
        const ScalarJet v = potential_jet_(x);
        const double c = two_over_sigma_sq_;
        ScalarJet out;
        out.value = std::exp(-c * v.value) / normalization_;
        out.grad = -c * out.value * v.grad;
        out.hess = out.value * (c * c * v.grad * v.grad.transpose() - c * v.hess);
        return out;
    }

    double normalization() const { return normalization_; }
    const Domain& domain() const { return domain_; }
    ScalarJet potential(const Vec& x) const { return potential_jet_(x); }

private:
    std::function<double(const Vec&)> potential_value_;
    std::function<ScalarJet(const Vec&)> potential_jet_;
    double two_over_sigma_sq_;
    Domain domain_;
    double normalization_;
};

/// An autonomous SDE dX = f(X) dt + sigma dW with constant noise coefficient.
/// The drift divergence is supplied analytically so generator evaluations stay
/// exact inside training loops.
class SdeModel {
public:
    SdeModel(std::string name, int dim, std::function<Vec(const Vec&)> drift,
             std::function<double(const Vec&)> drift_divergence, Mat sigma, Domain default_domain,
             std::shared_ptr<const ExactSolution> exact = nullptr)
        : name_(std::move(name)),
          dim_(dim),
          drift_(std::move(drift)),
          drift_divergence_(std::move(drift_divergence)),
          sigma_(std::move(sigma)),
          default_domain_(std::move(default_domain)),
          exact_(std::move(exact)) {
        if (sigma_.rows() != dim_ || sigma_.cols() != dim_)
            throw std::invalid_argument("SdeModel: sigma must be dim x dim");
        diffusion_ = sigma_.transpose() * sigma_;
        if (!diffusion_.isApprox(diffusion_.transpose(), 1e-14))
            throw std::invalid_argument("SdeModel: diffusion must be symmetric");
    }

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    Vec drift(const Vec& x) const { return drift_(x); }
    double drift_divergence(const Vec& x) const { return drift_divergence_(x); }
    const Mat& sigma() const { return sigma_; }
    const Mat& diffusion() const { return diffusion_; }
    const Domain& default_domain() const { return default_domain_; }

    bool has_exact_solution() const { return exact_ != nullptr; }
    const ExactSolution& exact_solution() const {
        if (!exact_) throw std::runtime_error("model '" + name_ + "' has no exact solution");
        return *exact_;
    }

private:
    std::string name_;
    int dim_;
    std::function<Vec(const Vec&)> drift_;
    std::function<double(const Vec&)> drift_divergence_;
    Mat sigma_;
    Mat diffusion_;
    Domain default_domain_;
    std::shared_ptr<const ExactSolution> exact_;
};

/// Fokker-Planck generator applied to a function jet at x, for constant
/// diffusion:  L u = -sum_i (div f_i u + f_i du/dx_i) + 1/2 sum_ij S_ij d2u/dx_i dx_j.
inline double generator_apply(const SdeModel& model, double u, const Vec& grad, const Mat& hess,
                              const Vec& x) {
    const int n = model.dim();
    if (grad.size() != n || hess.rows() != n || hess.cols() != n || x.size() != n)
        throw std::invalid_argument("generator_apply: dimension mismatch");
    const Vec f = model.drift(x);
    double out = -(model.drift_divergence(x) * u + f.dot(grad));
    out += 0.5 * model.diffusion().cwiseProduct(hess).sum();
    return out;
}

inline double generator_apply(const SdeModel& model, const ScalarJet& jet, const Vec& x) {
    return generator_apply(model, jet.value, jet.grad, jet.hess, x);
}

inline double exact_density(const ExactSolution& sol, const Vec& x) { return sol.density(x); }
inline ScalarJet exact_jet(const ExactSolution& sol, const Vec& x) { return sol.jet(x); }

namespace detail {

inline Domain box(double lo, double hi, int n) {
    std::vector<std::array<double, 2>> b(n, {lo, hi});
    return Domain(std::move(b));
}

inline SdeModel make_ring2d() {
    auto drift = [](const Vec& x) {
        const double s = x[0] * x[0] + x[1] * x[1] - 1.0;
        Vec f(2);
        f[0] = -4.0 * x[0] * s + x[1];
        f[1] = -4.0 * x[1] * s - x[0];
        return f;
    };
    auto div = [](const Vec& x) {
        const double s = x[0] * x[0] + x[1] * x[1] - 1.0;
        return -8.0 * s - 8.0 * (x[0] * x[0] + x[1] * x[1]);
    };
    auto value = [](const Vec& x) {
        const double s = x[0] * x[0] + x[1] * x[1] - 1.0;
        return s * s;
    };
    auto potential = [](const Vec& x) {
        const double s = x[0] * x[0] + x[1] * x[1] - 1.0;
        ScalarJet j;
        j.value = s * s;
        j.grad = 4.0 * s * x;
        j.hess = 8.0 * x * x.transpose() + 4.0 * s * Mat::Identity(2, 2);
        return j;
    };
    Domain d = box(-2.0, 2.0, 2);
    static const auto exact = std::make_shared<const ExactSolution>(value, potential, 1.0, d);
    return SdeModel("ring2d", 2, drift, div, Mat::Identity(2, 2), d, exact);
}

inline SdeModel make_gibbs2d() {
    auto drift = [](const Vec& x) {
        Vec f(2);
        f[0] = x[0] * x[0] * x[1] - std::pow(x[0], 5);
        f[1] = std::pow(x[0], 3) / 3.0 - 7.0 * x[1] / 3.0;
        return f;
    };
    auto div = [](const Vec& x) {
        return 2.0 * x[0] * x[1] - 5.0 * std::pow(x[0], 4) - 7.0 / 3.0;
    };
    // V = (x^3 - y)^2/6 + y^2
    auto value = [](const Vec& x) {
        const double w = std::pow(x[0], 3) - x[1];
        return w * w / 6.0 + x[1] * x[1];
    };
    auto potential = [](const Vec& x) {
        const double w = std::pow(x[0], 3) - x[1];
        ScalarJet j;
        j.value = w * w / 6.0 + x[1] * x[1];
        j.grad = Vec(2);
        j.grad[0] = w * x[0] * x[0];
        j.grad[1] = -w / 3.0 + 2.0 * x[1];
        j.hess = Mat(2, 2);
        j.hess(0, 0) = 3.0 * std::pow(x[0], 4) + 2.0 * x[0] * w;
        j.hess(0, 1) = j.hess(1, 0) = -x[0] * x[0];
        j.hess(1, 1) = 7.0 / 3.0;
        return j;
    };
    Domain d({{-2.0, 2.0}, {-3.0, 3.0}});
    static const auto exact = std::make_shared<const ExactSolution>(value, potential, 1.0, d);
    return SdeModel("gibbs2d", 2, drift, div, Mat::Identity(2, 2), d, exact);
}

inline SdeModel make_ring4d() {
    auto drift = [](const Vec& x) {
        const double s = x.squaredNorm() - 1.0;
        Vec f = -4.0 * s * x;
        f[0] += x[1];
        f[1] -= x[0];
        return f;
    };
    auto div = [](const Vec& x) {
        const double s = x.squaredNorm() - 1.0;
        return -16.0 * s - 8.0 * x.squaredNorm();
    };
    auto value = [](const Vec& x) {
        const double s = x.squaredNorm() - 1.0;
        return s * s;
    };
    auto potential = [](const Vec& x) {
        const double s = x.squaredNorm() - 1.0;
        ScalarJet j;
        j.value = s * s;
        j.grad = 4.0 * s * x;
        j.hess = 8.0 * x * x.transpose() + 4.0 * s * Mat::Identity(4, 4);
        return j;
    };
    Domain d = box(-2.0, 2.0, 4);
    // 10 panels per axis keeps the one-off 4D normalization under a second.
    static const auto exact = std::make_shared<const ExactSolution>(value, potential, 1.0, d, 10);
    return SdeModel("ring4d", 4, drift, div, Mat::Identity(4, 4), d, exact);
}

inline SdeModel make_turb6d() {
    // Conceptual turbulence model: one observed mode coupled to five damped
    // modes, conditionally linear in (Y1..Y5).
    static const std::array<double, 5> damping = {0.2, 0.5, 1.0, 2.0, 5.0};
    static const std::array<double, 6> noise = {2.0, 0.5, 0.2, 0.1, 0.1, 0.1};
    auto drift = [](const Vec& x) {
        Vec f(6);
        double ysum = 0.0;
        for (int i = 1; i < 6; ++i) ysum += x[i];
        f[0] = -0.1 * x[0] + 0.5 + 0.25 * x[0] * ysum;
        for (int i = 0; i < 5; ++i) f[i + 1] = -damping[i] * x[i + 1] - 0.25 * x[0] * x[0];
        return f;
    };
    auto div = [](const Vec& x) {
        double ysum = 0.0;
        for (int i = 1; i < 6; ++i) ysum += x[i];
        return -0.1 + 0.25 * ysum - (0.2 + 0.5 + 1.0 + 2.0 + 5.0);
    };
    Mat sigma = Mat::Zero(6, 6);
    for (int i = 0; i < 6; ++i) sigma(i, i) = noise[i];
    Domain d({{-3.0, 3.0}, {-3.0, 0.0}, {-1.5, 0.5}, {-0.5, 0.5}, {-0.5, 0.5}, {-0.5, 0.5}});
    return SdeModel("turb6d", 6, drift, div, sigma, d);
}

}  // namespace detail

/// Built-in benchmark systems, selected by name.
inline SdeModel make_builtin(const std::string& name) {
    if (name == "ring2d") return detail::make_ring2d();
    if (name == "gibbs2d") return detail::make_gibbs2d();
    if (name == "ring4d") return detail::make_ring4d();
    if (name == "turb6d") return detail::make_turb6d();
    throw std::invalid_argument("unknown model '" + name + "' (expected ring2d, gibbs2d, ring4d or turb6d)");
}

}  // namespace fpsolve
