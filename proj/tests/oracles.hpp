#pragma once

// Test-only oracles, kept independent of the library code paths they check:
// finite differences, Simpson quadrature, and closed forms via std::erf.

#include <cmath>
#include <functional>

#include "fpsolve/grid.hpp"

namespace oracles {

using fpsolve::Mat;
using fpsolve::Vec;

/// Central finite-difference gradient of a scalar function.
template <typename F>
Vec fd_gradient(F&& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

/// Central finite-difference Hessian of a scalar function.
template <typename F>
Mat fd_hessian(F&& f, const Vec& x, double h = 1e-4) {
    const int n = static_cast<int>(x.size());
    Mat hess(n, n);
    const double f0 = f(x);
    for (int i = 0; i < n; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        hess(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
        for (int j = i + 1; j < n; ++j) {
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += h; xpp[j] += h;
            xpm[i] += h; xpm[j] -= h;
            xmp[i] -= h; xmp[j] += h;
            xmm[i] -= h; xmm[j] -= h;
            hess(i, j) = hess(j, i) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
        }
    }
    return hess;
}

/// Central finite-difference divergence of a vector field.
template <typename F>
double fd_divergence(F&& f, const Vec& x, double h = 1e-5) {
    double div = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        div += (f(xp)[i] - f(xm)[i]) / (2.0 * h);
    }
    return div;
}

/// Composite Simpson rule.
template <typename F>
double simpson(F&& f, double a, double b, int intervals = 2000) {
    if (intervals % 2 == 1) ++intervals;
    const double h = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Closed form of K = pi * int_{-1}^inf exp(-2 t^2) dt (ring2d normalization).
inline double ring2d_normalization() {
    const double pi = 3.14159265358979323846;
    return pi * std::sqrt(pi / 8.0) * (1.0 + std::erf(std::sqrt(2.0)));
}

/// Closed form of Z = pi^2 (e^{-2}/4 + sqrt(pi/8)(1+erf(sqrt(2)))) (ring4d).
inline double ring4d_normalization() {
    const double pi = 3.14159265358979323846;
    return pi * pi * (std::exp(-2.0) / 4.0 + std::sqrt(pi / 8.0) * (1.0 + std::erf(std::sqrt(2.0))));
}

/// gibbs2d normalization over [-2,2]x[-3,3]: the y-integral is Gaussian with
/// an erf closed form, the x-integral is done by Simpson.
inline double gibbs2d_normalization() {
    const double pi = 3.14159265358979323846;
    auto x_integrand = [&](double x) {
        const double m = std::pow(x, 3) / 7.0;
        const double c = std::sqrt(7.0 / 3.0);
        const double gauss = 0.5 * std::sqrt(3.0 * pi / 7.0) *
                             (std::erf(c * (3.0 - m)) + std::erf(c * (3.0 + m)));
        return std::exp(-2.0 * std::pow(x, 6) / 7.0) * gauss;
    };
    return simpson(x_integrand, -2.0, 2.0, 4000);
}

}  // namespace oracles
