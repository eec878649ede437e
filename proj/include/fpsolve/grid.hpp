#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fpsolve {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Rectangular numerical domain D = prod [a_i, b_i].
struct Domain {
    std::vector<std::array<double, 2>> bounds;

    explicit Domain(std::vector<std::array<double, 2>> b) : bounds(std::move(b)) {
        for (const auto& [lo, hi] : bounds) {
            if (!(lo < hi)) throw std::invalid_argument("Domain: every axis needs a < b");
        }
    }

    int dim() const { return static_cast<int>(bounds.size()); }
    double lower(int axis) const { return bounds[axis][0]; }
    double upper(int axis) const { return bounds[axis][1]; }
    double length(int axis) const { return bounds[axis][1] - bounds[axis][0]; }

    bool contains(const Vec& x) const {
        for (int i = 0; i < dim(); ++i) {
            if (x[i] < lower(i) || x[i] > upper(i)) return false;
        }
        return true;
    }

    Vec midpoint() const {
        Vec m(dim());
        for (int i = 0; i < dim(); ++i) m[i] = 0.5 * (lower(i) + upper(i));
        return m;
    }
};

/// Uniform rectangular grid with N points per axis: node (k_1,...,k_n) sits at
/// a_i + k_i * h_i, h_i = (b_i - a_i)/N, k_i = 0..N-1. Flat indices are
/// row-major (last axis fastest), matching the bucket numbering of the split
/// density sampler.
class GridSpec {
public:
    GridSpec(Domain domain, int points_per_axis)
        : domain_(std::move(domain)), n_(points_per_axis) {
        if (n_ < 3) throw std::invalid_argument("GridSpec: need at least 3 points per axis");
        h_.resize(domain_.dim());
        for (int i = 0; i < domain_.dim(); ++i) h_[i] = domain_.length(i) / n_;
    }

    const Domain& domain() const { return domain_; }
    int dim() const { return domain_.dim(); }
    int points_per_axis() const { return n_; }
    double box_size(int axis) const { return h_[axis]; }

    /// Product of per-axis box sizes (the n-dimensional box volume).
    double box_volume() const {
        double v = 1.0;
        for (double h : h_) v *= h;
        return v;
    }

    std::size_t num_nodes() const { return ipow(n_, dim()); }
    std::size_t num_interior() const { return ipow(n_ - 2, dim()); }

    Vec node(const std::vector<int>& idx) const {
        Vec x(dim());
        for (int i = 0; i < dim(); ++i) x[i] = domain_.lower(i) + idx[i] * h_[i];
        return x;
    }

    std::size_t flat_index(const std::vector<int>& idx) const {
        std::size_t f = 0;
        for (int i = 0; i < dim(); ++i) f = f * n_ + idx[i];
        return f;
    }

    std::vector<int> multi_index(std::size_t flat) const {
        std::vector<int> idx(dim());
        for (int i = dim() - 1; i >= 0; --i) {
            idx[i] = static_cast<int>(flat % n_);
            flat /= n_;
        }
        return idx;
    }

    /// Multi-index of the node whose box contains x (nearest-node rounding).
    /// Returns false when some axis rounds outside 0..N-1; such points do not
    /// belong to any node box and are treated as outside the counting region.
    bool nearest_node(const Vec& x, std::vector<int>& idx) const {
        idx.resize(dim());
        for (int i = 0; i < dim(); ++i) {
            const int k = static_cast<int>(std::floor((x[i] - domain_.lower(i)) / h_[i] + 0.5));
            if (k < 0 || k >= n_) return false;
            idx[i] = k;
        }
        return true;
    }

    /// Nearest node among the existing ones (clamped), for snapping points of D.
    std::vector<int> nearest_node_clamped(const Vec& x) const {
        std::vector<int> idx(dim());
        for (int i = 0; i < dim(); ++i) {
            int k = static_cast<int>(std::floor((x[i] - domain_.lower(i)) / h_[i] + 0.5));
            idx[i] = std::min(std::max(k, 0), n_ - 1);
        }
        return idx;
    }

    bool is_boundary(const std::vector<int>& idx) const {
        for (int i = 0; i < dim(); ++i) {
            if (idx[i] == 0 || idx[i] == n_ - 1) return true;
        }
        return false;
    }

    bool same_grid(const GridSpec& other) const {
        if (n_ != other.n_ || dim() != other.dim()) return false;
        for (int i = 0; i < dim(); ++i) {
            if (domain_.lower(i) != other.domain_.lower(i) ||
                domain_.upper(i) != other.domain_.upper(i))
                return false;
        }
        return true;
    }

private:
    static std::size_t ipow(int base, int exp) {
        std::size_t r = 1;
        for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
        return r;
    }

    Domain domain_;
    int n_;
    std::vector<double> h_;
};

/// Iterates multi-indices of an n-dimensional lattice with per-axis range
/// [lo, hi), in row-major order.
class MultiIndexRange {
public:
    MultiIndexRange(int dim, int lo, int hi) : dim_(dim), lo_(lo), hi_(hi) {}

    template <typename F>
    void for_each(F&& f) const {
        std::vector<int> idx(dim_, lo_);
        if (lo_ >= hi_) return;
        while (true) {
            f(idx);
            int axis = dim_ - 1;
            while (axis >= 0) {
                if (++idx[axis] < hi_) break;
                idx[axis] = lo_;
                --axis;
            }
            if (axis < 0) break;
        }
    }

private:
    int dim_, lo_, hi_;
};

/// Grid-sampled scalar field (densities at all N^n nodes, row-major).
struct DensityField {
    GridSpec grid;
    std::vector<double> values;

    DensityField(GridSpec g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
        if (values.size() != grid.num_nodes())
            throw std::invalid_argument("DensityField: value count does not match grid");
    }

    explicit DensityField(GridSpec g) : grid(std::move(g)), values(grid.num_nodes(), 0.0) {}

    double& at(const std::vector<int>& idx) { return values[grid.flat_index(idx)]; }
    double at(const std::vector<int>& idx) const { return values[grid.flat_index(idx)]; }
};

/// Samples a point function onto every node of a grid.
template <typename F>
DensityField sample_on_grid(const GridSpec& grid, F&& f) {
    DensityField field(grid);
    MultiIndexRange range(grid.dim(), 0, grid.points_per_axis());
    range.for_each([&](const std::vector<int>& idx) {
        field.values[grid.flat_index(idx)] = f(grid.node(idx));
    });
    return field;
}

}  // namespace fpsolve
