#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "fpsolve/errors.hpp"
#include "fpsolve/grid.hpp"
#include "fpsolve/models.hpp"
#include "fpsolve/rng.hpp"

namespace fpsolve {

using SparseMat = Eigen::SparseMatrix<double>;

/// Second-order central-difference discretization of the Fokker-Planck
/// operator on the interior nodes: (N-2)^n rows (interior, row-major over
/// interior multi-indices) by N^n columns (all nodes). No boundary condition
/// is imposed; the data term supplies it.
struct OperatorMatrix {
    SparseMat matrix;
    GridSpec grid;

    std::size_t rows() const { return static_cast<std::size_t>(matrix.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(matrix.cols()); }
};

/// Result of a data-driven solve.
struct SolveReport {
    DensityField solution;
    double residual_norm = 0.0;  // ||A u||_2
    double data_misfit = 0.0;    // ||u - v||_2
    std::optional<double> discrete_l2_error;  // vs oracle, filled by the caller
};

namespace detail {

inline std::size_t interior_flat_index(const std::vector<int>& idx, int n_axes, int interior_per_axis) {
    std::size_t f = 0;
    for (int i = 0; i < n_axes; ++i) f = f * interior_per_axis + (idx[i] - 1);
    return f;
}

inline double uniform_box_size(const GridSpec& grid) {
    const double h = grid.box_size(0);
    for (int i = 1; i < grid.dim(); ++i) {
        if (std::abs(grid.box_size(i) - h) > 1e-12 * h)
            throw config_error("operation requires a uniform box size across axes");
    }
    return h;
}

}  // namespace detail

/// Assembles the interior-row discretization of
///   L u = -sum_j d/dx_j (f_j u) + 1/2 sum_jk S_jk d2u/dx_j dx_k
/// with central differences; the drift term differences the product (f_j u),
/// so drift coefficients are evaluated at the neighbour nodes.
inline OperatorMatrix assemble_operator(const SdeModel& model, const GridSpec& grid) {
    const int n = model.dim();
    if (grid.dim() != n) throw config_error("assemble_operator: grid dimension mismatch");
    const int N = grid.points_per_axis();
    const Mat& S = model.diffusion();

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(grid.num_interior() * (1 + 2 * n));

    MultiIndexRange interior(n, 1, N - 1);
    std::vector<int> nb;
    interior.for_each([&](const std::vector<int>& idx) {
        const auto row = static_cast<Eigen::Index>(detail::interior_flat_index(idx, n, N - 2));
        double center = 0.0;
        for (int j = 0; j < n; ++j) {
            const double hj = grid.box_size(j);
            nb = idx;
            nb[j] = idx[j] + 1;
            const double f_plus = model.drift(grid.node(nb))[j];
            const auto col_plus = static_cast<Eigen::Index>(grid.flat_index(nb));
            nb[j] = idx[j] - 1;
            const double f_minus = model.drift(grid.node(nb))[j];
            const auto col_minus = static_cast<Eigen::Index>(grid.flat_index(nb));

            const double diff = 0.5 * S(j, j) / (hj * hj);
            triplets.emplace_back(row, col_plus, -f_plus / (2.0 * hj) + diff);
            triplets.emplace_back(row, col_minus, f_minus / (2.0 * hj) + diff);
            center -= 2.0 * diff;

            for (int k = j + 1; k < n; ++k) {
                if (S(j, k) == 0.0) continue;
                const double coef = S(j, k) / (4.0 * hj * grid.box_size(k));
                for (int sj : {+1, -1}) {
                    for (int sk : {+1, -1}) {
                        nb = idx;
                        nb[j] += sj;
                        nb[k] += sk;
                        triplets.emplace_back(row, static_cast<Eigen::Index>(grid.flat_index(nb)),
                                              sj * sk * coef);
                    }
                }
            }
        }
        triplets.emplace_back(row, static_cast<Eigen::Index>(grid.flat_index(idx)), center);
    });

    SparseMat A(static_cast<Eigen::Index>(grid.num_interior()),
                static_cast<Eigen::Index>(grid.num_nodes()));
    A.setFromTriplets(triplets.begin(), triplets.end());
    A.makeCompressed();
    return OperatorMatrix{std::move(A), grid};
}

/// Flat indices of the boundary nodes, in row-major order.
inline std::vector<std::size_t> boundary_nodes(const GridSpec& grid) {
    std::vector<std::size_t> out;
    out.reserve(grid.num_nodes() - grid.num_interior());
    MultiIndexRange all(grid.dim(), 0, grid.points_per_axis());
    all.for_each([&](const std::vector<int>& idx) {
        if (grid.is_boundary(idx)) out.push_back(grid.flat_index(idx));
    });
    return out;
}

/// Finite-difference baseline u*: solves the square stacked system
/// [A; P0] u = [0; boundary] where P0 picks the boundary nodes. The boundary
/// argument is a full-grid vector of which only boundary entries are read.
inline DensityField solve_baseline(const OperatorMatrix& A, const std::vector<double>& boundary) {
    const GridSpec& grid = A.grid;
    if (boundary.size() != grid.num_nodes())
        throw config_error("solve_baseline: boundary vector must have one entry per grid node");

    const auto n_nodes = static_cast<Eigen::Index>(grid.num_nodes());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(A.matrix.nonZeros()) + grid.num_nodes());
    for (int k = 0; k < A.matrix.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(A.matrix, k); it; ++it) {
            triplets.emplace_back(it.row(), it.col(), it.value());
        }
    }
    Vec rhs = Vec::Zero(n_nodes);
    Eigen::Index row = A.matrix.rows();
    for (std::size_t flat : boundary_nodes(grid)) {
        triplets.emplace_back(row, static_cast<Eigen::Index>(flat), 1.0);
        rhs[row] = boundary[flat];
        ++row;
    }

    SparseMat stacked(n_nodes, n_nodes);
    stacked.setFromTriplets(triplets.begin(), triplets.end());
    stacked.makeCompressed();

    Eigen::SparseLU<SparseMat> lu;
    lu.compute(stacked);
    if (lu.info() != Eigen::Success)
        throw numeric_error("solve_baseline: stacked system [A; P0] is singular");
    Vec u = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw numeric_error("solve_baseline: solve failed");
    return DensityField(grid, std::vector<double>(u.data(), u.data() + u.size()));
}

namespace detail {

inline Vec to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Euclidean projection of v onto the null space of A (the constrained
/// problem): u = v - A^T (A A^T)^{-1} A v, via a direct SPD factorization of
/// the (N-2)^n Gram matrix.
inline SolveReport solve_constrained(const OperatorMatrix& A, const DensityField& v) {
    if (!v.grid.same_grid(A.grid)) throw config_error("solve_constrained: grid mismatch");
    const Vec vv = detail::to_vec(v.values);
    SparseMat gram = (A.matrix * SparseMat(A.matrix.transpose())).pruned();
    Eigen::SimplicialLDLT<SparseMat> ldlt;
    ldlt.compute(gram);
    if (ldlt.info() != Eigen::Success)
        throw numeric_error("solve_constrained: A A^T is rank-deficient");
    const Vec av = A.matrix * vv;
    const Vec w = ldlt.solve(av);
    if (ldlt.info() != Eigen::Success) throw numeric_error("solve_constrained: solve failed");
    const Vec u = vv - A.matrix.transpose() * w;

    SolveReport report{DensityField(A.grid, std::vector<double>(u.data(), u.data() + u.size()))};
    report.residual_norm = (A.matrix * u).norm();
    report.data_misfit = (u - vv).norm();
    return report;
}

/// Minimizer of ||A u||^2 + ||u - v||^2: the SPD solve (I + A^T A) u = v.
/// Direct factorization for small systems, conjugate gradients (tol 1e-10)
/// above the cutoff.
inline SolveReport solve_unconstrained(const OperatorMatrix& A, const DensityField& v) {
    if (!v.grid.same_grid(A.grid)) throw config_error("solve_unconstrained: grid mismatch");
    const Vec vv = detail::to_vec(v.values);
    const auto n_nodes = static_cast<Eigen::Index>(A.grid.num_nodes());
    SparseMat system = (SparseMat(A.matrix.transpose()) * A.matrix).pruned();
    SparseMat identity(n_nodes, n_nodes);
    identity.setIdentity();
    system = (system + identity).pruned();

    Vec u;
    if (A.grid.num_nodes() <= 20000) {
        Eigen::SimplicialLDLT<SparseMat> ldlt;
        ldlt.compute(system);
        if (ldlt.info() != Eigen::Success)
            throw numeric_error("solve_unconstrained: factorization failed");
        u = ldlt.solve(vv);
        if (ldlt.info() != Eigen::Success) throw numeric_error("solve_unconstrained: solve failed");
    } else {
        Eigen::ConjugateGradient<SparseMat, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(1e-10);
        cg.setMaxIterations(10 * n_nodes);
        cg.compute(system);
        u = cg.solve(vv);
        if (cg.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "solve_unconstrained: conjugate gradient did not converge ("
                << cg.iterations() << " iterations, estimated error " << cg.error() << ")";
            throw numeric_error(msg.str());
        }
    }

    SolveReport report{DensityField(A.grid, std::vector<double>(u.data(), u.data() + u.size()))};
    report.residual_norm = (A.matrix * u).norm();
    report.data_misfit = (u - vv).norm();
    return report;
}

/// Spectral diagnostic Q(h) = h^n sum_i (1 / (1 + h^-4 lambda_i))^2 over the
/// nonzero eigenvalues of A_h^T A_h, A_h = h^2 A. Dense eigendecomposition,
/// guarded by grid size.
struct QDiagnostic {
    double h = 0.0;
    double q = 0.0;
    Eigen::Index rank = 0;  // eigenvalues above the cutoff; should be (N-2)^n
};

inline QDiagnostic compute_q(const SdeModel& model, const GridSpec& grid) {
    if (grid.num_nodes() > 4000)
        throw config_error("compute_q: grid too large for dense eigendecomposition (N^n <= 4000)");
    const double h = detail::uniform_box_size(grid);
    OperatorMatrix A = assemble_operator(model, grid);
    const Mat ah = (h * h) * Mat(A.matrix);
    const Mat gram = ah.transpose() * ah;
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw numeric_error("compute_q: eigendecomposition failed");
    const Vec& lambda = eig.eigenvalues();
    const double lambda_max = lambda.maxCoeff();
    const double cutoff = 1e-12 * lambda_max;
    QDiagnostic out;
    out.h = h;
    const double h4inv = 1.0 / (h * h * h * h);
    double hn = 1.0;
    for (int i = 0; i < grid.dim(); ++i) hn *= h;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] > cutoff) {
            const double term = 1.0 / (1.0 + h4inv * lambda[i]);
            out.q += term * term;
            ++out.rank;
        }
    }
    out.q *= hn;
    return out;
}

/// One (h, E||z||^2 / E||e||^2) sample of the Theorem-1 experiment.
struct RatioPoint {
    double h = 0.0;
    double ratio = 0.0;
};

/// Noise-contraction experiment: for each grid, v = u* + e with e ~ N(0, zeta^2)
/// entrywise, z = (I + A^T A)^{-1} v - u*; reports the mean over trials of
/// ||z||^2/||e||^2. The baseline u* comes from solve_baseline with the given
/// boundary data (default: the model's exact density).
inline std::vector<RatioPoint> theorem1_ratio(
    const SdeModel& model, const std::vector<GridSpec>& grids, double zeta, int trials,
    std::uint64_t seed, std::function<double(const Vec&)> boundary_fn = nullptr) {
    if (trials < 1) throw config_error("theorem1_ratio: trials must be >= 1");
    if (!(zeta > 0.0)) throw config_error("theorem1_ratio: zeta must be positive");
    if (!boundary_fn) {
        if (!model.has_exact_solution())
            throw config_error("theorem1_ratio: no baseline u* available; supply boundary data "
                               "for models without an exact solution");
        const auto* sol = &model.exact_solution();
        boundary_fn = [sol](const Vec& x) { return sol->density(x); };
    }

    RngStream noise(seed, "thm1-noise");
    std::vector<RatioPoint> out;
    for (const GridSpec& grid : grids) {
        const double h = detail::uniform_box_size(grid);
        OperatorMatrix A = assemble_operator(model, grid);
        std::vector<double> boundary(grid.num_nodes(), 0.0);
        for (std::size_t flat : boundary_nodes(grid))
            boundary[flat] = boundary_fn(grid.node(grid.multi_index(flat)));
        DensityField ustar = solve_baseline(A, boundary);
        const Vec us = detail::to_vec(ustar.values);

        double ratio_sum = 0.0;
        for (int t = 0; t < trials; ++t) {
            Vec e(us.size());
            for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = zeta * noise.normal();
            DensityField v(grid, std::vector<double>(us.size()));
            for (Eigen::Index i = 0; i < e.size(); ++i) v.values[i] = us[i] + e[i];
            SolveReport rep = solve_unconstrained(A, v);
            const Vec z = detail::to_vec(rep.solution.values) - us;
            ratio_sum += z.squaredNorm() / e.squaredNorm();
        }
        out.push_back({h, ratio_sum / trials});
    }
    return out;
}

/// Discrete L2 error sqrt(h_1 ... h_n) ||u - oracle||_2.
inline double discrete_l2_error(const DensityField& u, const DensityField& oracle) {
    if (!u.grid.same_grid(oracle.grid)) throw config_error("discrete_l2_error: grid mismatch");
    double ss = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        const double d = u.values[i] - oracle.values[i];
        ss += d * d;
    }
    return std::sqrt(u.grid.box_volume() * ss);
}

}  // namespace fpsolve
