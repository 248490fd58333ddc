#pragma once

#include "surfpatch/eigensolver.hpp"

#include <filesystem>
#include <iosfwd>

namespace surfpatch {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Scaled heat kernel signature: one row per vertex, one column per
/// diffusion time. Every column has unit M-weighted mean.
struct HksMatrix {
    RowMatrix features;      // n x d
    Eigen::VectorXd times;   // d

    [[nodiscard]] Eigen::Index vertex_count() const { return features.rows(); }
    [[nodiscard]] Eigen::Index width() const { return features.cols(); }
};

/// Diffusion times: d values log-spaced over [4 ln10 / lambda_k, 4 ln10 / lambda_2].
Eigen::VectorXd hks_times(const EigenBasis& basis, Eigen::Index d);

/// Up to k smallest eigenpairs, cut so the last kept eigenvalue does not share
/// a degenerate cluster with the first dropped one. Keeps at least 2 pairs.
EigenBasis solve_hks_basis(const LaplaceOperator& op, Eigen::Index k, const EigenSolveOptions& options = {});

/// Throws GeometryError when lambda_2 <= 1e-12 (disconnected surface).
HksMatrix compute_hks(const EigenBasis& basis, const Eigen::VectorXd& mass, Eigen::Index d = 128);

/// Euclidean distance between two feature rows.
double hks_distance(const HksMatrix& h, Eigen::Index i, Eigen::Index j);

/// Full spectral heat kernel h_t(x, y) = sum_i exp(-lambda_i t) phi_i(x) phi_i(y),
/// including the constant mode.
double heat_kernel(const EigenBasis& basis, double t, Eigen::Index x, Eigen::Index y);

/// Little-endian "HKS1" | u32 n | u32 d | d f64 times | n*d f64 row-major.
void write_hks(std::ostream& out, const HksMatrix& h);
HksMatrix read_hks(std::istream& in);

}  // namespace surfpatch
