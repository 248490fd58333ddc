#pragma once

#include "surfpatch/mesh.hpp"

#include <Eigen/Sparse>

namespace surfpatch {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Discrete Laplace-Beltrami operator as the pencil (S, M): S is the
/// positive-semidefinite cotangent stiffness matrix, M the lumped
/// (barycentric) vertex areas.
struct LaplaceOperator {
    SparseMatrix stiffness;
    Eigen::VectorXd mass;

    [[nodiscard]] Eigen::Index size() const { return mass.size(); }
};

/// S_ij = -(cot a_ij + cot b_ij) / 2 over the angles opposite edge (i, j),
/// S_ii = -sum_j S_ij, M_ii = (area of incident faces) / 3.
/// Throws GeometryError for zero-area faces (< 1e-14) and isolated vertices.
LaplaceOperator build_cotangent_laplacian(const Mesh& mesh);

}  // namespace surfpatch
