#pragma once

#include "surfpatch/laplacian.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace surfpatch {

/// Ascending generalized eigenpairs of (S, M) with M-orthonormal vectors.
struct EigenBasis {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;  // n x k, column i pairs with eigenvalues[i]

    [[nodiscard]] Eigen::Index count() const { return eigenvalues.size(); }
};

class EigenSolveError : public std::runtime_error {
public:
    EigenSolveError(const std::string& what, double worst_residual)
        : std::runtime_error(what), worst_residual_(worst_residual) {}
    [[nodiscard]] double worst_residual() const { return worst_residual_; }

private:
    double worst_residual_;
};

struct EigenSolveOptions {
    std::uint64_t seed = 0;
    double tolerance = 1e-10;        // target relative residual
    double accept_tolerance = 1e-8;  // worst residual still accepted at budget exhaustion
    // Both tolerances are raised to the attainable floor 512 eps max_i(S_ii / M_ii)
    // on badly graded meshes.
    Eigen::Index block_size = 8;     // >= largest eigenvalue multiplicity expected
    Eigen::Index dense_threshold = 160;
};

/// ||S phi - lambda M phi|| / ||M phi|| for one pair.
double eigen_residual(const LaplaceOperator& op, double lambda, const Eigen::VectorXd& phi);

/// k algebraically smallest eigenpairs. Uses shift-invert block Lanczos with
/// full M-reorthogonalization and a Rayleigh-Ritz extraction; problems with
/// n <= dense_threshold go to the dense solver.
EigenBasis solve_eigenpairs(const LaplaceOperator& op, Eigen::Index k, const EigenSolveOptions& options = {});

/// Dense reference solve through M^-1/2 S M^-1/2. O(n^3); meant for small n.
EigenBasis solve_eigenpairs_dense(const LaplaceOperator& op, Eigen::Index k);

}  // namespace surfpatch
