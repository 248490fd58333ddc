#include "surfpatch/eigensolver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace surfpatch {

double eigen_residual(const LaplaceOperator& op, double lambda, const Eigen::VectorXd& phi) {
    const Eigen::VectorXd m_phi = op.mass.cwiseProduct(phi);
    const Eigen::VectorXd r = op.stiffness * phi - lambda * m_phi;
    const double denom = m_phi.norm();
    return denom > 0.0 ? r.norm() / denom : r.norm();
}

namespace {

void check_request(const LaplaceOperator& op, Eigen::Index k) {
    if (k < 1 || k > op.size() - 1) {
        throw std::invalid_argument("eigensolve: need 1 <= k <= n-1 (k=" + std::to_string(k) +
                                    ", n=" + std::to_string(op.size()) + ")");
    }
}

void canonicalize(EigenBasis& basis) {
    for (Eigen::Index c = 0; c < basis.eigenvectors.cols(); ++c) {
        auto col = basis.eigenvectors.col(c);
        const double scale = col.cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < col.size(); ++r) {
            if (std::abs(col[r]) > 1e-8 * scale) {
                if (col[r] < 0.0) col = -col;
                break;
            }
        }
        basis.eigenvalues[c] = std::max(0.0, basis.eigenvalues[c]);
    }
}

class BlockLanczos {
public:
    BlockLanczos(const LaplaceOperator& op, const EigenSolveOptions& options)
        : op_(op), options_(options), rng_(options.seed) {
        const double area = op.mass.sum();
        shift_ = -0.1 / area;
        SparseMatrix shifted = op.stiffness;
        for (Eigen::Index i = 0; i < op.size(); ++i) shifted.coeffRef(i, i) -= shift_ * op.mass[i];
        solver_.compute(shifted);
        // Residuals below ~eps * ||M^-1 S|| are not attainable in double precision.
        double ratio = 0.0;
        for (Eigen::Index i = 0; i < op.size(); ++i) ratio = std::max(ratio, op.stiffness.coeff(i, i) / op.mass[i]);
        floor_ = 256.0 * std::numeric_limits<double>::epsilon() * 2.0 * ratio;
        if (solver_.info() != Eigen::Success) {
            throw EigenSolveError("eigensolve: shifted factorization failed", INFINITY);
        }
    }

    EigenBasis run(Eigen::Index k) {
        const Eigen::Index n = op_.size();
        const Eigen::Index b = std::min(options_.block_size, n);
        const Eigen::Index cap = std::min(n, std::max<Eigen::Index>(4 * k, k + 24 * b));
        basis_.resize(n, 0);

        Eigen::MatrixXd block = random_block(b);
        append_orthonormalized(block);
        Eigen::Index next_check = k + b;
        double worst = INFINITY;
        while (true) {
            const Eigen::Index m = basis_.cols();
            if (m >= next_check || m >= cap) {
                EigenBasis result = rayleigh_ritz(k, worst);
                if (worst <= std::max(options_.tolerance, floor_)) return result;
                if (m >= cap) {
                    if (worst <= std::max(options_.accept_tolerance, floor_)) return result;
                    throw EigenSolveError("eigensolve: no convergence, worst residual " + std::to_string(worst),
                                          worst);
                }
                next_check = m + 4 * b;
            }
            Eigen::MatrixXd w = apply(basis_.rightCols(std::min(b, m)));
            const Eigen::Index room = cap - m;
            if (w.cols() > room) w.conservativeResize(Eigen::NoChange, room);
            append_orthonormalized(w);
        }
    }

private:
    Eigen::MatrixXd random_block(Eigen::Index cols) {
        std::normal_distribution<double> gauss;
        Eigen::MatrixXd x(op_.size(), cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = gauss(rng_);
        }
        return x;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd mx = op_.mass.asDiagonal() * x;
        return solver_.solve(mx);
    }

    double m_norm(const Eigen::VectorXd& v) const { return std::sqrt(v.dot(op_.mass.cwiseProduct(v))); }

    void project_out(Eigen::Ref<Eigen::VectorXd> v) const {
        if (basis_.cols() == 0) return;
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd coeff = basis_.transpose() * op_.mass.cwiseProduct(v);
            v -= basis_ * coeff;
        }
    }

    // M-orthonormalizes the columns of `w` against the basis and each other,
    // replacing numerically dependent columns by fresh random directions.
    void append_orthonormalized(Eigen::MatrixXd& w) {
        const Eigen::Index n = op_.size();
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            if (basis_.cols() >= n) return;
            Eigen::VectorXd v = w.col(c);
            double before = m_norm(v);
            for (int attempt = 0; attempt < 4; ++attempt) {
                project_out(v);
                const double after = m_norm(v);
                if (after > 1e-10 * before && after > 0.0) {
                    basis_.conservativeResize(Eigen::NoChange, basis_.cols() + 1);
                    basis_.col(basis_.cols() - 1) = v / after;
                    break;
                }
                v = random_block(1).col(0);
                before = m_norm(v);
            }
        }
    }

    EigenBasis rayleigh_ritz(Eigen::Index k, double& worst) const {
        const Eigen::MatrixXd sq = op_.stiffness * basis_;
        Eigen::MatrixXd projected = basis_.transpose() * sq;
        projected = 0.5 * (projected + projected.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projected);
        EigenBasis out;
        out.eigenvalues = eig.eigenvalues().head(k);
        out.eigenvectors = basis_ * eig.eigenvectors().leftCols(k);
        worst = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            worst = std::max(worst, eigen_residual(op_, out.eigenvalues[i], out.eigenvectors.col(i)));
        }
        return out;
    }

    const LaplaceOperator& op_;
    const EigenSolveOptions& options_;
    std::mt19937_64 rng_;
    double shift_ = 0.0;
    double floor_ = 0.0;
    Eigen::SimplicialLDLT<SparseMatrix> solver_;
    Eigen::MatrixXd basis_;
};

}  // namespace

EigenBasis solve_eigenpairs_dense(const LaplaceOperator& op, Eigen::Index k) {
    check_request(op, k);
    const Eigen::VectorXd inv_sqrt = op.mass.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd a = inv_sqrt.asDiagonal() * Eigen::MatrixXd(op.stiffness) * inv_sqrt.asDiagonal();
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    EigenBasis out;
    out.eigenvalues = eig.eigenvalues().head(k);
    out.eigenvectors = inv_sqrt.asDiagonal() * eig.eigenvectors().leftCols(k);
    canonicalize(out);
    return out;
}

EigenBasis solve_eigenpairs(const LaplaceOperator& op, Eigen::Index k, const EigenSolveOptions& options) {
    check_request(op, k);
    if (op.size() <= options.dense_threshold) return solve_eigenpairs_dense(op, k);
    BlockLanczos lanczos(op, options);
    EigenBasis out = lanczos.run(k);
    canonicalize(out);
    return out;
}

}  // namespace surfpatch
