#include "surfpatch/hks.hpp"

#include "surfpatch/binary_io.hpp"

#include <algorithm>
#include <cmath>

namespace surfpatch {

Eigen::VectorXd hks_times(const EigenBasis& basis, Eigen::Index d) {
    const Eigen::Index k = basis.count();
    const double lo = std::log(4.0 * std::log(10.0) / basis.eigenvalues[k - 1]);
    const double hi = std::log(4.0 * std::log(10.0) / basis.eigenvalues[1]);
    Eigen::VectorXd t(d);
    for (Eigen::Index c = 0; c < d; ++c) {
        const double s = d > 1 ? static_cast<double>(c) / static_cast<double>(d - 1) : 0.0;
        t[c] = std::exp(lo + s * (hi - lo));
    }
    return t;
}

EigenBasis solve_hks_basis(const LaplaceOperator& op, Eigen::Index k, const EigenSolveOptions& options) {
    constexpr double kClusterTolerance = 1e-6;
    const Eigen::Index probe = std::min(k + 1, op.size() - 1);
    EigenBasis basis = solve_eigenpairs(op, probe, options);
    Eigen::Index keep = std::min(k, probe);
    if (probe > keep) {
        const double next = basis.eigenvalues[keep];
        while (keep > 2 && std::abs(basis.eigenvalues[keep - 1] - next) <= kClusterTolerance * std::abs(next)) --keep;
    }
    if (keep < basis.count()) {
        basis.eigenvalues.conservativeResize(keep);
        basis.eigenvectors.conservativeResize(Eigen::NoChange, keep);
    }
    return basis;
}

HksMatrix compute_hks(const EigenBasis& basis, const Eigen::VectorXd& mass, Eigen::Index d) {
    if (basis.count() < 2) throw GeometryError("hks: need at least 2 eigenpairs");
    if (d < 1) throw GeometryError("hks: feature width must be positive");
    if (!(basis.eigenvalues[1] > 1e-12)) {
        throw GeometryError("hks: spectrum degenerate; process components separately");
    }
    HksMatrix h;
    h.times = hks_times(basis, d);
    const Eigen::Index k = basis.count();

    // squared eigenvectors without the constant mode: n x (k-1)
    const Eigen::MatrixXd sq = basis.eigenvectors.rightCols(k - 1).array().square().matrix();
    Eigen::MatrixXd decay(k - 1, d);
    for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index i = 1; i < k; ++i) decay(i - 1, c) = std::exp(-basis.eigenvalues[i] * h.times[c]);
    }
    h.features = sq * decay;
    // Divide by the M-weighted mean so the scale of the surface cancels.
    const double area = mass.sum();
    for (Eigen::Index c = 0; c < d; ++c) {
        const double trace = mass.dot(h.features.col(c));
        h.features.col(c) *= area / trace;
    }
    return h;
}

double hks_distance(const HksMatrix& h, Eigen::Index i, Eigen::Index j) {
    return (h.features.row(i) - h.features.row(j)).norm();
}

double heat_kernel(const EigenBasis& basis, double t, Eigen::Index x, Eigen::Index y) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < basis.count(); ++i) {
        sum += std::exp(-basis.eigenvalues[i] * t) * basis.eigenvectors(x, i) * basis.eigenvectors(y, i);
    }
    return sum;
}

void write_hks(std::ostream& out, const HksMatrix& h) {
    binary::write_magic(out, "HKS1");
    binary::write_u32(out, static_cast<std::uint32_t>(h.features.rows()));
    binary::write_u32(out, static_cast<std::uint32_t>(h.features.cols()));
    for (Eigen::Index c = 0; c < h.times.size(); ++c) binary::write_f64(out, h.times[c]);
    for (Eigen::Index r = 0; r < h.features.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.features.cols(); ++c) binary::write_f64(out, h.features(r, c));
    }
}

HksMatrix read_hks(std::istream& in) {
    binary::expect_magic(in, "HKS1");
    const auto n = binary::read_u32(in);
    const auto d = binary::read_u32(in);
    HksMatrix h;
    h.times.resize(d);
    for (std::uint32_t c = 0; c < d; ++c) h.times[c] = binary::read_f64(in);
    h.features.resize(n, d);
    for (std::uint32_t r = 0; r < n; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) h.features(r, c) = binary::read_f64(in);
    }
    return h;
}

}  // namespace surfpatch
