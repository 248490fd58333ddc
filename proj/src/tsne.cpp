#include "surfpatch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace surfpatch {

namespace {

Eigen::MatrixXd squared_distances(const RowMatrix& x) {
    const Eigen::Index m = x.rows();
    const Eigen::VectorXd norms = x.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * (x * x.transpose());
    d.colwise() += norms;
    d.rowwise() += norms.transpose();
    for (Eigen::Index i = 0; i < m; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double v = std::max(0.0, 0.5 * (d(i, j) + d(j, i)));
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

// Row-conditional Gaussian affinities whose entropy matches log(perplexity).
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& dist2, double perplexity) {
    const Eigen::Index m = dist2.rows();
    const double target = std::log(perplexity);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        // Distances are shifted by the row minimum to keep exp() in range.
        double dmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j != i) dmin = std::min(dmin, dist2(i, j));
        }
        for (int iter = 0; iter < 200; ++iter) {
            double sum = 0.0;
            double weighted = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (j == i) continue;
                const double shifted = dist2(i, j) - dmin;
                const double w = std::exp(-beta * shifted);
                p(i, j) = w;
                sum += w;
                weighted += shifted * w;
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-10) break;
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

double kl_divergence(const Eigen::MatrixXd& p, const RowMatrix& y) {
    const Eigen::Index m = y.rows();
    double z = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) z += 2.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            const double q = std::max(1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm()) / z, 1e-300);
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

}  // namespace

double max_perplexity(Eigen::Index m) { return static_cast<double>(m - 1) / 3.0; }

TsneResult tsne_2d(const RowMatrix& features, const TsneParams& params) {
    const Eigen::Index m = features.rows();
    if (m < 4) throw EmbeddingError("tsne: need at least 4 points");
    if (!features.allFinite()) throw EmbeddingError("tsne: non-finite input");
    if (!(params.perplexity > 0.0) || params.perplexity > max_perplexity(m)) {
        throw EmbeddingError("tsne: perplexity " + std::to_string(params.perplexity) +
                             " infeasible for " + std::to_string(m) + " points");
    }

    Eigen::MatrixXd p = conditional_affinities(squared_distances(features), params.perplexity);
    p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(m));
    p = p.cwiseMax(1e-12);
    p.diagonal().setZero();

    TsneResult result;
    result.embedding.method = EmbeddingMethod::tsne;
    result.embedding.seed = params.seed;
    RowMatrix& y = result.embedding.points;
    y.resize(m, 2);
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> gauss(0.0, params.init_stddev);
    for (Eigen::Index i = 0; i < m; ++i) {
        y(i, 0) = gauss(rng);
        y(i, 1) = gauss(rng);
    }
    result.kl_initial = kl_divergence(p, y);

    RowMatrix velocity = RowMatrix::Zero(m, 2);
    RowMatrix gains = RowMatrix::Ones(m, 2);
    RowMatrix grad(m, 2);
    Eigen::MatrixXd num(m, m);
    for (int iter = 0; iter < params.iterations; ++iter) {
        const bool early = iter < params.exaggeration_iterations;
        const double exaggeration = early ? params.exaggeration : 1.0;
        const double momentum = early ? 0.5 : 0.8;

        double z = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            num(i, i) = 0.0;
            const double yi0 = y(i, 0);
            const double yi1 = y(i, 1);
            for (Eigen::Index j = i + 1; j < m; ++j) {
                const double d0 = yi0 - y(j, 0);
                const double d1 = yi1 - y(j, 1);
                const double w = 1.0 / (1.0 + d0 * d0 + d1 * d1);
                num(i, j) = w;
                num(j, i) = w;
                z += 2.0 * w;
            }
        }
        const double inv_z = 1.0 / z;
        for (Eigen::Index i = 0; i < m; ++i) {
            double g0 = 0.0;
            double g1 = 0.0;
            const double yi0 = y(i, 0);
            const double yi1 = y(i, 1);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double w = num(i, j);
                const double coeff = (exaggeration * p(i, j) - w * inv_z) * w;
                g0 += coeff * (yi0 - y(j, 0));
                g1 += coeff * (yi1 - y(j, 1));
            }
            grad(i, 0) = 4.0 * g0;
            grad(i, 1) = 4.0 * g1;
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                velocity(i, c) = momentum * velocity(i, c) - params.learning_rate * gains(i, c) * grad(i, c);
                y(i, c) += velocity(i, c);
            }
        }
        // Keep the layout centered; translation does not change the objective.
        const Eigen::RowVector2d mean = y.colwise().mean();
        y.rowwise() -= mean;
    }
    result.kl_final = kl_divergence(p, y);
    if (!y.allFinite()) throw EmbeddingError("tsne: diverged");
    return result;
}

}  // namespace surfpatch
