#include "surfpatch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace surfpatch {

std::pair<double, double> umap_curve_parameters(double min_dist, double spread) {
    // Target: 1 for x < min_dist, exp(-(x - min_dist) / spread) beyond;
    // Levenberg-Marquardt on 300 samples over [0, 3 * spread].
    constexpr int samples = 300;
    std::vector<double> xs(samples);
    std::vector<double> ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i] = 3.0 * spread * static_cast<double>(i) / (samples - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(samples);
        if (jac) jac->resize(samples, 2);
        for (int i = 0; i < samples; ++i) {
            const double x = xs[i];
            const double x2b = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double denom = 1.0 + a * x2b;
            r[i] = 1.0 / denom - ys[i];
            if (jac) {
                (*jac)(i, 0) = -x2b / (denom * denom);
                (*jac)(i, 1) = x > 0.0 ? -a * x2b * 2.0 * std::log(x) / (denom * denom) : 0.0;
            }
        }
    };
    double a = 1.0;
    double b = 1.0;
    double lambda = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(a, b, r, &jac);
    double cost = r.squaredNorm();
    for (int iter = 0; iter < 200; ++iter) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d jtr = jac.transpose() * r;
        Eigen::Matrix2d damped = jtj;
        damped.diagonal() *= (1.0 + lambda);
        const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
        Eigen::VectorXd trial;
        residuals(a + step[0], b + step[1], trial, nullptr);
        const double trial_cost = trial.squaredNorm();
        if (trial_cost < cost) {
            a += step[0];
            b += step[1];
            const double gain = cost - trial_cost;
            cost = trial_cost;
            lambda *= 0.3;
            residuals(a, b, r, &jac);
            if (gain < 1e-14 * std::max(cost, 1e-30) || step.norm() < 1e-12) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

namespace {

struct FuzzyGraph {
    std::vector<std::uint32_t> head;
    std::vector<std::uint32_t> tail;
    std::vector<double> weight;
};

FuzzyGraph fuzzy_simplicial_set(const RowMatrix& x, int k) {
    const Eigen::Index m = x.rows();
    std::vector<std::vector<std::uint32_t>> knn(m);
    std::vector<std::vector<double>> knn_dist(m);
    std::vector<std::uint32_t> order;
    std::vector<double> dist(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) dist[j] = j == i ? 0.0 : (x.row(i) - x.row(j)).norm();
        order.resize(static_cast<std::size_t>(m));
        std::iota(order.begin(), order.end(), 0u);
        order.erase(order.begin() + i);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](auto a, auto b) {
            return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
        });
        knn[i].assign(order.begin(), order.begin() + k);
        for (auto j : knn[i]) knn_dist[i].push_back(dist[j]);
    }

    double mean_all = 0.0;
    for (const auto& row : knn_dist) mean_all += std::accumulate(row.begin(), row.end(), 0.0);
    mean_all /= static_cast<double>(m * k);

    const double target = std::log2(static_cast<double>(k));
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& d = knn_dist[i];
        double rho = 0.0;
        for (double v : d) {
            if (v > 0.0) {
                rho = v;
                break;
            }
        }
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double sigma = 1.0;
        for (int iter = 0; iter < 64; ++iter) {
            double psum = 0.0;
            for (double v : d) psum += std::exp(-std::max(0.0, v - rho) / sigma);
            if (std::abs(psum - target) < 1e-5) break;
            if (psum > target) {
                hi = sigma;
                sigma = 0.5 * (lo + hi);
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : 0.5 * (lo + hi);
            }
        }
        const double mean_i = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(k);
        sigma = std::max(sigma, 1e-3 * (rho > 0.0 ? mean_i : mean_all));
        for (int t = 0; t < k; ++t) {
            w(i, knn[i][t]) = std::exp(-std::max(0.0, d[t] - rho) / sigma);
        }
    }

    FuzzyGraph g;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j) continue;
            // a + b - ab written so a weight of 1 stays exactly 1.
            const double hi = std::max(w(i, j), w(j, i));
            const double lo = std::min(w(i, j), w(j, i));
            const double u = hi + lo * (1.0 - hi);
            if (u > 0.0) {
                g.head.push_back(static_cast<std::uint32_t>(i));
                g.tail.push_back(static_cast<std::uint32_t>(j));
                g.weight.push_back(u);
            }
        }
    }
    return g;
}

double clip(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

RowMatrix umap_embed(const RowMatrix& features, const UmapParams& params) {
    const Eigen::Index m = features.rows();
    const int dim = params.target_dim;
    if (m < 2) throw EmbeddingError("umap: need at least 2 points");
    if (dim < 1) throw EmbeddingError("umap: target dimension must be positive");
    if (!features.allFinite()) throw EmbeddingError("umap: non-finite input");
    const int k = static_cast<int>(std::min<Eigen::Index>(std::max(1, params.n_neighbors), m - 1));

    FuzzyGraph graph = fuzzy_simplicial_set(features, k);
    const auto [a, b] = umap_curve_parameters(params.min_dist, params.spread);

    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> init(-10.0, 10.0);
    RowMatrix y(m, dim);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (int c = 0; c < dim; ++c) y(i, c) = init(rng);
    }

    // Schedule comparisons carry a slack so rounding noise in the weights
    // cannot flip a sample between epochs and reshuffle the RNG stream.
    constexpr double slack = 1e-9;
    const double max_w = *std::max_element(graph.weight.begin(), graph.weight.end());
    const int epochs = params.epochs;
    std::vector<double> epochs_per_sample;
    std::vector<std::uint32_t> head;
    std::vector<std::uint32_t> tail;
    for (std::size_t e = 0; e < graph.weight.size(); ++e) {
        if (graph.weight[e] < max_w / epochs * (1.0 - slack)) continue;
        head.push_back(graph.head[e]);
        tail.push_back(graph.tail[e]);
        epochs_per_sample.push_back(max_w / graph.weight[e]);
    }
    const std::size_t edges = head.size();
    std::vector<double> next_sample = epochs_per_sample;
    std::vector<double> neg_per_sample(edges);
    std::vector<double> next_neg(edges);
    for (std::size_t e = 0; e < edges; ++e) {
        neg_per_sample[e] = epochs_per_sample[e] / params.negative_sample_rate;
        next_neg[e] = neg_per_sample[e];
    }

    std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
    std::vector<double> delta(dim);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double alpha = 1.0 - static_cast<double>(epoch) / epochs;
        for (std::size_t e = 0; e < edges; ++e) {
            if (next_sample[e] > epoch + slack) continue;
            const auto i = head[e];
            const auto j = tail[e];
            double d2 = 0.0;
            for (int c = 0; c < dim; ++c) {
                delta[c] = y(i, c) - y(j, c);
                d2 += delta[c] * delta[c];
            }
            if (d2 > 0.0) {
                const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
                for (int c = 0; c < dim; ++c) {
                    const double g = clip(coeff * delta[c]);
                    y(i, c) += g * alpha;
                    y(j, c) -= g * alpha;
                }
            }
            next_sample[e] += epochs_per_sample[e];

            const int negatives = static_cast<int>((epoch - next_neg[e]) / neg_per_sample[e] + slack);
            for (int s = 0; s < negatives; ++s) {
                const auto other = pick(rng);
                if (other == static_cast<Eigen::Index>(i)) continue;
                d2 = 0.0;
                for (int c = 0; c < dim; ++c) {
                    delta[c] = y(i, c) - y(other, c);
                    d2 += delta[c] * delta[c];
                }
                double coeff = 0.0;
                if (d2 > 0.0) coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                for (int c = 0; c < dim; ++c) {
                    const double g = coeff > 0.0 ? clip(coeff * delta[c]) : 4.0;
                    y(i, c) += g * alpha;
                }
            }
            next_neg[e] += negatives * neg_per_sample[e];
        }
    }
    if (!y.allFinite()) throw EmbeddingError("umap: diverged");
    return y;
}

AggregatedFeature umap_aggregate(const RowMatrix& matrix, UmapParams params) {
    const Eigen::Index n = matrix.rows();
    const Eigen::Index d = matrix.cols();
    if (d < 2) throw EmbeddingError("umap_aggregate: need at least 2 feature columns");
    if (n < 1) throw EmbeddingError("umap_aggregate: empty matrix");
    AggregatedFeature out;
    if (n < kAggregateMinRows) {
        out.values = matrix.colwise().mean().transpose();
        out.mean_fallback = true;
        return out;
    }
    params.target_dim = 1;
    const RowMatrix transposed = matrix.transpose();
    out.values = umap_embed(transposed, params).col(0);
    // The layout is defined up to translation and reflection; fix both so
    // vectors from different matrices share a frame: zero mean, increasing
    // on average along the column order.
    out.values.array() -= out.values.mean();
    const Eigen::VectorXd ramp = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
    if (ramp.dot(out.values) < 0.0) out.values = -out.values;
    return out;
}

}  // namespace surfpatch
