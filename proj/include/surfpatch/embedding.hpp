#pragma once

#include "surfpatch/hks.hpp"

#include <cstdint>
#include <stdexcept>

namespace surfpatch {

class EmbeddingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EmbeddingMethod { tsne, umap };

struct Embedding2D {
    RowMatrix points;  // m x 2
    EmbeddingMethod method = EmbeddingMethod::tsne;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// t-SNE

struct TsneParams {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    double learning_rate = 200.0;
    int exaggeration_iterations = 250;
    double exaggeration = 12.0;
    double init_stddev = 1e-4;
};

struct TsneResult {
    Embedding2D embedding;
    double kl_initial = 0.0;  // KL(P || Q) at the seeded initialization
    double kl_final = 0.0;
};

/// Largest admissible perplexity for m points.
double max_perplexity(Eigen::Index m);

/// Exact (O(m^2) per iteration) t-SNE to two dimensions.
/// Throws EmbeddingError for m < 4, perplexity outside (0, (m-1)/3] or
/// non-finite input.
TsneResult tsne_2d(const RowMatrix& features, const TsneParams& params);

// ---------------------------------------------------------------------------
// UMAP

struct UmapParams {
    int target_dim = 2;
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int epochs = 200;
    int negative_sample_rate = 5;
    std::uint64_t seed = 0;
};

/// Coefficients (a, b) of the low-dimensional kernel 1 / (1 + a d^(2b)),
/// least-squares fitted to the min_dist/spread target curve.
std::pair<double, double> umap_curve_parameters(double min_dist, double spread);

/// Exact-kNN UMAP. n_neighbors is clamped to m-1.
RowMatrix umap_embed(const RowMatrix& features, const UmapParams& params);

struct AggregatedFeature {
    Eigen::VectorXd values;  // length d
    bool mean_fallback = false;
};

/// Below this many rows the aggregation returns column means.
inline constexpr Eigen::Index kAggregateMinRows = 10;

/// Transposed UMAP to one dimension: the d columns of an n x d matrix are
/// embedded as d points in R^n, giving a length-d vector for any n.
AggregatedFeature umap_aggregate(const RowMatrix& matrix, UmapParams params);

}  // namespace surfpatch
