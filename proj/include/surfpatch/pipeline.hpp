#pragma once

#include "surfpatch/embedding.hpp"
#include "surfpatch/hierarchy.hpp"
#include "surfpatch/hks.hpp"
#include "surfpatch/mesh.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace surfpatch {

struct PipelineConfig {
    double epsilon = 0.5;
    std::size_t min_vertices = 200;  // simplification floor
    Eigen::Index k = 128;            // eigenpairs
    Eigen::Index d = 128;            // HKS width
    std::uint64_t dataset_seed = 0;
    double perplexity = 30.0;        // clamped to (m - 1) / 3
    int tsne_iterations = 1000;
    UmapParams umap;                 // seed field is ignored; seeds are derived
    bool cluster_patches_in_2d = false;

    void validate() const;
};

/// Seed streams threaded through the pipeline.
enum class SeedStream : std::uint64_t {
    eigen = 1,
    tsne = 2,
    aggregate = 3,
    patch_view = 4,
    surface_view = 5,
    evaluation = 6,
};

std::uint64_t stream_seed(std::uint64_t dataset_seed, SeedStream stream, std::uint64_t index = 0);

// ---------------------------------------------------------------------------
// Stage 1: preprocessing

struct SurfaceRecord {
    std::uint32_t surface_id = 0;
    std::string source;  // input file name
    std::size_t input_vertices = 0;
    Mesh mesh;           // simplified, input coordinate frame
    HksMatrix hks;
    Embedding2D projection;  // t-SNE of the HKS rows

    /// Throws std::logic_error if row counts disagree.
    void validate() const;
};

struct StageTimings {
    double simplify = 0.0;
    double spectral = 0.0;  // Laplacian + eigenpairs + HKS
    double embedding = 0.0;
};

/// normalize, simplify, Laplacian, eigenpairs, HKS, t-SNE. Throws
/// GeometryError for a mesh with more than one connected component.
SurfaceRecord preprocess_surface(const Mesh& mesh, std::uint32_t surface_id, const PipelineConfig& config,
                                 StageTimings* timings = nullptr);

// ---------------------------------------------------------------------------
// Cut levels

/// A dendrogram cut either as a slider value in [0, 100] (fraction of the top
/// merge distance) or as an absolute distance. +inf is valid in both forms.
class CutLevel {
public:
    enum class Unit { percent, absolute };

    static CutLevel percent(double value);
    static CutLevel absolute(double value);

    [[nodiscard]] Unit unit() const { return unit_; }
    [[nodiscard]] double value() const { return value_; }
    [[nodiscard]] double resolve(const LinkageTree& tree) const;

private:
    CutLevel(Unit unit, double value) : unit_(unit), value_(value) {}

    Unit unit_;
    double value_;
};

// ---------------------------------------------------------------------------
// Stage 2: vertex-level classification

struct PatchSegmentation {
    std::uint32_t surface_id = 0;
    double delta1 = 0.0;  // absolute distance used
    Partition partition;
    std::vector<std::vector<std::uint32_t>> patches;  // sorted vertex ids per patch

    [[nodiscard]] std::size_t patch_count() const { return patches.size(); }
};

/// Constrained Ward tree over the vertex projection with mesh adjacency.
LinkageTree vertex_tree(const SurfaceRecord& record);

PatchSegmentation segment_patches(const SurfaceRecord& record, const LinkageTree& tree, CutLevel delta1);
PatchSegmentation segment_patches(const SurfaceRecord& record, CutLevel delta1);

// ---------------------------------------------------------------------------
// Stage 3: patch-level matching

struct PatchRef {
    std::uint32_t surface_id = 0;
    std::uint32_t patch_id = 0;

    auto operator<=>(const PatchRef&) const = default;
};

struct PatchEmbedding {
    std::vector<PatchRef> patches;
    RowMatrix features;            // one aggregated row per patch
    Embedding2D projection;        // view only
    std::vector<char> mean_fallback;

    [[nodiscard]] std::optional<std::size_t> find(PatchRef ref) const;
};

struct SurfacePatches {
    const SurfaceRecord* record = nullptr;
    const PatchSegmentation* segmentation = nullptr;
};

/// Aggregates each patch's HKS rows to one row and lays all patches out in 2D.
/// Throws std::invalid_argument when the selection has no patch.
PatchEmbedding embed_patches(const std::vector<SurfacePatches>& selection, const PipelineConfig& config);

/// Unconstrained Ward tree over the patch features (or the 2D view when
/// config.cluster_patches_in_2d is set).
LinkageTree patch_tree(const PatchEmbedding& embedding, const PipelineConfig& config);

struct Match {
    PatchRef patch;
    double distance = 0.0;  // to the query, in the clustering space
};

struct MatchResult {
    PatchRef query;
    std::vector<Match> matches;  // ranked; the query itself comes first
    double delta2 = 0.0;         // absolute cut on the patch tree
};

/// Throws std::out_of_range for a query not in the embedding.
MatchResult match_patches(const PatchEmbedding& embedding, const LinkageTree& tree, PatchRef query, CutLevel delta2,
                          const PipelineConfig& config);
MatchResult match_patches(const PatchEmbedding& embedding, PatchRef query, CutLevel delta2,
                          const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Surface-level clustering

struct SurfaceClusterParams {
    CutLevel delta1 = CutLevel::percent(50.0);
    CutLevel delta_s = CutLevel::percent(50.0);
    std::optional<std::size_t> cluster_count;  // overrides delta_s
};

struct SurfaceEmbedding {
    std::vector<std::uint32_t> surface_ids;
    RowMatrix features;  // one row per surface
    Embedding2D projection;
    LinkageTree tree;
    Partition clusters;
    std::vector<std::uint32_t> representatives;  // row index per cluster
    /// Row indices per cluster: blocks by descending size, members by
    /// ascending feature distance to the representative.
    std::vector<std::vector<std::uint32_t>> gallery;
};

/// Surface-level feature: the surface's patch features aggregated once more.
Eigen::VectorXd surface_features(const SurfaceRecord& record, CutLevel delta1, const PipelineConfig& config);

/// Throws std::invalid_argument for fewer than 2 records.
SurfaceEmbedding cluster_surfaces(const std::vector<SurfaceRecord>& records, const SurfaceClusterParams& params,
                                  const PipelineConfig& config);

/// Recomputes the gallery ordering for a clustering.
std::vector<std::vector<std::uint32_t>> gallery_order(const RowMatrix& features, const Partition& clusters,
                                                      const std::vector<std::uint32_t>& representatives);

}  // namespace surfpatch
