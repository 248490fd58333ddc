#include "surfpatch/pipeline.hpp"

#include "surfpatch/laplacian.hpp"
#include "surfpatch/seeding.hpp"
#include "surfpatch/simplify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace surfpatch {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RowMatrix gather_rows(const RowMatrix& m, const std::vector<std::uint32_t>& rows) {
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

// Aggregated patch rows for a selection, without the 2D view.
void aggregate_patches(const std::vector<SurfacePatches>& selection, const PipelineConfig& config,
                       PatchEmbedding& out) {
    std::size_t total = 0;
    for (const auto& s : selection) {
        if (!s.record || !s.segmentation) throw std::invalid_argument("embed_patches: null selection entry");
        if (s.record->surface_id != s.segmentation->surface_id) {
            throw std::invalid_argument("embed_patches: segmentation does not belong to surface " +
                                        std::to_string(s.record->surface_id));
        }
        total += s.segmentation->patch_count();
    }
    if (total == 0) throw std::invalid_argument("embed_patches: no patches selected");

    const Eigen::Index d = selection.front().record->hks.width();
    UmapParams up = config.umap;
    up.seed = stream_seed(config.dataset_seed, SeedStream::aggregate);

    out.patches.clear();
    out.mean_fallback.clear();
    out.features.resize(static_cast<Eigen::Index>(total), d);
    Eigen::Index row = 0;
    for (const auto& s : selection) {
        if (s.record->hks.width() != d) throw std::invalid_argument("embed_patches: mixed HKS widths");
        for (std::size_t p = 0; p < s.segmentation->patch_count(); ++p) {
            const auto agg = umap_aggregate(gather_rows(s.record->hks.features, s.segmentation->patches[p]), up);
            out.features.row(row++) = agg.values.transpose();
            out.patches.push_back({s.record->surface_id, static_cast<std::uint32_t>(p)});
            out.mean_fallback.push_back(agg.mean_fallback ? 1 : 0);
        }
    }
}

// Rows equal up to rounding are embedded once and share the point.
RowMatrix layout_2d(const RowMatrix& features, const PipelineConfig& config, std::uint64_t seed) {
    const Eigen::Index m = features.rows();
    const double tol = 1e-9 * std::max(1.0, features.cwiseAbs().maxCoeff());
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(m));
    std::vector<Eigen::Index> unique;
    for (Eigen::Index i = 0; i < m; ++i) {
        auto it = std::find_if(unique.begin(), unique.end(),
                               [&](Eigen::Index u) { return (features.row(u) - features.row(i)).norm() <= tol; });
        slot[i] = it - unique.begin();
        if (it == unique.end()) unique.push_back(i);
    }
    RowMatrix distinct(static_cast<Eigen::Index>(unique.size()), features.cols());
    for (std::size_t u = 0; u < unique.size(); ++u) distinct.row(static_cast<Eigen::Index>(u)) = features.row(unique[u]);
    RowMatrix points = RowMatrix::Zero(distinct.rows(), 2);
    if (distinct.rows() > 1) {
        UmapParams up = config.umap;
        up.target_dim = 2;
        up.seed = seed;
        points = umap_embed(distinct, up);
    }
    RowMatrix out(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) out.row(i) = points.row(slot[i]);
    return out;
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
    if (k < 2) throw std::invalid_argument("k must be >= 2");
    if (d < 2) throw std::invalid_argument("d must be >= 2");
    if (!(perplexity > 0.0)) throw std::invalid_argument("perplexity must be positive");
    if (tsne_iterations < 1) throw std::invalid_argument("tsne iterations must be >= 1");
}

std::uint64_t stream_seed(std::uint64_t dataset_seed, SeedStream stream, std::uint64_t index) {
    return derive_seed(dataset_seed, static_cast<std::uint64_t>(stream), index);
}

void SurfaceRecord::validate() const {
    const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
    if (hks.vertex_count() != n || projection.points.rows() != n) {
        throw std::logic_error("surface " + std::to_string(surface_id) + ": mesh has " + std::to_string(n) +
                               " vertices, HKS " + std::to_string(hks.vertex_count()) + " rows, projection " +
                               std::to_string(projection.points.rows()) + " rows");
    }
}

SurfaceRecord preprocess_surface(const Mesh& mesh, std::uint32_t surface_id, const PipelineConfig& config,
                                 StageTimings* timings) {
    config.validate();
    mesh.validate();
    const auto comps = connected_components(adjacency(mesh));
    if (comps.count != 1) {
        throw GeometryError("mesh has " + std::to_string(comps.count) +
                            " connected components; process components separately");
    }
    StageTimings local;

    auto t0 = std::chrono::steady_clock::now();
    SimplifyParams sp;
    sp.epsilon = config.epsilon;
    sp.min_vertices = config.min_vertices;
    SurfaceRecord rec;
    rec.surface_id = surface_id;
    rec.source = mesh.name;
    rec.input_vertices = mesh.vertex_count();
    rec.mesh = simplify_qem(mesh, sp);
    rec.mesh.name = mesh.name;
    local.simplify = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto op = build_cotangent_laplacian(rec.mesh);
    const auto n = static_cast<Eigen::Index>(rec.mesh.vertex_count());
    EigenSolveOptions eo;
    eo.seed = stream_seed(config.dataset_seed, SeedStream::eigen, surface_id);
    const auto basis = solve_hks_basis(op, std::min(config.k, n - 1), eo);
    rec.hks = compute_hks(basis, op.mass, config.d);
    local.spectral = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    TsneParams tp;
    tp.perplexity = std::min(config.perplexity, max_perplexity(n));
    tp.iterations = config.tsne_iterations;
    tp.seed = stream_seed(config.dataset_seed, SeedStream::tsne, surface_id);
    rec.projection = tsne_2d(rec.hks.features, tp).embedding;
    local.embedding = seconds_since(t0);

    if (timings) *timings = local;
    return rec;
}

CutLevel CutLevel::percent(double value) {
    if (std::isnan(value) || value < 0.0 || (value > 100.0 && !std::isinf(value))) {
        throw std::out_of_range("cut level " + std::to_string(value) + "% outside [0, 100]");
    }
    return {Unit::percent, value};
}

CutLevel CutLevel::absolute(double value) {
    if (std::isnan(value) || value < 0.0) throw std::out_of_range("cut distance must be >= 0");
    return {Unit::absolute, value};
}

double CutLevel::resolve(const LinkageTree& tree) const {
    return unit_ == Unit::percent ? slider_to_distance(tree, value_) : value_;
}

LinkageTree vertex_tree(const SurfaceRecord& record) {
    record.validate();
    const auto graph = adjacency(record.mesh);
    return ahc_ward(record.projection.points, &graph);
}

PatchSegmentation segment_patches(const SurfaceRecord& record, const LinkageTree& tree, CutLevel delta1) {
    if (tree.leaf_count != record.mesh.vertex_count()) {
        throw std::invalid_argument("segment_patches: tree does not match surface " +
                                    std::to_string(record.surface_id));
    }
    PatchSegmentation seg;
    seg.surface_id = record.surface_id;
    seg.delta1 = delta1.resolve(tree);
    seg.partition = cut_threshold(tree, seg.delta1);
    seg.patches = seg.partition.members();
    return seg;
}

PatchSegmentation segment_patches(const SurfaceRecord& record, CutLevel delta1) {
    return segment_patches(record, vertex_tree(record), delta1);
}

std::optional<std::size_t> PatchEmbedding::find(PatchRef ref) const {
    const auto it = std::find(patches.begin(), patches.end(), ref);
    if (it == patches.end()) return std::nullopt;
    return static_cast<std::size_t>(it - patches.begin());
}

PatchEmbedding embed_patches(const std::vector<SurfacePatches>& selection, const PipelineConfig& config) {
    if (selection.empty()) throw std::invalid_argument("embed_patches: no patches selected");
    PatchEmbedding out;
    aggregate_patches(selection, config, out);
    out.projection.method = EmbeddingMethod::umap;
    out.projection.seed = stream_seed(config.dataset_seed, SeedStream::patch_view);
    out.projection.points = layout_2d(out.features, config, out.projection.seed);
    return out;
}

LinkageTree patch_tree(const PatchEmbedding& embedding, const PipelineConfig& config) {
    return ahc_ward(config.cluster_patches_in_2d ? embedding.projection.points : embedding.features);
}

MatchResult match_patches(const PatchEmbedding& embedding, const LinkageTree& tree, PatchRef query, CutLevel delta2,
                          const PipelineConfig& config) {
    const auto qi = embedding.find(query);
    if (!qi) {
        throw std::out_of_range("unknown patch " + std::to_string(query.patch_id) + " of surface " +
                                std::to_string(query.surface_id));
    }
    const RowMatrix& space = config.cluster_patches_in_2d ? embedding.projection.points : embedding.features;
    if (tree.leaf_count != static_cast<std::size_t>(space.rows())) {
        throw std::invalid_argument("match_patches: tree does not match embedding");
    }
    MatchResult r;
    r.query = query;
    r.delta2 = delta2.resolve(tree);
    const auto part = cut_threshold(tree, r.delta2);
    const auto label = part.labels[*qi];

    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < part.labels.size(); ++i) {
        if (part.labels[i] != label || i == *qi) continue;
        const double dist = (space.row(static_cast<Eigen::Index>(i)) - space.row(static_cast<Eigen::Index>(*qi))).norm();
        ranked.emplace_back(dist, i);
    }
    std::sort(ranked.begin(), ranked.end());
    r.matches.push_back({query, 0.0});
    for (const auto& [dist, i] : ranked) r.matches.push_back({embedding.patches[i], dist});
    return r;
}

MatchResult match_patches(const PatchEmbedding& embedding, PatchRef query, CutLevel delta2,
                          const PipelineConfig& config) {
    return match_patches(embedding, patch_tree(embedding, config), query, delta2, config);
}

Eigen::VectorXd surface_features(const SurfaceRecord& record, CutLevel delta1, const PipelineConfig& config) {
    const auto seg = segment_patches(record, delta1);
    PatchEmbedding patches;
    aggregate_patches({{&record, &seg}}, config, patches);
    UmapParams up = config.umap;
    up.seed = stream_seed(config.dataset_seed, SeedStream::aggregate);
    return umap_aggregate(patches.features, up).values;
}

std::vector<std::vector<std::uint32_t>> gallery_order(const RowMatrix& features, const Partition& clusters,
                                                      const std::vector<std::uint32_t>& representatives) {
    auto members = clusters.members();
    if (representatives.size() != members.size()) {
        throw std::invalid_argument("gallery_order: one representative per cluster required");
    }
    for (std::size_t c = 0; c < members.size(); ++c) {
        const auto rep = representatives[c];
        auto dist = [&](std::uint32_t i) { return (features.row(i) - features.row(rep)).norm(); };
        std::stable_sort(members[c].begin(), members[c].end(), [&](std::uint32_t a, std::uint32_t b) {
            if ((a == rep) != (b == rep)) return a == rep;
            return dist(a) < dist(b);
        });
    }
    std::stable_sort(members.begin(), members.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return members;
}

SurfaceEmbedding cluster_surfaces(const std::vector<SurfaceRecord>& records, const SurfaceClusterParams& params,
                                  const PipelineConfig& config) {
    if (records.size() < 2) throw std::invalid_argument("cluster_surfaces: need at least 2 surfaces");
    SurfaceEmbedding out;
    const auto s = static_cast<Eigen::Index>(records.size());
    out.features.resize(s, config.d);
    for (Eigen::Index i = 0; i < s; ++i) {
        const auto& rec = records[static_cast<std::size_t>(i)];
        const auto f = surface_features(rec, params.delta1, config);
        if (f.size() != out.features.cols()) out.features.conservativeResize(s, f.size());
        out.features.row(i) = f.transpose();
        out.surface_ids.push_back(rec.surface_id);
    }
    out.projection.method = EmbeddingMethod::umap;
    out.projection.seed = stream_seed(config.dataset_seed, SeedStream::surface_view);
    out.projection.points = layout_2d(out.features, config, out.projection.seed);
    out.tree = ahc_ward(out.features);
    out.clusters = params.cluster_count ? cut_count(out.tree, *params.cluster_count)
                                        : cut_threshold(out.tree, params.delta_s.resolve(out.tree));
    out.representatives = representative(out.features, out.clusters);
    out.gallery = gallery_order(out.features, out.clusters, out.representatives);
    return out;
}

}  // namespace surfpatch
