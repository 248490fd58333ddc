#include "surfpatch/evaluation.hpp"

#include "surfpatch/seeding.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>

namespace surfpatch {

namespace {

struct Accumulator {
    std::vector<double> h, c, r;

    void add(const PointSetMetrics& m) {
        h.push_back(m.hausdorff);
        c.push_back(m.chamfer);
        r.push_back(m.rmse);
    }

    static MetricStats stats(const std::vector<double>& v) {
        MetricStats s;
        s.count = v.size();
        if (v.empty()) return s;
        for (double x : v) s.mean += x;
        s.mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(var / static_cast<double>(v.size()));
        return s;
    }

    [[nodiscard]] MetricSummary summary() const { return {stats(h), stats(c), stats(r)}; }
};

struct SurfaceCache {
    PatchSegmentation segmentation;
    PatchEmbedding embedding;
    LinkageTree tree;
};

std::vector<Vec3> patch_points(const SurfaceRecord& rec, const std::vector<std::uint32_t>& vertices) {
    std::vector<Vec3> out;
    out.reserve(vertices.size());
    for (auto v : vertices) out.push_back(rec.mesh.vertices[v]);
    return out;
}

std::optional<PointSetMetrics> compare_patches(const SurfaceRecord& rec, const PatchSegmentation& seg,
                                               std::uint32_t a, std::uint32_t b) {
    if (a == b) return PointSetMetrics{};
    try {
        return compare_point_sets(patch_points(rec, seg.patches[a]), patch_points(rec, seg.patches[b]));
    } catch (const GeometryError&) {
        return std::nullopt;
    }
}

nlohmann::json stats_json(const MetricStats& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

nlohmann::json summary_json(const MetricSummary& s) {
    return {{"hausdorff", stats_json(s.hausdorff)}, {"chamfer", stats_json(s.chamfer)}, {"rmse", stats_json(s.rmse)}};
}

nlohmann::json cut_json(const CutLevel& c) {
    const double v = c.value();
    return {{"unit", c.unit() == CutLevel::Unit::percent ? "percent" : "absolute"},
            {"value", std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v)}};
}

}  // namespace

EvaluationReport evaluate_matching(const std::vector<SurfaceRecord>& records, const EvaluationParams& params,
                                   const PipelineConfig& config) {
    if (records.empty()) throw std::invalid_argument("evaluate_matching: empty store");
    std::mt19937_64 rng(derive_seed(params.seed, static_cast<std::uint64_t>(SeedStream::evaluation)));
    std::map<std::size_t, SurfaceCache> cache;
    Accumulator matched, others, baseline;
    EvaluationReport report;

    for (std::size_t q = 0; q < params.queries; ++q) {
        const auto si = std::uniform_int_distribution<std::size_t>(0, records.size() - 1)(rng);
        const auto& rec = records[si];
        auto it = cache.find(si);
        if (it == cache.end()) {
            SurfaceCache c;
            c.segmentation = segment_patches(rec, params.delta1);
            c.embedding = embed_patches({{&rec, &c.segmentation}}, config);
            c.tree = patch_tree(c.embedding, config);
            it = cache.emplace(si, std::move(c)).first;
        }
        const auto& sc = it->second;
        const auto p = static_cast<std::uint32_t>(sc.segmentation.patch_count());
        std::uniform_int_distribution<std::uint32_t> pick(0, p - 1);
        const PatchRef query{rec.surface_id, pick(rng)};
        const auto result = match_patches(sc.embedding, sc.tree, query, params.delta2, config);

        QueryOutcome out;
        out.query = query;
        out.query_vertices = sc.segmentation.patches[query.patch_id].size();
        out.matches = result.matches.size();
        Accumulator local, local_base;
        for (const auto& m : result.matches) {
            const auto metrics = compare_patches(rec, sc.segmentation, query.patch_id, m.patch.patch_id);
            if (!metrics) {
                ++report.skipped_pairs;
                continue;
            }
            matched.add(*metrics);
            local.add(*metrics);
            if (m.patch.patch_id != query.patch_id) others.add(*metrics);
        }
        for (std::size_t k = 0; k < result.matches.size(); ++k) {
            const auto a = pick(rng);
            const auto b = pick(rng);
            const auto metrics = compare_patches(rec, sc.segmentation, a, b);
            if (!metrics) {
                ++report.skipped_pairs;
                continue;
            }
            baseline.add(*metrics);
            local_base.add(*metrics);
        }
        const auto ls = local.summary();
        out.hausdorff = ls.hausdorff.mean;
        out.chamfer = ls.chamfer.mean;
        out.rmse = ls.rmse.mean;
        out.baseline_hausdorff = local_base.summary().hausdorff.mean;
        report.per_query.push_back(out);
    }
    report.matched = matched.summary();
    report.matched_others = others.summary();
    report.baseline = baseline.summary();
    return report;
}

nlohmann::json to_json(const EvaluationReport& report, const EvaluationParams& params) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& q : report.per_query) {
        per.push_back({{"surface_id", q.query.surface_id},
                       {"patch_id", q.query.patch_id},
                       {"query_vertices", q.query_vertices},
                       {"matches", q.matches},
                       {"hausdorff", q.hausdorff},
                       {"chamfer", q.chamfer},
                       {"rmse", q.rmse},
                       {"baseline_hausdorff", q.baseline_hausdorff}});
    }
    const nlohmann::json summary = {{"matched", summary_json(report.matched)},
                                    {"matched_excluding_self", summary_json(report.matched_others)},
                                    {"baseline", summary_json(report.baseline)},
                                    {"skipped_pairs", report.skipped_pairs}};
    return {{"config",
             {{"queries", params.queries},
              {"seed", params.seed},
              {"delta1", cut_json(params.delta1)},
              {"delta2", cut_json(params.delta2)}}},
            {"per_query", per},
            {"summary", summary}};
}

}  // namespace surfpatch
