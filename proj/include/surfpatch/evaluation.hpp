#pragma once

#include "surfpatch/metrics.hpp"
#include "surfpatch/pipeline.hpp"

#include "json.hpp"

#include <cstdint>
#include <vector>

namespace surfpatch {

struct EvaluationParams {
    std::size_t queries = 100;
    CutLevel delta1 = CutLevel::percent(50.0);
    CutLevel delta2 = CutLevel::percent(50.0);
    std::uint64_t seed = 0;
};

struct MetricStats {
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t count = 0;
};

struct MetricSummary {
    MetricStats hausdorff;
    MetricStats chamfer;
    MetricStats rmse;
};

struct QueryOutcome {
    PatchRef query;
    std::size_t query_vertices = 0;
    std::size_t matches = 0;  // including the query itself
    double hausdorff = 0.0;   // means over this query's evaluated pairs
    double chamfer = 0.0;
    double rmse = 0.0;
    double baseline_hausdorff = 0.0;
};

struct EvaluationReport {
    std::vector<QueryOutcome> per_query;
    MetricSummary matched;          // every (query, match) pair, self included
    MetricSummary matched_others;   // self-matches left out
    MetricSummary baseline;         // random patch pairs from the same surface, same counts
    std::size_t skipped_pairs = 0;  // pairs with a zero-extent patch
};

/// Draws `queries` (surface, patch) pairs uniformly, matches each within its
/// own surface and compares the query patch with every match. Deterministic
/// for a fixed seed.
EvaluationReport evaluate_matching(const std::vector<SurfaceRecord>& records, const EvaluationParams& params,
                                   const PipelineConfig& config);

nlohmann::json to_json(const EvaluationReport& report, const EvaluationParams& params);

}  // namespace surfpatch
