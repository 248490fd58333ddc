#pragma once

#include "surfpatch/flow.hpp"
#include "surfpatch/seeding.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace surfpatch {

struct SeedCurve {
    std::vector<Vec3> points;  // control polyline
    int samples = 16;          // particles seeded along the polyline

    [[nodiscard]] double length() const;
    /// `samples` points equally spaced by arc length.
    [[nodiscard]] std::vector<Vec3> resample() const;
};

struct TraceParams {
    double h = 0.05;
    int max_steps = 120;
    double d_min = 0.01;  // merge neighbors closer than this
    double d_max = 0.03;  // insert a particle between neighbors farther than this
};

struct StreamSurface {
    Mesh mesh;
    std::vector<std::uint32_t> streamline;  // per vertex
    std::vector<double> arc_length;         // per vertex

    // Spacing of adjacent same-front particles over all emitted fronts.
    std::size_t front_pairs = 0;
    std::size_t front_pairs_in_band = 0;  // within [d_min / 2, 2 d_max]
};

/// Advances a particle front seeded on the curve, refining it between steps
/// and stitching consecutive fronts with triangles. Returns the largest
/// connected piece, compacted. Throws GeometryError for a curve shorter than
/// 1e-9.
StreamSurface trace_stream_surface(const VectorField& field, const SeedCurve& curve, const TraceParams& params);

struct SeedCurveParams {
    double min_length = 0.15;
    double max_length = 0.35;
    int control_points = 16;
    int samples = 12;
};

/// Curves started at uniform random points and marched along the field
/// binormal normalize(v x Jv). Deterministic per rng_seed.
std::vector<SeedCurve> random_seed_curves(const VectorField& field, std::size_t count, const SeedCurveParams& params,
                                          std::uint64_t rng_seed);

struct EnsembleParams {
    TraceParams trace;
    SeedCurveParams curve;
    std::size_t min_vertices = 200;
    int max_attempts = 64;
    unsigned jobs = 1;
};

struct EnsembleEntry {
    std::string file;
    std::uint64_t rng_seed = 0;
    SeedCurve curve;
    std::size_t vertex_count = 0;
};

struct Ensemble {
    std::filesystem::path manifest;
    std::vector<EnsembleEntry> entries;
};

/// Traces `count` surfaces with at least min_vertices vertices each (redrawing
/// smaller ones) and writes surface_NNNN.obj files plus manifest.json.
Ensemble generate_ensemble(const VectorField& field, std::size_t count, const EnsembleParams& params,
                           std::uint64_t rng_seed, const std::filesystem::path& out_dir);

/// Reads manifest.json written by generate_ensemble.
std::vector<EnsembleEntry> read_ensemble_manifest(const std::filesystem::path& manifest, std::string* field = nullptr);

}  // namespace surfpatch
