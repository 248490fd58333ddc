#pragma once

#include "surfpatch/mesh.hpp"

#include <vector>

namespace surfpatch {

/// Centroid moved to the origin and bounding-box diagonal scaled to 1.
/// Throws GeometryError("zero extent") for empty or single-location sets.
std::vector<Vec3> normalize_for_metrics(const std::vector<Vec3>& points);

/// For every point of `from`, the distance to its nearest point in `to`.
std::vector<double> nearest_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

// Point-set dissimilarities. Each set is normalized independently first;
// empty or zero-extent sets throw GeometryError.

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|)
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
/// sqrt of the mean squared nearest distance over both directed sides.
double rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct PointSetMetrics {
    double hausdorff = 0.0;
    double chamfer = 0.0;
    double rmse = 0.0;
};

/// All three metrics from one pair of nearest-distance sweeps.
PointSetMetrics compare_point_sets(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

}  // namespace surfpatch
