#include "surfpatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace surfpatch {

std::vector<Vec3> normalize_for_metrics(const std::vector<Vec3>& points) {
    if (points.empty()) throw GeometryError("metrics: empty point set");
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    const double diag = bounding_box_diagonal(points);
    if (!(diag > 0.0)) throw GeometryError("zero extent");
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back((p - centroid) / diag);
    return out;
}

std::vector<double> nearest_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    if (from.empty() || to.empty()) throw GeometryError("metrics: empty point set");
    // Sweep over `to` sorted by x, pruning once the x gap alone exceeds the best distance.
    std::vector<std::size_t> order(to.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return to[i].x() < to[j].x(); });
    std::vector<double> xs(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) xs[i] = to[order[i]].x();

    std::vector<double> out(from.size());
    for (std::size_t q = 0; q < from.size(); ++q) {
        const Vec3& p = from[q];
        const auto start = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), p.x()) - xs.begin());
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = start; i < xs.size() && xs[i] - p.x() <= best; ++i) {
            best = std::min(best, (p - to[order[i]]).norm());
        }
        for (std::size_t i = start; i-- > 0 && p.x() - xs[i] <= best;) {
            best = std::min(best, (p - to[order[i]]).norm());
        }
        out[q] = best;
    }
    return out;
}

PointSetMetrics compare_point_sets(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    const auto na = normalize_for_metrics(a);
    const auto nb = normalize_for_metrics(b);
    const auto ab = nearest_distances(na, nb);
    const auto ba = nearest_distances(nb, na);

    PointSetMetrics m;
    m.hausdorff = std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
    const double mean_ab = std::accumulate(ab.begin(), ab.end(), 0.0) / static_cast<double>(ab.size());
    const double mean_ba = std::accumulate(ba.begin(), ba.end(), 0.0) / static_cast<double>(ba.size());
    m.chamfer = 0.5 * (mean_ab + mean_ba);
    double sq = 0.0;
    for (double v : ab) sq += v * v;
    for (double v : ba) sq += v * v;
    m.rmse = std::sqrt(sq / static_cast<double>(ab.size() + ba.size()));
    return m;
}

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) { return compare_point_sets(a, b).hausdorff; }

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) { return compare_point_sets(a, b).chamfer; }

double rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b) { return compare_point_sets(a, b).rmse; }

}  // namespace surfpatch
