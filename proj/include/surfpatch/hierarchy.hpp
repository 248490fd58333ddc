#pragma once

#include "surfpatch/hks.hpp"
#include "surfpatch/mesh.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace surfpatch {

/// Ward dendrogram. Leaves are clusters 0..leaf_count-1 and merge i creates
/// cluster leaf_count + i. A disconnected constraint graph yields a forest:
/// one merge fewer per extra component.
struct LinkageTree {
    struct Merge {
        std::uint32_t a = 0;  // a < b
        std::uint32_t b = 0;
        double distance = 0.0;  // non-decreasing along `merges`
        std::uint32_t size = 0;
    };

    std::vector<Merge> merges;
    std::size_t leaf_count = 0;

    /// Largest merge distance, 0 for a tree without merges.
    [[nodiscard]] double top_distance() const { return merges.empty() ? 0.0 : merges.back().distance; }
    [[nodiscard]] std::size_t root_count() const { return leaf_count - merges.size(); }
};

struct Partition {
    std::vector<std::uint32_t> labels;  // dense, first-appearance order over items
    std::size_t cluster_count = 0;

    [[nodiscard]] std::vector<std::vector<std::uint32_t>> members() const;
};

/// Ward agglomeration on the rows of `points`. Without constraints this is
/// the stored-matrix Lance-Williams scheme; with constraints only clusters
/// joined by at least one graph edge may merge. Ties go to the smallest
/// (cluster_a, cluster_b) pair. Merge heights are reported as the running
/// maximum, since constrained Ward can produce inversions.
LinkageTree ahc_ward(const RowMatrix& points, const AdjacencyGraph* constraints = nullptr);

/// Applies every merge with distance <= delta.
Partition cut_threshold(const LinkageTree& tree, double delta);

/// Stops agglomerating at k clusters (or at the root count of a forest).
/// Throws std::out_of_range unless 1 <= k <= leaf_count.
Partition cut_count(const LinkageTree& tree, std::size_t k);

/// Per cluster: the member closest to the cluster mean, ties to the lowest index.
std::vector<std::uint32_t> representative(const RowMatrix& points, const Partition& partition);

/// Maps a slider value in [0, 100] linearly onto [0, top merge distance];
/// +inf passes through unchanged.
double slider_to_distance(const LinkageTree& tree, double percent);

}  // namespace surfpatch
