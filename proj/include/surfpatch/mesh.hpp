#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace surfpatch {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Thrown for malformed geometry or input that violates an operation's
/// preconditions.
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Indexed triangle mesh. Orientation is not assumed to be consistent.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::string name;

    [[nodiscard]] std::size_t vertex_count() const { return vertices.size(); }
    [[nodiscard]] std::size_t face_count() const { return faces.size(); }

    /// Throws GeometryError if a face index is out of range or repeated.
    void validate() const;
};

/// Removes vertices not referenced by any face and reindexes faces.
/// `old_to_new`, when given, receives the remap (-1 for dropped vertices).
Mesh compact(const Mesh& mesh, std::vector<std::int64_t>* old_to_new = nullptr);

struct Transform {
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    /// p_normalized = (p + translation) * scale
    [[nodiscard]] Vec3 apply(const Vec3& p) const { return (p + translation) * scale; }
    [[nodiscard]] Vec3 invert(const Vec3& p) const { return p / scale - translation; }
};

struct NormalizedMesh {
    Mesh mesh;
    Transform transform;
};

/// Centers the vertex centroid at the origin and scales the bounding-box
/// diagonal to 1. Throws GeometryError("zero extent") for coincident input.
NormalizedMesh normalize_unit_box(const Mesh& mesh);

/// Same convention applied to a bare point set.
std::vector<Vec3> normalize_points(const std::vector<Vec3>& points);

double bounding_box_diagonal(const std::vector<Vec3>& points);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Area-weighted vertex normals (unit length; zero for isolated vertices).
std::vector<Vec3> vertex_normals(const Mesh& mesh);

/// Undirected vertex graph induced by mesh edges.
struct AdjacencyGraph {
    std::vector<std::vector<std::uint32_t>> neighbors;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // i < j

    [[nodiscard]] std::size_t vertex_count() const { return neighbors.size(); }
};

AdjacencyGraph adjacency(const Mesh& mesh);

/// Builds a graph directly from an edge list over `vertex_count` vertices.
AdjacencyGraph graph_from_edges(std::size_t vertex_count,
                                const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges);

struct Components {
    std::vector<std::uint32_t> label;  // per vertex, dense 0..count-1
    std::size_t count = 0;
};

Components connected_components(const AdjacencyGraph& graph);

/// Keeps the component with most faces; ties go to the lowest label.
Mesh largest_component(const Mesh& mesh);

}  // namespace surfpatch
