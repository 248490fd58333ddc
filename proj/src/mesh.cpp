#include "surfpatch/mesh.hpp"

#include <algorithm>
#include <cmath>

namespace surfpatch {

void Mesh::validate() const {
    const auto n = vertices.size();
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        for (auto idx : t) {
            if (idx >= n) {
                throw GeometryError("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(idx) + " out of range");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw GeometryError("face " + std::to_string(f) + " is degenerate");
        }
    }
}

Mesh compact(const Mesh& mesh, std::vector<std::int64_t>* old_to_new) {
    std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
    Mesh out;
    out.name = mesh.name;
    out.faces.reserve(mesh.faces.size());
    // Vertex order is preserved; only unreferenced entries are dropped.
    std::vector<char> used(mesh.vertices.size(), 0);
    for (const auto& f : mesh.faces) {
        for (auto v : f) used[v] = 1;
    }
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (used[v]) {
            remap[v] = static_cast<std::int64_t>(out.vertices.size());
            out.vertices.push_back(mesh.vertices[v]);
        }
    }
    for (const auto& f : mesh.faces) {
        out.faces.push_back({static_cast<std::uint32_t>(remap[f[0]]),
                             static_cast<std::uint32_t>(remap[f[1]]),
                             static_cast<std::uint32_t>(remap[f[2]])});
    }
    if (old_to_new) *old_to_new = std::move(remap);
    return out;
}

double bounding_box_diagonal(const std::vector<Vec3>& points) {
    if (points.empty()) return 0.0;
    Vec3 lo = points.front();
    Vec3 hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

namespace {

Transform unit_box_transform(const std::vector<Vec3>& points) {
    if (points.empty()) throw GeometryError("zero extent");
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    const double diag = bounding_box_diagonal(points);
    if (!(diag > 0.0) || !std::isfinite(diag)) throw GeometryError("zero extent");
    return Transform{-centroid, 1.0 / diag};
}

}  // namespace

NormalizedMesh normalize_unit_box(const Mesh& mesh) {
    NormalizedMesh out;
    out.transform = unit_box_transform(mesh.vertices);
    out.mesh.faces = mesh.faces;
    out.mesh.name = mesh.name;
    out.mesh.vertices.reserve(mesh.vertices.size());
    for (const auto& p : mesh.vertices) out.mesh.vertices.push_back(out.transform.apply(p));
    return out;
}

std::vector<Vec3> normalize_points(const std::vector<Vec3>& points) {
    const auto t = unit_box_transform(points);
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(t.apply(p));
    return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
    std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        const Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                           .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        for (auto v : f) normals[v] += n;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        if (len > 0.0) n /= len;
    }
    return normals;
}

AdjacencyGraph graph_from_edges(std::size_t vertex_count,
                                const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
    AdjacencyGraph g;
    g.neighbors.resize(vertex_count);
    for (auto [a, b] : edges) {
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        g.edges.emplace_back(a, b);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    for (auto [a, b] : g.edges) {
        g.neighbors[a].push_back(b);
        g.neighbors[b].push_back(a);
    }
    for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
    return g;
}

AdjacencyGraph adjacency(const Mesh& mesh) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces) {
        edges.emplace_back(f[0], f[1]);
        edges.emplace_back(f[1], f[2]);
        edges.emplace_back(f[2], f[0]);
    }
    return graph_from_edges(mesh.vertices.size(), edges);
}

Components connected_components(const AdjacencyGraph& graph) {
    const auto n = graph.vertex_count();
    constexpr auto unset = static_cast<std::uint32_t>(-1);
    Components c;
    c.label.assign(n, unset);
    std::vector<std::uint32_t> stack;
    for (std::uint32_t s = 0; s < n; ++s) {
        if (c.label[s] != unset) continue;
        const auto id = static_cast<std::uint32_t>(c.count++);
        c.label[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (auto w : graph.neighbors[v]) {
                if (c.label[w] == unset) {
                    c.label[w] = id;
                    stack.push_back(w);
                }
            }
        }
    }
    return c;
}

Mesh largest_component(const Mesh& mesh) {
    if (mesh.faces.empty()) return Mesh{{}, {}, mesh.name};
    const auto comps = connected_components(adjacency(mesh));
    std::vector<std::size_t> face_count(comps.count, 0);
    for (const auto& f : mesh.faces) ++face_count[comps.label[f[0]]];
    const auto best = static_cast<std::uint32_t>(
        std::max_element(face_count.begin(), face_count.end()) - face_count.begin());
    Mesh kept;
    kept.name = mesh.name;
    kept.vertices = mesh.vertices;
    for (const auto& f : mesh.faces) {
        if (comps.label[f[0]] == best) kept.faces.push_back(f);
    }
    return compact(kept);
}

}  // namespace surfpatch
