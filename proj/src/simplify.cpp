#include "surfpatch/simplify.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

namespace surfpatch {

void SimplifyParams::validate() const {
    if (!(epsilon >= 0.0)) throw GeometryError("simplify: epsilon must be >= 0");
    if (min_vertices < 4) throw GeometryError("simplify: min_vertices must be >= 4");
}

namespace {

using Quadric = Eigen::Matrix4d;

Quadric plane_quadric(const Vec3& normal, const Vec3& point, double weight) {
    Eigen::Vector4d p;
    p << normal, -normal.dot(point);
    return weight * p * p.transpose();
}

double quadric_error(const Quadric& q, const Vec3& v) {
    Eigen::Vector4d h;
    h << v, 1.0;
    return std::max(0.0, h.dot(q * h));
}

struct Candidate {
    double cost;
    std::uint32_t a, b;
    std::uint32_t version_a, version_b;
    Vec3 target;

    bool operator>(const Candidate& o) const {
        return std::tie(cost, a, b) > std::tie(o.cost, o.a, o.b);
    }
};

class Collapser {
public:
    Collapser(std::vector<Vec3> positions, std::vector<Face> faces, const SimplifyParams& params)
        : pos_(std::move(positions)), faces_(std::move(faces)), params_(params) {
        face_alive_.assign(faces_.size(), 1);
        vertex_alive_.assign(pos_.size(), 0);
        version_.assign(pos_.size(), 0);
        vfaces_.resize(pos_.size());
        quadric_.assign(pos_.size(), Quadric::Zero());
        moved_.assign(pos_.size(), 0);
        for (std::uint32_t f = 0; f < faces_.size(); ++f) {
            for (auto v : faces_[f]) {
                vfaces_[v].push_back(f);
                vertex_alive_[v] = 1;
            }
        }
        alive_count_ = static_cast<std::size_t>(std::count(vertex_alive_.begin(), vertex_alive_.end(), 1));
        init_quadrics();
    }

    void run(SimplifyStats& stats) {
        for (std::uint32_t a = 0; a < pos_.size(); ++a) {
            for (auto b : neighbors(a)) {
                if (a < b) push(a, b);
            }
        }
        while (!heap_.empty() && alive_count_ > params_.min_vertices) {
            const Candidate c = heap_.top();
            heap_.pop();
            if (!vertex_alive_[c.a] || !vertex_alive_[c.b]) continue;
            if (version_[c.a] != c.version_a || version_[c.b] != c.version_b) continue;
            if (c.cost > params_.epsilon) break;
            if (!topology_ok(c.a, c.b)) {
                ++stats.rejected_topology;
                continue;
            }
            if (!orientation_ok(c.a, c.b, c.target)) {
                ++stats.rejected_flip;
                continue;
            }
            collapse(c.a, c.b, c.target);
            stats.last_cost = c.cost;
            ++stats.collapses;
        }
    }

    [[nodiscard]] const std::vector<Vec3>& positions() const { return pos_; }
    [[nodiscard]] const std::vector<char>& moved() const { return moved_; }

    [[nodiscard]] std::vector<Face> alive_faces() const {
        std::vector<Face> out;
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            if (face_alive_[f]) out.push_back(faces_[f]);
        }
        return out;
    }

private:
    void init_quadrics() {
        double total = 0.0;
        std::size_t edges = 0;
        for (std::uint32_t f = 0; f < faces_.size(); ++f) {
            const auto& t = faces_[f];
            const Vec3 n = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
            const double len = n.norm();
            if (len > 0.0) {
                const Quadric q = plane_quadric(n / len, pos_[t[0]], 1.0);
                for (auto v : t) quadric_[v] += q;
            }
            for (int k = 0; k < 3; ++k) {
                const auto a = t[k];
                const auto b = t[(k + 1) % 3];
                total += (pos_[a] - pos_[b]).norm();
                ++edges;
                if (edge_faces(a, b).size() == 1 && len > 0.0) {
                    // Plane containing the boundary edge, perpendicular to its face.
                    Vec3 e = pos_[b] - pos_[a];
                    Vec3 bn = e.cross(n / len);
                    const double bl = bn.norm();
                    if (bl > 0.0) {
                        const Quadric q = plane_quadric(bn / bl, pos_[a], params_.boundary_weight);
                        quadric_[a] += q;
                        quadric_[b] += q;
                    }
                }
            }
        }
        const double mean_edge = edges ? total / static_cast<double>(edges) : 0.0;
        if (!(mean_edge > 0.0)) throw GeometryError("simplify: zero mean edge length");
        cost_scale_ = 1.0 / (mean_edge * mean_edge);
    }

    std::vector<std::uint32_t> edge_faces(std::uint32_t a, std::uint32_t b) const {
        std::vector<std::uint32_t> out;
        for (auto f : vfaces_[a]) {
            if (!face_alive_[f]) continue;
            const auto& t = faces_[f];
            if (t[0] == b || t[1] == b || t[2] == b) out.push_back(f);
        }
        return out;
    }

    std::vector<std::uint32_t> neighbors(std::uint32_t v) const {
        std::vector<std::uint32_t> out;
        for (auto f : vfaces_[v]) {
            if (!face_alive_[f]) continue;
            for (auto w : faces_[f]) {
                if (w != v) out.push_back(w);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool is_boundary_vertex(std::uint32_t v) const {
        for (auto w : neighbors(v)) {
            if (edge_faces(v, w).size() == 1) return true;
        }
        return false;
    }

    std::pair<double, Vec3> evaluate(std::uint32_t a, std::uint32_t b) const {
        const Quadric q = quadric_[a] + quadric_[b];
        Eigen::Matrix4d m = q;
        m.row(3) << 0.0, 0.0, 0.0, 1.0;
        Eigen::JacobiSVD<Eigen::Matrix4d> svd(m);
        const auto& s = svd.singularValues();
        if (s(3) > 0.0 && s(0) / s(3) < 1e8) {
            const Eigen::Vector4d h = m.fullPivLu().solve(Eigen::Vector4d(0.0, 0.0, 0.0, 1.0));
            const Vec3 p = h.head<3>();
            if (p.allFinite()) return {quadric_error(q, p) * cost_scale_, p};
        }
        const Vec3 options[3] = {pos_[a], pos_[b], 0.5 * (pos_[a] + pos_[b])};
        double best = quadric_error(q, options[0]);
        Vec3 best_p = options[0];
        for (int k = 1; k < 3; ++k) {
            const double e = quadric_error(q, options[k]);
            if (e < best) {
                best = e;
                best_p = options[k];
            }
        }
        return {best * cost_scale_, best_p};
    }

    void push(std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        auto [cost, p] = evaluate(a, b);
        heap_.push(Candidate{cost, a, b, version_[a], version_[b], p});
    }

    bool topology_ok(std::uint32_t a, std::uint32_t b) const {
        const auto shared = edge_faces(a, b);
        if (shared.empty() || shared.size() > 2) return false;
        std::vector<std::uint32_t> opposite;
        for (auto f : shared) {
            for (auto w : faces_[f]) {
                if (w != a && w != b) opposite.push_back(w);
            }
        }
        std::sort(opposite.begin(), opposite.end());
        if (std::adjacent_find(opposite.begin(), opposite.end()) != opposite.end()) return false;
        const auto na = neighbors(a);
        const auto nb = neighbors(b);
        std::vector<std::uint32_t> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
        if (common != opposite) return false;
        if (shared.size() == 2 && is_boundary_vertex(a) && is_boundary_vertex(b)) return false;
        // A closed tetrahedron-like fan cannot shrink further without degenerating.
        return na.size() + nb.size() > 4;
    }

    bool orientation_ok(std::uint32_t a, std::uint32_t b, const Vec3& target) const {
        for (auto v : {a, b}) {
            for (auto f : vfaces_[v]) {
                if (!face_alive_[f]) continue;
                const auto& t = faces_[f];
                const bool has_a = t[0] == a || t[1] == a || t[2] == a;
                const bool has_b = t[0] == b || t[1] == b || t[2] == b;
                if (has_a && has_b) continue;
                Vec3 p[3];
                for (int k = 0; k < 3; ++k) p[k] = pos_[t[k]];
                const Vec3 before = (p[1] - p[0]).cross(p[2] - p[0]);
                for (int k = 0; k < 3; ++k) {
                    if (t[k] == v) p[k] = target;
                }
                const Vec3 after = (p[1] - p[0]).cross(p[2] - p[0]);
                if (after.norm() < 2e-14) return false;
                if (before.dot(after) <= 0.0) return false;
            }
        }
        return true;
    }

    void collapse(std::uint32_t a, std::uint32_t b, const Vec3& target) {
        for (auto f : vfaces_[b]) {
            if (!face_alive_[f]) continue;
            auto& t = faces_[f];
            if (t[0] == a || t[1] == a || t[2] == a) {
                face_alive_[f] = 0;
                continue;
            }
            for (auto& w : t) {
                if (w == b) w = a;
            }
            vfaces_[a].push_back(f);
        }
        vfaces_[b].clear();
        auto& fa = vfaces_[a];
        fa.erase(std::remove_if(fa.begin(), fa.end(), [&](auto f) { return !face_alive_[f]; }), fa.end());
        std::sort(fa.begin(), fa.end());
        fa.erase(std::unique(fa.begin(), fa.end()), fa.end());

        vertex_alive_[b] = 0;
        --alive_count_;
        pos_[a] = target;
        moved_[a] = 1;
        quadric_[a] += quadric_[b];
        ++version_[a];
        ++version_[b];
        for (auto w : neighbors(a)) push(a, w);
    }

    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    const SimplifyParams& params_;
    std::vector<char> face_alive_;
    std::vector<char> vertex_alive_;
    std::vector<char> moved_;
    std::vector<std::uint32_t> version_;
    std::vector<std::vector<std::uint32_t>> vfaces_;
    std::vector<Quadric> quadric_;
    std::size_t alive_count_ = 0;
    double cost_scale_ = 1.0;
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

}  // namespace

Mesh simplify_qem(const Mesh& mesh, const SimplifyParams& params, SimplifyStats* stats) {
    params.validate();
    mesh.validate();
    SimplifyStats local;
    if (mesh.faces.empty()) {
        if (stats) *stats = local;
        return mesh;
    }
    auto normalized = normalize_unit_box(mesh);
    Collapser collapser(std::move(normalized.mesh.vertices), mesh.faces, params);
    collapser.run(local);
    if (stats) *stats = local;
    if (local.collapses == 0) return mesh;

    Mesh out;
    out.name = mesh.name;
    out.vertices = mesh.vertices;
    const auto& moved = collapser.moved();
    const auto& pos = collapser.positions();
    for (std::size_t v = 0; v < out.vertices.size(); ++v) {
        if (moved[v]) out.vertices[v] = normalized.transform.invert(pos[v]);
    }
    out.faces = collapser.alive_faces();
    return compact(out);
}

}  // namespace surfpatch
