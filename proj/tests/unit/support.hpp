#pragma once

#include "surfpatch/mesh_io.hpp"
#include "surfpatch/pipeline.hpp"
#include "surfpatch/stream_surface.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

namespace surfpatch::testing {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("surfpatch_" + tag + "_" + std::to_string(rd()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// -- metric oracle: plain loops, own normalization --------------------------

inline std::vector<Vec3> oracle_normalize(const std::vector<Vec3>& pts) {
    Vec3 c(0, 0, 0);
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        c += p;
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }
    c /= static_cast<double>(pts.size());
    const double diag = (hi - lo).norm();
    std::vector<Vec3> out;
    for (const auto& p : pts) out.push_back((p - c) / diag);
    return out;
}

struct OracleMetrics {
    double hausdorff = 0.0;
    double chamfer = 0.0;
    double rmse = 0.0;
};

inline OracleMetrics oracle_metrics(const std::vector<Vec3>& a_raw, const std::vector<Vec3>& b_raw) {
    const auto a = oracle_normalize(a_raw);
    const auto b = oracle_normalize(b_raw);
    auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        std::vector<double> d;
        for (const auto& p : from) {
            double best = INFINITY;
            for (const auto& q : to) best = std::min(best, (p - q).norm());
            d.push_back(best);
        }
        return d;
    };
    const auto ab = directed(a, b);
    const auto ba = directed(b, a);
    OracleMetrics m;
    double sa = 0, sb = 0, sq = 0;
    for (double v : ab) {
        m.hausdorff = std::max(m.hausdorff, v);
        sa += v;
        sq += v * v;
    }
    for (double v : ba) {
        m.hausdorff = std::max(m.hausdorff, v);
        sb += v;
        sq += v * v;
    }
    m.chamfer = 0.5 * (sa / ab.size() + sb / ba.size());
    m.rmse = std::sqrt(sq / (ab.size() + ba.size()));
    return m;
}

// -- geometry oracles --------------------------------------------------------

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double distance_to_mesh(const Vec3& p, const Mesh& m) {
    double best = INFINITY;
    for (const auto& f : m.faces)
        best = std::min(best, (p - closest_on_triangle(p, m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]])).norm());
    return best;
}

/// Generalized symmetric-definite eigenvalues of (S, M) through Eigen's dense solver.
inline Eigen::VectorXd oracle_eigenvalues(const Eigen::SparseMatrix<double>& s, const Eigen::VectorXd& mass) {
    const Eigen::MatrixXd sd = Eigen::MatrixXd(s);
    const Eigen::MatrixXd md = mass.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sd, md);
    return es.eigenvalues();
}

inline Mesh disjoint_union(const Mesh& a, const Mesh& b, const Vec3& shift) {
    Mesh out = a;
    const auto base = static_cast<std::uint32_t>(a.vertices.size());
    for (const auto& v : b.vertices) out.vertices.push_back(v + shift);
    for (const auto& f : b.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    return out;
}

inline Eigen::Matrix3d rotation(double ax, double ay, double az) {
    return (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
            Eigen::AngleAxisd(ax, Vec3::UnitX()))
        .toRotationMatrix();
}

/// Max |a - b| over max |a|.
inline double relative_change(const RowMatrix& a, const RowMatrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
}

/// True when every patch is adjacency-connected through its own vertices.
inline bool patches_connected(const Mesh& mesh, const std::vector<std::vector<std::uint32_t>>& patches) {
    const auto g = adjacency(mesh);
    std::vector<std::int64_t> owner(mesh.vertex_count(), -1);
    for (std::size_t p = 0; p < patches.size(); ++p)
        for (auto v : patches[p]) owner[v] = static_cast<std::int64_t>(p);
    for (std::size_t p = 0; p < patches.size(); ++p) {
        std::set<std::uint32_t> seen{patches[p].front()};
        std::vector<std::uint32_t> stack{patches[p].front()};
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (auto w : g.neighbors[v])
                if (owner[w] == static_cast<std::int64_t>(p) && seen.insert(w).second) stack.push_back(w);
        }
        if (seen.size() != patches[p].size()) return false;
    }
    return true;
}

/// Every fine block lies inside exactly one coarse block.
inline bool nested(const Partition& fine, const Partition& coarse) {
    std::vector<std::int64_t> image(fine.cluster_count, -1);
    for (std::size_t i = 0; i < fine.labels.size(); ++i) {
        auto& slot = image[fine.labels[i]];
        if (slot < 0) slot = coarse.labels[i];
        if (slot != static_cast<std::int64_t>(coarse.labels[i])) return false;
    }
    return true;
}

/// Small tornado ensemble preprocessed once per test binary.
struct Fixture {
    PipelineConfig config;
    std::vector<SurfaceRecord> records;
    std::vector<Mesh> inputs;
};

inline const Fixture& tornado_fixture() {
    static const Fixture fixture = [] {
        Fixture f;
        f.config.dataset_seed = 11;
        TempDir dir("fixture");
        const auto ensemble = generate_ensemble(VectorField::tornado(), 4, EnsembleParams{}, 5, dir.path());
        for (std::size_t i = 0; i < ensemble.entries.size(); ++i) {
            f.inputs.push_back(load_obj(dir.path() / ensemble.entries[i].file));
            f.records.push_back(preprocess_surface(f.inputs.back(), static_cast<std::uint32_t>(i), f.config));
        }
        return f;
    }();
    return fixture;
}

}  // namespace surfpatch::testing
