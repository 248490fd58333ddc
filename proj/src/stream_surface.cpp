#include "surfpatch/stream_surface.hpp"

#include "surfpatch/mesh_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

namespace surfpatch {

double SeedCurve::length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
    return total;
}

std::vector<Vec3> SeedCurve::resample() const {
    if (samples < 2) throw std::invalid_argument("seed curve needs at least 2 samples");
    if (points.empty()) throw GeometryError("seed curve has no points");
    const double total = length();
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(samples));
    std::size_t seg = 0;
    double seg_start = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double target = total * s / (samples - 1);
        while (seg + 2 < points.size() && seg_start + (points[seg + 1] - points[seg]).norm() < target) {
            seg_start += (points[seg + 1] - points[seg]).norm();
            ++seg;
        }
        if (points.size() == 1) {
            out.push_back(points[0]);
            continue;
        }
        const double len = (points[seg + 1] - points[seg]).norm();
        const double t = len > 0.0 ? std::clamp((target - seg_start) / len, 0.0, 1.0) : 0.0;
        out.push_back(points[seg] + t * (points[seg + 1] - points[seg]));
    }
    return out;
}

namespace {

struct Particle {
    std::uint32_t vertex;  // index into the raw vertex list
    std::uint32_t line;
    double arc;
};

struct Candidate {
    Vec3 pos;
    double param;  // position along the old front, in particle-index units
    std::uint32_t line;
    double arc;
};

class Tracer {
public:
    Tracer(const VectorField& field, const TraceParams& params) : field_(field), params_(params) {}

    StreamSurface run(const SeedCurve& curve) {
        if (curve.length() < 1e-9) throw GeometryError("seed curve is degenerate (length < 1e-9)");
        std::vector<Particle> front;
        for (const auto& p : curve.resample()) {
            if (!field_.domain().contains(p)) continue;
            front.push_back({add_vertex(p, next_line_, 0.0), next_line_++, 0.0});
        }
        std::vector<std::vector<Particle>> fronts;
        if (front.size() >= 2) fronts.push_back(std::move(front));

        for (int step = 0; step < params_.max_steps && !fronts.empty(); ++step) {
            std::vector<std::vector<Particle>> next;
            for (const auto& f : fronts) advance(f, next);
            fronts = std::move(next);
            if (positions_.size() > kVertexCap) break;
        }
        return finish();
    }

private:
    static constexpr std::size_t kVertexCap = 500000;

    std::uint32_t add_vertex(const Vec3& p, std::uint32_t line, double arc) {
        positions_.push_back(p);
        lines_.push_back(line);
        arcs_.push_back(arc);
        return static_cast<std::uint32_t>(positions_.size() - 1);
    }

    // One RK4 step that also rejects stalled particles.
    std::optional<Vec3> move(const Vec3& x) const {
        if (field_.eval(x).value.norm() < 1e-9) return std::nullopt;
        auto y = rk4_step(field_, x, params_.h);
        if (!y || (*y - x).norm() < 1e-9) return std::nullopt;
        return y;
    }

    void advance(const std::vector<Particle>& front, std::vector<std::vector<Particle>>& out) {
        const std::size_t n = front.size();
        std::vector<std::optional<Vec3>> moved(n);
        for (std::size_t i = 0; i < n; ++i) moved[i] = move(positions_[front[i].vertex]);

        std::size_t s = 0;
        while (s < n) {
            if (!moved[s]) {
                ++s;
                continue;
            }
            std::size_t e = s;
            while (e + 1 < n && moved[e + 1]) ++e;
            if (e > s) stitch_run(front, moved, s, e, out);
            s = e + 1;
        }
    }

    void stitch_run(const std::vector<Particle>& front, const std::vector<std::optional<Vec3>>& moved, std::size_t s,
                    std::size_t e, std::vector<std::vector<Particle>>& out) {
        std::vector<Candidate> cand;
        for (std::size_t i = s; i <= e; ++i) {
            const auto& p = front[i];
            const Vec3& from = positions_[p.vertex];
            cand.push_back({*moved[i], static_cast<double>(i - s), p.line, p.arc + (*moved[i] - from).norm()});
            if (i == e) break;
            // Refinement: particles seeded on the old segment, then advected.
            const double gap = (*moved[i + 1] - *moved[i]).norm();
            if (gap > params_.d_max) {
                const int pieces = static_cast<int>(std::ceil(gap / params_.d_max));
                const Vec3& a = positions_[front[i].vertex];
                const Vec3& b = positions_[front[i + 1].vertex];
                for (int q = 1; q < pieces; ++q) {
                    const double t = static_cast<double>(q) / pieces;
                    const Vec3 seed = a + t * (b - a);
                    auto y = move(seed);
                    if (!y) continue;
                    const double arc = (1.0 - t) * front[i].arc + t * front[i + 1].arc + (*y - seed).norm();
                    cand.push_back({*y, static_cast<double>(i - s) + t, next_line_++, arc});
                }
            }
        }

        // Coarsening: drop interior particles closer than d_min to the last kept one.
        std::vector<Candidate> kept;
        kept.push_back(cand.front());
        for (std::size_t i = 1; i + 1 < cand.size(); ++i) {
            if ((cand[i].pos - kept.back().pos).norm() >= params_.d_min) kept.push_back(cand[i]);
        }
        if (cand.size() > 1) {
            if (kept.size() > 1 && (cand.back().pos - kept.back().pos).norm() < params_.d_min) kept.pop_back();
            kept.push_back(cand.back());
        }

        std::vector<Particle> next;
        next.reserve(kept.size());
        for (const auto& c : kept) next.push_back({add_vertex(c.pos, c.line, c.arc), c.line, c.arc});

        // Zipper between old run s..e and the new front, ordered by parameter.
        std::size_t a = s;
        std::size_t b = 0;
        while (a < e || b + 1 < next.size()) {
            bool step_old;
            if (a == e) {
                step_old = false;
            } else if (b + 1 == next.size()) {
                step_old = true;
            } else {
                step_old = static_cast<double>(a + 1 - s) <= kept[b + 1].param;
            }
            if (step_old) {
                emit(front[a].vertex, front[a + 1].vertex, next[b].vertex);
                ++a;
            } else {
                emit(front[a].vertex, next[b + 1].vertex, next[b].vertex);
                ++b;
            }
        }

        for (std::size_t i = 0; i + 1 < next.size(); ++i) {
            const double gap = (positions_[next[i + 1].vertex] - positions_[next[i].vertex]).norm();
            ++pairs_;
            if (gap >= 0.5 * params_.d_min && gap <= 2.0 * params_.d_max) ++pairs_in_band_;
        }
        if (next.size() >= 2) out.push_back(std::move(next));
    }

    void emit(std::uint32_t i, std::uint32_t j, std::uint32_t k) {
        const double area2 = (positions_[j] - positions_[i]).cross(positions_[k] - positions_[i]).norm();
        if (area2 < 1e-10) return;
        faces_.push_back({i, j, k});
    }

    StreamSurface finish() {
        Mesh raw;
        raw.vertices = positions_;
        raw.faces = faces_;
        StreamSurface out;
        out.front_pairs = pairs_;
        out.front_pairs_in_band = pairs_in_band_;
        if (raw.faces.empty()) return out;

        const auto comps = connected_components(adjacency(raw));
        std::vector<std::size_t> count(comps.count, 0);
        for (const auto& f : raw.faces) ++count[comps.label[f[0]]];
        const auto best = static_cast<std::uint32_t>(std::max_element(count.begin(), count.end()) - count.begin());
        Mesh kept;
        kept.vertices = raw.vertices;
        for (const auto& f : raw.faces) {
            if (comps.label[f[0]] == best) kept.faces.push_back(f);
        }
        std::vector<std::int64_t> remap;
        out.mesh = compact(kept, &remap);
        out.streamline.resize(out.mesh.vertex_count());
        out.arc_length.resize(out.mesh.vertex_count());
        for (std::size_t v = 0; v < remap.size(); ++v) {
            if (remap[v] < 0) continue;
            out.streamline[static_cast<std::size_t>(remap[v])] = lines_[v];
            out.arc_length[static_cast<std::size_t>(remap[v])] = arcs_[v];
        }
        return out;
    }

    const VectorField& field_;
    TraceParams params_;
    std::vector<Vec3> positions_;
    std::vector<std::uint32_t> lines_;
    std::vector<double> arcs_;
    std::vector<Face> faces_;
    std::uint32_t next_line_ = 0;
    std::size_t pairs_ = 0;
    std::size_t pairs_in_band_ = 0;
};

}  // namespace

StreamSurface trace_stream_surface(const VectorField& field, const SeedCurve& curve, const TraceParams& params) {
    if (!(params.h > 0.0)) throw std::invalid_argument("trace_stream_surface: step must be positive");
    if (!(params.d_min > 0.0) || !(params.d_max > 2.0 * params.d_min)) {
        throw std::invalid_argument("trace_stream_surface: need 0 < 2 d_min < d_max");
    }
    return Tracer(field, params).run(curve);
}

std::vector<SeedCurve> random_seed_curves(const VectorField& field, std::size_t count, const SeedCurveParams& params,
                                          std::uint64_t rng_seed) {
    if (count < 1) throw std::invalid_argument("random_seed_curves: count must be >= 1");
    if (params.control_points < 2 || params.samples < 2) {
        throw std::invalid_argument("random_seed_curves: need at least 2 control points and samples");
    }
    if (!(params.min_length > 0.0) || params.max_length < params.min_length) {
        throw std::invalid_argument("random_seed_curves: invalid length range");
    }
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Box& box = field.domain();

    auto random_orthogonal = [&](const Vec3& v) {
        for (;;) {
            Vec3 u(normal(rng), normal(rng), normal(rng));
            if (v.norm() > 0.0) u -= u.dot(v) / v.squaredNorm() * v;
            if (u.norm() > 1e-6) return Vec3(u.normalized());
        }
    };
    auto binormal = [&](const Vec3& p) {
        const Vec3 v = field.eval(p).value;
        const Vec3 b = v.cross(field.jacobian(p) * v);
        if (b.norm() < 1e-9) return random_orthogonal(v);
        return Vec3(b.normalized());
    };

    std::vector<SeedCurve> curves;
    curves.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        Vec3 start;
        for (int k = 0; k < 3; ++k) start[k] = box.lo[k] + unit(rng) * (box.hi[k] - box.lo[k]);
        const double length = params.min_length + unit(rng) * (params.max_length - params.min_length);
        const double ds = length / (params.control_points - 1);

        SeedCurve curve;
        curve.samples = params.samples;
        curve.points.push_back(start);
        Vec3 dir = binormal(start);
        for (int i = 1; i < params.control_points; ++i) {
            const Vec3& p = curve.points.back();
            // Midpoint step along the binormal, keeping orientation consistent.
            Vec3 d1 = binormal(p);
            if (d1.dot(dir) < 0.0) d1 = -d1;
            const Vec3 mid = p + 0.5 * ds * d1;
            Vec3 d2 = box.contains(mid) ? binormal(mid) : d1;
            if (d2.dot(d1) < 0.0) d2 = -d2;
            const Vec3 q = p + ds * d2;
            if (!box.contains(q)) break;
            curve.points.push_back(q);
            dir = d2;
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

namespace {

nlohmann::json entry_json(const EnsembleEntry& e, const std::string& field, const TraceParams& trace) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : e.curve.points) pts.push_back({p.x(), p.y(), p.z()});
    return {{"file", e.file},     {"field", field},         {"rng_seed", e.rng_seed},
            {"curve_points", pts}, {"samples", e.curve.samples}, {"h", trace.h},
            {"steps", trace.max_steps}, {"d_min", trace.d_min}, {"d_max", trace.d_max},
            {"vertices", e.vertex_count}};
}

}  // namespace

Ensemble generate_ensemble(const VectorField& field, std::size_t count, const EnsembleParams& params,
                           std::uint64_t rng_seed, const std::filesystem::path& out_dir) {
    if (count < 1) throw std::invalid_argument("generate_ensemble: count must be >= 1");
    std::filesystem::create_directories(out_dir);

    std::vector<EnsembleEntry> entries(count);
    std::vector<std::string> errors(count);
    std::atomic<std::size_t> cursor{0};

    auto work = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= count) return;
            char name[32];
            std::snprintf(name, sizeof(name), "surface_%04zu.obj", i);
            try {
                bool done = false;
                for (int attempt = 0; attempt < params.max_attempts && !done; ++attempt) {
                    const auto seed = derive_seed(rng_seed, i, static_cast<std::uint64_t>(attempt));
                    auto curve = random_seed_curves(field, 1, params.curve, seed).front();
                    if (curve.length() < 1e-9) continue;
                    auto surface = trace_stream_surface(field, curve, params.trace);
                    if (surface.mesh.vertex_count() < params.min_vertices) continue;
                    surface.mesh.name = std::filesystem::path(name).stem().string();
                    save_obj(out_dir / name, surface.mesh);
                    entries[i] = {name, seed, std::move(curve), surface.mesh.vertex_count()};
                    done = true;
                }
                if (!done) {
                    errors[i] = std::string(name) + ": no surface with >= " + std::to_string(params.min_vertices) +
                                " vertices after " + std::to_string(params.max_attempts) + " attempts";
                }
            } catch (const std::exception& ex) {
                errors[i] = std::string(name) + ": " + ex.what();
            }
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(params.jobs, static_cast<unsigned>(count)));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    for (const auto& err : errors) {
        if (!err.empty()) throw std::runtime_error("generate_ensemble: " + err);
    }

    nlohmann::json manifest = nlohmann::json::array();
    const auto kind = to_string(field.kind());
    for (const auto& e : entries) {
        auto j = entry_json(e, kind, params.trace);
        if (field.kind() == FieldKind::custom) j["expression"] = field.expression();
        manifest.push_back(std::move(j));
    }
    Ensemble out;
    out.manifest = out_dir / "manifest.json";
    std::ofstream os(out.manifest);
    if (!os) throw std::runtime_error("cannot write " + out.manifest.string());
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + out.manifest.string());
    out.entries = std::move(entries);
    return out;
}

std::vector<EnsembleEntry> read_ensemble_manifest(const std::filesystem::path& manifest, std::string* field) {
    std::ifstream is(manifest);
    if (!is) throw std::runtime_error("cannot open " + manifest.string());
    const auto doc = nlohmann::json::parse(is);
    if (!doc.is_array()) throw std::runtime_error(manifest.string() + ": expected a JSON array");
    std::vector<EnsembleEntry> out;
    for (const auto& j : doc) {
        EnsembleEntry e;
        e.file = j.at("file").get<std::string>();
        e.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        for (const auto& p : j.at("curve_points")) e.curve.points.emplace_back(p[0], p[1], p[2]);
        e.curve.samples = j.value("samples", 16);
        e.vertex_count = j.value("vertices", std::size_t{0});
        if (field) *field = j.at("field").get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace surfpatch
