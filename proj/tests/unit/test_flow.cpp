#include "support.hpp"

#include "surfpatch/flow.hpp"
#include "surfpatch/mesh_io.hpp"
#include "surfpatch/stream_surface.hpp"

#include "doctest.h"

#include <fstream>
#include <sstream>

using namespace surfpatch;
using namespace surfpatch::testing;

namespace {

double rk4_circle_error(double h, int steps) {
    const auto field = VectorField::custom("(-y, x, 0)");
    StreamlineParams p;
    p.h = h;
    p.max_steps = steps;
    const auto line = rk4_streamline(field, Vec3(1, 0, 0), p);
    const double t = h * steps;
    return (line.points.back() - Vec3(std::cos(t), std::sin(t), 0)).norm();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_SUITE("fields") {
    TEST_CASE("custom expression") {
        const auto f = VectorField::custom("(-y, x, 0)");
        const auto s = f.eval(Vec3(1, 0, 0));
        CHECK(s.inside);
        CHECK((s.value - Vec3(0, 1, 0)).norm() < 1e-15);
        CHECK_FALSE(f.eval(Vec3(5, 0, 0)).inside);
        CHECK(f.eval(Vec3(5, 0, 0)).value == Vec3::Zero());
    }

    TEST_CASE("expression grammar") {
        const auto f = VectorField::custom("(sin(x) * 2 + y^2, -(z - 1) / 4, exp(0) + sqrt(4))");
        const Vec3 v = f.eval(Vec3(0.5, 1.5, 0.25)).value;
        CHECK(v.x() == doctest::Approx(std::sin(0.5) * 2 + 2.25));
        CHECK(v.y() == doctest::Approx(0.75 / 4));
        CHECK(v.z() == doctest::Approx(3.0));
        CHECK_THROWS_AS(VectorField::custom("(x, y)"), std::invalid_argument);
        CHECK_THROWS(VectorField::custom("(x, y, foo(z))"));
    }

    TEST_CASE("tornado axis") {
        const auto f = VectorField::tornado();
        for (double z : {0.1, 0.5, 0.9}) {
            const Vec3 v = f.eval(Vec3(0.5, 0.5, z)).value;
            CHECK(std::abs(v.x()) < 1e-15);
            CHECK(std::abs(v.y()) < 1e-15);
            CHECK(v.z() > 0.0);
        }
    }

    TEST_CASE("two swirls at a vortex center") {
        // Each core's own swirl vanishes there; only the other core's Gaussian
        // tail, 0.75 exp(-0.25 / (2 0.15^2)), remains, and only in y.
        const auto f = VectorField::two_swirls();
        const double tail = 1.5 * 0.5 * std::exp(-0.25 / (2 * 0.15 * 0.15));
        for (double x : {0.25, 0.75}) {
            const Vec3 v = f.eval(Vec3(x, 0.5, 0.5)).value;
            CHECK(std::abs(v.x()) < 1e-15);
            CHECK(std::abs(v.y()) == doctest::Approx(tail).epsilon(1e-12));
            CHECK(v.z() == doctest::Approx(0.1));
        }
    }

    TEST_CASE("five critical points: finite, zero at the prescribed points") {
        const auto f = VectorField::five_critical_points();
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 200; ++i) CHECK(f.eval(Vec3(u(rng), u(rng), u(rng))).value.allFinite());
        for (const Vec3& c : {Vec3(0.5, 0.5, 0.5), Vec3(0.25, 0.25, 0.25), Vec3(0.75, 0.75, 0.25), Vec3(0.75, 0.25, 0.75),
                             Vec3(0.25, 0.75, 0.75)})
            CHECK(f.eval(c).value.norm() < 1e-12);
    }

    TEST_CASE("kind names") {
        CHECK(parse_field_kind("two_swirls") == FieldKind::two_swirls);
        CHECK(to_string(FieldKind::tornado) == "tornado");
        CHECK_THROWS_WITH_AS(parse_field_kind("vortex"), doctest::Contains("five_critical_points"), std::invalid_argument);
    }
}

TEST_SUITE("rk4") {
    TEST_CASE("one revolution on the circle") {
        const int steps = 628;
        const double err = rk4_circle_error(0.01, steps);
        CHECK(err < 1e-6);
        const auto field = VectorField::custom("(-y, x, 0)");
        StreamlineParams p;
        p.max_steps = steps;
        double drift = 0.0;
        for (const auto& x : rk4_streamline(field, Vec3(1, 0, 0), p).points) drift = std::max(drift, std::abs(x.norm() - 1));
        CHECK(drift < 1e-6);
        // 628 steps of 0.01 stop 0.0032 short of a full turn.
        CHECK((rk4_streamline(field, Vec3(1, 0, 0), p).points.back() - Vec3(1, 0, 0)).norm() < 5e-3);
    }

    TEST_CASE("fourth order convergence") {
        const double coarse = rk4_circle_error(0.02, 314);
        const double fine = rk4_circle_error(0.01, 628);
        CHECK(coarse / fine >= 8.0);
    }

    TEST_CASE("stops") {
        const auto zero = VectorField::custom("(0, 0, 0)");
        const auto still = rk4_streamline(zero, Vec3(0, 0, 0), StreamlineParams{});
        CHECK(still.points.size() == 1);
        CHECK(still.reason == StopReason::stagnation);
        const auto outside = rk4_streamline(VectorField::custom("(1, 0, 0)"), Vec3(9, 0, 0), StreamlineParams{});
        CHECK(outside.points.size() == 1);
        CHECK(outside.reason == StopReason::left_domain);
    }
}

TEST_SUITE("stream surface") {
    TEST_CASE("uniform field sweeps a planar strip") {
        SeedCurve curve{{Vec3(-0.5, 0.2, -1.5), Vec3(0.5, 0.2, -1.5)}, 16};
        TraceParams p;
        p.h = 0.05;
        p.max_steps = 40;
        p.d_min = 0.02;
        p.d_max = 0.08;
        const auto s = trace_stream_surface(VectorField::custom("(0, 0, 1)"), curve, p);
        CHECK(s.mesh.vertex_count() > 100);
        for (const auto& v : s.mesh.vertices) CHECK(std::abs(v.y() - 0.2) < 1e-9);
        CHECK(connected_components(adjacency(s.mesh)).count == 1);
    }

    TEST_CASE("rotation keeps each streamline on its circle") {
        SeedCurve curve{{Vec3(0.5, 0, 0), Vec3(1.2, 0, 0)}, 12};
        TraceParams p;
        p.h = 0.02;
        p.max_steps = 150;
        p.d_min = 0.01;
        p.d_max = 0.05;
        const auto s = trace_stream_surface(VectorField::custom("(-y, x, 0)"), curve, p);
        std::map<std::uint32_t, std::pair<double, double>> range;
        for (std::size_t v = 0; v < s.mesh.vertex_count(); ++v) {
            const double r = s.mesh.vertices[v].norm();
            auto [it, fresh] = range.try_emplace(s.streamline[v], r, r);
            it->second.first = std::min(it->second.first, r);
            it->second.second = std::max(it->second.second, r);
        }
        CHECK(range.size() > 12);  // refinement added streamlines
        for (const auto& [id, mm] : range) CHECK(mm.second - mm.first < 1e-4);
    }

    TEST_CASE("shear field keeps spacing in band") {
        SeedCurve curve{{Vec3(-0.5, 0, 0), Vec3(0.5, 0, 0)}, 20};
        TraceParams p;
        p.h = 0.02;
        p.max_steps = 80;
        p.d_min = 0.02;
        p.d_max = 0.06;
        const auto s = trace_stream_surface(VectorField::custom("(z, 0, 1)"), curve, p);
        REQUIRE(s.front_pairs > 0);
        CHECK(static_cast<double>(s.front_pairs_in_band) / s.front_pairs >= 0.99);
        CHECK(s.mesh.face_count() > 2 * 80);
    }

    TEST_CASE("degenerate curve and bad spacing") {
        SeedCurve dot{{Vec3(0, 0, 0), Vec3(0, 0, 0)}, 4};
        CHECK_THROWS_AS(trace_stream_surface(VectorField::custom("(1, 0, 0)"), dot, TraceParams{}), GeometryError);
        TraceParams bad;
        bad.d_min = 0.05;
        bad.d_max = 0.06;
        SeedCurve line{{Vec3(0, 0, 0), Vec3(1, 0, 0)}, 4};
        CHECK_THROWS_AS(trace_stream_surface(VectorField::custom("(0, 0, 1)"), line, bad), std::invalid_argument);
    }
}

TEST_SUITE("seeding") {
    TEST_CASE("rigid rotation gives vertical curves") {
        const auto field = VectorField::custom("(-y, x, 0)");
        SeedCurveParams p;
        const auto curves = random_seed_curves(field, 10, p, 3);
        REQUIRE(curves.size() == 10);
        for (const auto& c : curves) {
            for (std::size_t i = 1; i < c.points.size(); ++i) {
                const Vec3 d = c.points[i] - c.points[i - 1];
                if (d.norm() < 1e-12) continue;
                CHECK(std::acos(std::min(1.0, std::abs(d.normalized().z()))) < 1e-3);
            }
        }
    }

    TEST_CASE("count zero is refused and seeds repeat") {
        const auto field = VectorField::tornado();
        CHECK_THROWS_AS(random_seed_curves(field, 0, SeedCurveParams{}, 1), std::invalid_argument);
        const auto a = random_seed_curves(field, 3, SeedCurveParams{}, 42);
        const auto b = random_seed_curves(field, 3, SeedCurveParams{}, 42);
        for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].points == b[i].points);
    }

    TEST_CASE("derived seeds differ per stream and salt") {
        CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
        CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
        CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
        CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
    }
}

TEST_SUITE("ensemble") {
    TEST_CASE("tornado ensemble") {
        TempDir dir("ens");
        EnsembleParams p;
        const auto ens = generate_ensemble(VectorField::tornado(), 6, p, 7, dir.path());
        REQUIRE(ens.entries.size() == 6);
        for (const auto& e : ens.entries) {
            const Mesh m = load_obj(dir.path() / e.file);
            CHECK(m.vertex_count() >= 200);
            CHECK(m.vertex_count() == e.vertex_count);
            CHECK(connected_components(adjacency(m)).count == 1);
        }
        std::string field;
        const auto back = read_ensemble_manifest(ens.manifest, &field);
        CHECK(field == "tornado");
        CHECK(back.size() == 6);
    }

    TEST_CASE("fixed seed reproduces bytes") {
        TempDir a("ens_a"), b("ens_b");
        const auto ea = generate_ensemble(VectorField::two_swirls(), 1, EnsembleParams{}, 99, a.path());
        const auto eb = generate_ensemble(VectorField::two_swirls(), 1, EnsembleParams{}, 99, b.path());
        CHECK(slurp(a.path() / ea.entries[0].file) == slurp(b.path() / eb.entries[0].file));
    }

    TEST_CASE("two swirls vertex counts are in range") {
        TempDir dir("ens_sw");
        const auto ens = generate_ensemble(VectorField::two_swirls(), 8, EnsembleParams{}, 3, dir.path());
        double mean = 0.0;
        for (const auto& e : ens.entries) mean += static_cast<double>(e.vertex_count) / ens.entries.size();
        CHECK(mean >= 1e2);
        CHECK(mean <= 1e4);
    }

    TEST_CASE("thread count does not change output") {
        TempDir a("ens_j1"), b("ens_j3");
        EnsembleParams one, three;
        three.jobs = 3;
        const auto ea = generate_ensemble(VectorField::tornado(), 4, one, 5, a.path());
        const auto eb = generate_ensemble(VectorField::tornado(), 4, three, 5, b.path());
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(slurp(a.path() / ea.entries[i].file) == slurp(b.path() / eb.entries[i].file));
    }
}
