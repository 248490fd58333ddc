#include "support.hpp"

#include "surfpatch/evaluation.hpp"
#include "surfpatch/metrics.hpp"
#include "surfpatch/primitives.hpp"

#include "doctest.h"

using namespace surfpatch;
using namespace surfpatch::testing;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    return pts;
}

std::set<PatchRef> match_set(const MatchResult& r) {
    std::set<PatchRef> s;
    for (const auto& m : r.matches) s.insert(m.patch);
    return s;
}

std::vector<Vec3> patch_points(const SurfaceRecord& rec, const std::vector<std::uint32_t>& ids) {
    std::vector<Vec3> pts;
    for (auto v : ids) pts.push_back(rec.mesh.vertices[v]);
    return pts;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("identical sets") {
        std::mt19937_64 rng(1);
        const auto a = random_points(rng, 40);
        const auto m = compare_point_sets(a, a);
        CHECK(m.hausdorff == 0.0);
        CHECK(m.chamfer == 0.0);
        CHECK(m.rmse == 0.0);
    }

    TEST_CASE("translation is removed") {
        std::mt19937_64 rng(2);
        const auto a = random_points(rng, 30);
        auto b = a;
        for (auto& p : b) p += Vec3(5, -3, 2);
        CHECK(hausdorff(a, b) < 1e-12);
    }

    TEST_CASE("segment versus segment with midpoint") {
        const std::vector<Vec3> a{Vec3(0, 0, 0), Vec3(1, 0, 0)};
        const std::vector<Vec3> b{Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(1, 0, 0)};
        const auto oracle = oracle_metrics(a, b);
        CHECK(oracle.hausdorff == doctest::Approx(0.5));
        CHECK(std::abs(hausdorff(a, b) - oracle.hausdorff) < 1e-12);
        CHECK(std::abs(chamfer(a, b) - oracle.chamfer) < 1e-12);
        CHECK(std::abs(rmse(a, b) - oracle.rmse) < 1e-12);
    }

    TEST_CASE("random sets agree with the double loop") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const auto a = random_points(rng, 50);
            const auto b = random_points(rng, 20 + trial);
            const auto m = compare_point_sets(a, b);
            const auto o = oracle_metrics(a, b);
            CHECK(std::abs(m.hausdorff - o.hausdorff) < 1e-12);
            CHECK(std::abs(m.chamfer - o.chamfer) < 1e-12);
            CHECK(std::abs(m.rmse - o.rmse) < 1e-12);
            CHECK(chamfer(a, b) == chamfer(b, a));
            CHECK(hausdorff(a, b) == hausdorff(b, a));
            CHECK(m.chamfer <= m.hausdorff);
        }
    }

    TEST_CASE("degenerate sets") {
        CHECK_THROWS_WITH_AS(rmse({Vec3(1, 2, 3)}, {Vec3(4, 5, 6)}), doctest::Contains("zero extent"), GeometryError);
        CHECK_THROWS_AS(hausdorff({}, {Vec3(0, 0, 0), Vec3(1, 0, 0)}), GeometryError);
    }
}

TEST_SUITE("cut level") {
    TEST_CASE("ranges") {
        CHECK_NOTHROW(CutLevel::percent(0));
        CHECK_NOTHROW(CutLevel::percent(100));
        CHECK_NOTHROW(CutLevel::percent(INFINITY));
        CHECK_THROWS_AS(CutLevel::percent(100.5), std::out_of_range);
        CHECK_THROWS_AS(CutLevel::percent(-1), std::out_of_range);
        CHECK_THROWS_AS(CutLevel::percent(NAN), std::out_of_range);
        CHECK_THROWS_AS(CutLevel::absolute(-0.1), std::out_of_range);
        CHECK_NOTHROW(CutLevel::absolute(INFINITY));
    }
}

TEST_SUITE("preprocess") {
    TEST_CASE("records are consistent and simplified") {
        const auto& fx = tornado_fixture();
        double in = 0.0, out = 0.0;
        for (std::size_t i = 0; i < fx.records.size(); ++i) {
            const auto& r = fx.records[i];
            CHECK_NOTHROW(r.validate());
            CHECK(r.surface_id == i);
            CHECK(r.input_vertices == fx.inputs[i].vertex_count());
            CHECK(r.mesh.vertex_count() >= fx.config.min_vertices);
            CHECK(r.hks.width() == fx.config.d);
            in += r.input_vertices;
            out += r.mesh.vertex_count();
        }
        CHECK(in / out >= 2.0);
    }

    TEST_CASE("same input and seeds give identical records") {
        const auto& fx = tornado_fixture();
        const auto again = preprocess_surface(fx.inputs[1], 1, fx.config);
        const auto& ref = fx.records[1];
        CHECK(again.mesh.vertices == ref.mesh.vertices);
        CHECK(again.mesh.faces == ref.mesh.faces);
        CHECK(again.hks.features == ref.hks.features);
        CHECK(again.projection.points == ref.projection.points);
    }

    TEST_CASE("icosphere projects to one compact blob") {
        PipelineConfig c;
        const auto rec = preprocess_surface(make_icosphere(3), 0, c);
        const auto& p = rec.projection.points;
        std::vector<double> d;
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            for (Eigen::Index j = i + 1; j < p.rows(); ++j) d.push_back((p.row(i) - p.row(j)).norm());
        std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
        const double median = d[d.size() / 2];
        CHECK(*std::max_element(d.begin(), d.end()) < 5.0 * median);
    }

    TEST_CASE("two components are refused") {
        const Mesh two = disjoint_union(make_icosphere(3), make_icosphere(3), Vec3(3, 0, 0));
        CHECK_THROWS_WITH_AS(preprocess_surface(two, 0, PipelineConfig{}), doctest::Contains("connected components"),
                             GeometryError);
    }
}

TEST_SUITE("segmentation") {
    TEST_CASE("extremes") {
        const auto& rec = tornado_fixture().records[0];
        const auto fine = segment_patches(rec, CutLevel::percent(0));
        CHECK(fine.patch_count() == rec.mesh.vertex_count());
        const auto whole = segment_patches(rec, CutLevel::percent(INFINITY));
        CHECK(whole.patch_count() == 1);
    }

    TEST_CASE("patches partition, connect and nest") {
        for (const auto& rec : tornado_fixture().records) {
            const auto tree = vertex_tree(rec);
            std::vector<PatchSegmentation> segs;
            for (double pct : {10.0, 30.0, 50.0, 70.0}) segs.push_back(segment_patches(rec, tree, CutLevel::percent(pct)));
            for (std::size_t s = 0; s < segs.size(); ++s) {
                std::vector<int> seen(rec.mesh.vertex_count(), 0);
                for (const auto& p : segs[s].patches)
                    for (auto v : p) ++seen[v];
                CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
                CHECK(patches_connected(rec.mesh, segs[s].patches));
                if (s > 0) {
                    CHECK(segs[s].patch_count() <= segs[s - 1].patch_count());
                    CHECK(nested(segs[s - 1].partition, segs[s].partition));
                }
            }
        }
    }
}

TEST_SUITE("patch embedding") {
    TEST_CASE("single patch") {
        const auto& rec = tornado_fixture().records[0];
        const auto seg = segment_patches(rec, CutLevel::percent(INFINITY));
        const auto emb = embed_patches({{&rec, &seg}}, tornado_fixture().config);
        CHECK(emb.features.rows() == 1);
        CHECK(emb.features.cols() == rec.hks.width());
        CHECK(emb.projection.points.rows() == 1);
    }

    TEST_CASE("rigid copies embed next to each other") {
        const auto& fx = tornado_fixture();
        const auto& rec = fx.records[0];
        // Same connectivity and intrinsic features, moved rigidly.
        SurfaceRecord copy = rec;
        copy.surface_id = 9;
        copy.mesh = transformed(rec.mesh, rotation(0.3, 0.9, 0.1), 1.0, Vec3(4, 0, 1));
        const auto sa = segment_patches(rec, CutLevel::percent(50));
        const auto sb = segment_patches(copy, CutLevel::percent(50));
        REQUIRE(sa.patch_count() == sb.patch_count());
        const auto sc = segment_patches(fx.records[1], CutLevel::percent(50));
        const auto emb = embed_patches({{&rec, &sa}, {&copy, &sb}, {&fx.records[1], &sc}}, fx.config);
        const auto& p = emb.projection.points;
        std::vector<double> all;
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            for (Eigen::Index j = i + 1; j < p.rows(); ++j) all.push_back((p.row(i) - p.row(j)).norm());
        std::sort(all.begin(), all.end());
        const double one_percent = all[std::max<std::size_t>(0, all.size() / 100)];
        // Copy patches share features, so they must sit at most at the 1% quantile.
        for (std::uint32_t k = 0; k < sa.patch_count(); ++k) {
            const auto a = *emb.find({0, k});
            const auto b = *emb.find({9, k});
            CHECK((emb.features.row(a) - emb.features.row(b)).norm() < 1e-5);
            CHECK((p.row(a) - p.row(b)).norm() <= one_percent + 1e-9);
        }
    }

    TEST_CASE("sphere patches sit apart from spike patches") {
        PipelineConfig c;
        const auto sphere = preprocess_surface(make_icosphere(3), 0, c);
        const auto spiked = preprocess_surface(make_spiked_sphere(3, 0, 2.0), 1, c);
        const auto s0 = segment_patches(sphere, CutLevel::percent(30));
        const auto s1 = segment_patches(spiked, CutLevel::percent(30));
        const auto emb = embed_patches({{&sphere, &s0}, {&spiked, &s1}}, c);
        // The spike patch is the one holding the apex.
        std::uint32_t spike = 0;
        for (std::uint32_t k = 0; k < s1.patch_count(); ++k)
            if (std::binary_search(s1.patches[k].begin(), s1.patches[k].end(), 0u)) spike = k;
        const auto& p = emb.projection.points;
        double within = 0.0, across = 0.0;
        std::size_t nw = 0, na = 0;
        for (std::uint32_t a = 0; a < s0.patch_count(); ++a) {
            const auto ia = *emb.find({0, a});
            for (std::uint32_t b = a + 1; b < s0.patch_count(); ++b) {
                within += (p.row(ia) - p.row(*emb.find({0, b}))).norm();
                ++nw;
            }
            across += (p.row(ia) - p.row(*emb.find({1, spike}))).norm();
            ++na;
        }
        REQUIRE(nw > 0);
        CHECK(within / nw < across / na);
    }
}

TEST_SUITE("matching") {
    TEST_CASE("extremes and nesting") {
        const auto& fx = tornado_fixture();
        std::vector<PatchSegmentation> segs;
        for (const auto& r : fx.records) segs.push_back(segment_patches(r, CutLevel::percent(50)));
        std::vector<SurfacePatches> sel;
        for (std::size_t i = 0; i < segs.size(); ++i) sel.push_back({&fx.records[i], &segs[i]});
        const auto emb = embed_patches(sel, fx.config);
        const auto tree = patch_tree(emb, fx.config);
        for (const auto& q : emb.patches) {
            const auto zero = match_patches(emb, tree, q, CutLevel::percent(0), fx.config);
            REQUIRE(zero.matches.size() >= 1);
            CHECK(zero.matches.front().patch == q);
            CHECK(zero.matches.front().distance == 0.0);
            CHECK(zero.matches.size() == 1);
            const auto all = match_patches(emb, tree, q, CutLevel::percent(INFINITY), fx.config);
            CHECK(all.matches.size() == emb.patches.size());
            const auto m30 = match_set(match_patches(emb, tree, q, CutLevel::percent(30), fx.config));
            const auto m50 = match_set(match_patches(emb, tree, q, CutLevel::percent(50), fx.config));
            const auto m70 = match_set(match_patches(emb, tree, q, CutLevel::percent(70), fx.config));
            CHECK(std::includes(m50.begin(), m50.end(), m30.begin(), m30.end()));
            CHECK(std::includes(m70.begin(), m70.end(), m50.begin(), m50.end()));
        }
    }

    TEST_CASE("ranking after the query is by distance") {
        const auto& fx = tornado_fixture();
        const auto seg = segment_patches(fx.records[2], CutLevel::percent(30));
        const auto emb = embed_patches({{&fx.records[2], &seg}}, fx.config);
        const auto r = match_patches(emb, PatchRef{2, 0}, CutLevel::percent(INFINITY), fx.config);
        for (std::size_t i = 2; i < r.matches.size(); ++i) CHECK(r.matches[i].distance >= r.matches[i - 1].distance);
        CHECK_THROWS_AS(match_patches(emb, PatchRef{2, 9999}, CutLevel::percent(50), fx.config), std::out_of_range);
    }
}

TEST_SUITE("surface clustering") {
    TEST_CASE("two surfaces, both input orders") {
        const auto& fx = tornado_fixture();
        const auto ab = cluster_surfaces({fx.records[0], fx.records[1]}, SurfaceClusterParams{}, fx.config);
        const auto ba = cluster_surfaces({fx.records[1], fx.records[0]}, SurfaceClusterParams{}, fx.config);
        CHECK(ab.tree.merges.size() == 1);
        CHECK(ab.tree.merges[0].distance == doctest::Approx(ba.tree.merges[0].distance).epsilon(1e-12));
        CHECK(ab.clusters.cluster_count >= 1);
        CHECK(ab.clusters.cluster_count <= 2);
        for (std::size_t c = 0; c < ab.representatives.size(); ++c)
            CHECK(ab.clusters.labels[ab.representatives[c]] == c);
        CHECK_THROWS_AS(cluster_surfaces({fx.records[0]}, SurfaceClusterParams{}, fx.config), std::invalid_argument);
    }

    TEST_CASE("duplicates share a cluster below the top merge") {
        const auto& fx = tornado_fixture();
        auto dup = fx.records[2];
        dup.surface_id = 7;
        std::vector<SurfaceRecord> recs = fx.records;
        recs.push_back(dup);
        const auto emb = cluster_surfaces(recs, SurfaceClusterParams{}, fx.config);
        for (std::size_t k = 2; k <= recs.size(); ++k) {
            const auto part = cut_count(emb.tree, k);
            if (k == recs.size()) break;  // singleton cut separates every row
            CHECK(part.labels[2] == part.labels[4]);
        }
    }

    TEST_CASE("gallery blocks are ordered") {
        const auto& fx = tornado_fixture();
        SurfaceClusterParams p;
        p.cluster_count = 2;
        const auto emb = cluster_surfaces(fx.records, p, fx.config);
        CHECK(emb.clusters.cluster_count == 2);
        for (std::size_t b = 1; b < emb.gallery.size(); ++b) CHECK(emb.gallery[b].size() <= emb.gallery[b - 1].size());
        for (const auto& block : emb.gallery) {
            const auto rep = block.front();
            CHECK(std::find(emb.representatives.begin(), emb.representatives.end(), rep) != emb.representatives.end());
            for (std::size_t i = 2; i < block.size(); ++i)
                CHECK((emb.features.row(block[i]) - emb.features.row(rep)).norm() >=
                      (emb.features.row(block[i - 1]) - emb.features.row(rep)).norm());
        }
    }
}

TEST_SUITE("evaluation") {
    TEST_CASE("zero cut scores zero") {
        const auto& fx = tornado_fixture();
        EvaluationParams p;
        p.queries = 10;
        p.delta2 = CutLevel::percent(0);
        const auto r = evaluate_matching(fx.records, p, fx.config);
        CHECK(r.per_query.size() == 10);
        CHECK(r.matched.hausdorff.mean == 0.0);
        CHECK(r.matched.chamfer.mean == 0.0);
        CHECK(r.matched.rmse.mean == 0.0);
        CHECK(r.matched_others.hausdorff.count == 0);
    }

    TEST_CASE("fixed seed repeats") {
        const auto& fx = tornado_fixture();
        EvaluationParams p;
        p.queries = 8;
        p.seed = 4;
        const auto a = to_json(evaluate_matching(fx.records, p, fx.config), p).dump();
        const auto b = to_json(evaluate_matching(fx.records, p, fx.config), p).dump();
        CHECK(a == b);
    }

    TEST_CASE("per-pair values match the oracle") {
        const auto& fx = tornado_fixture();
        EvaluationParams p;
        p.queries = 5;
        p.seed = 2;
        p.delta2 = CutLevel::percent(INFINITY);
        const auto r = evaluate_matching(fx.records, p, fx.config);
        for (const auto& q : r.per_query) {
            const auto& rec = fx.records[q.query.surface_id];
            const auto seg = segment_patches(rec, p.delta1);
            const auto qp = patch_points(rec, seg.patches[q.query.patch_id]);
            CHECK(q.matches == seg.patch_count());
            double sum = 0.0;
            std::size_t n = 0;
            for (std::uint32_t k = 0; k < seg.patch_count(); ++k) {
                ++n;
                if (k == q.query.patch_id) continue;  // self pair scores 0
                const auto pts = patch_points(rec, seg.patches[k]);
                if (bounding_box_diagonal(pts) == 0.0 || bounding_box_diagonal(qp) == 0.0) {
                    --n;
                    continue;
                }
                sum += oracle_metrics(qp, pts).hausdorff;
            }
            if (n > 0) CHECK(q.hausdorff == doctest::Approx(sum / n).epsilon(1e-9));
        }
    }
}
