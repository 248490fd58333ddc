#include "support.hpp"

#include "surfpatch/eigensolver.hpp"
#include "surfpatch/hks.hpp"
#include "surfpatch/laplacian.hpp"
#include "surfpatch/primitives.hpp"

#include "doctest.h"

#include <sstream>

using namespace surfpatch;
using namespace surfpatch::testing;

namespace {

HksMatrix hks_of(const Mesh& mesh, Eigen::Index k, Eigen::Index d) {
    const auto op = build_cotangent_laplacian(mesh);
    return compute_hks(solve_hks_basis(op, k), op.mass, d);
}

double cot_at(const Vec3& apex, const Vec3& p, const Vec3& q) {
    const Vec3 u = p - apex, v = q - apex;
    return u.dot(v) / u.cross(v).norm();
}

}  // namespace

TEST_SUITE("laplacian") {
    TEST_CASE("right isosceles triangle") {
        Mesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
        m.faces = {{0, 1, 2}};
        const Eigen::MatrixXd s = Eigen::MatrixXd(build_cotangent_laplacian(m).stiffness);
        CHECK(s(0, 1) == doctest::Approx(-0.5));
        CHECK(s(0, 2) == doctest::Approx(-0.5));
        CHECK(std::abs(s(1, 2)) < 1e-15);
        CHECK(s(0, 0) == doctest::Approx(1.0));
    }

    TEST_CASE("rows sum to zero and S is symmetric") {
        const auto op = build_cotangent_laplacian(transformed(make_icosphere(3), rotation(1, 2, 3), 2.5, Vec3(1, 0, 0)));
        const Eigen::MatrixXd s = Eigen::MatrixXd(op.stiffness);
        CHECK(s.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
        CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    }

    TEST_CASE("mass is one third of incident area") {
        const Mesh m = make_icosphere(2);
        const auto op = build_cotangent_laplacian(m);
        Eigen::VectorXd expect = Eigen::VectorXd::Zero(m.vertex_count());
        for (const auto& f : m.faces) {
            const double a = triangle_area(m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]);
            for (auto v : f) expect[v] += a / 3.0;
        }
        CHECK((op.mass - expect).cwiseAbs().maxCoeff() < 1e-15);
    }

    TEST_CASE("uniform grid gives the five-point stencil") {
        const int n = 6;
        const auto op = build_cotangent_laplacian(make_grid(n, n));
        const Eigen::MatrixXd s = Eigen::MatrixXd(op.stiffness);
        auto id = [&](int x, int y) { return y * (n + 1) + x; };
        for (int y = 1; y < n; ++y) {
            for (int x = 1; x < n; ++x) {
                const int c = id(x, y);
                CHECK(s(c, c) == doctest::Approx(4.0));
                CHECK(s(c, id(x + 1, y)) == doctest::Approx(-1.0));
                CHECK(s(c, id(x - 1, y)) == doctest::Approx(-1.0));
                CHECK(s(c, id(x, y + 1)) == doctest::Approx(-1.0));
                CHECK(s(c, id(x, y - 1)) == doctest::Approx(-1.0));
                CHECK(std::abs(s(c, id(x + 1, y + 1))) < 1e-12);
                CHECK(std::abs(s(c, id(x - 1, y - 1))) < 1e-12);
            }
        }
    }

    TEST_CASE("matches a per-edge cotangent sum on an irregular mesh") {
        Mesh m = make_icosphere(2);
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> jitter(-0.03, 0.03);
        for (auto& v : m.vertices) v += Vec3(jitter(rng), jitter(rng), jitter(rng));
        const Eigen::MatrixXd s = Eigen::MatrixXd(build_cotangent_laplacian(m).stiffness);
        Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(s.rows(), s.cols());
        for (const auto& f : m.faces) {
            for (int c = 0; c < 3; ++c) {
                const auto i = f[(c + 1) % 3], j = f[(c + 2) % 3];
                const double w = 0.5 * cot_at(m.vertices[f[c]], m.vertices[i], m.vertices[j]);
                expect(i, j) -= w;
                expect(j, i) -= w;
                expect(i, i) += w;
                expect(j, j) += w;
            }
        }
        CHECK((s - expect).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("degenerate face is rejected") {
        Mesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
        m.faces = {{0, 1, 2}};
        CHECK_THROWS_AS(build_cotangent_laplacian(m), GeometryError);
    }
}

TEST_SUITE("eigensolver") {
    TEST_CASE("constant null vector") {
        const auto op = build_cotangent_laplacian(make_icosphere(3));
        const auto basis = solve_eigenpairs(op, 6);
        CHECK(std::abs(basis.eigenvalues[0]) < 1e-8);
        const Eigen::VectorXd phi = basis.eigenvectors.col(0);
        CHECK((phi.array() - phi.mean()).abs().maxCoeff() / std::abs(phi.mean()) < 1e-6);
    }

    TEST_CASE("unit sphere spectrum") {
        const auto op = build_cotangent_laplacian(make_icosphere(3));
        REQUIRE(op.size() == 642);
        const auto basis = solve_eigenpairs(op, 10);
        for (int i = 1; i <= 3; ++i) CHECK(std::abs(basis.eigenvalues[i] - 2.0) / 2.0 < 0.02);
        for (int i = 4; i <= 8; ++i) CHECK(std::abs(basis.eigenvalues[i] - 6.0) / 6.0 < 0.03);
        for (Eigen::Index i = 0; i < basis.count(); ++i)
            CHECK(eigen_residual(op, basis.eigenvalues[i], basis.eigenvectors.col(i)) <= 1e-8);
    }

    TEST_CASE("sparse route agrees with a dense generalized solve") {
        Mesh m = make_icosphere(2);  // 162 vertices, above the dense threshold
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        for (auto& v : m.vertices) v += Vec3(jitter(rng), jitter(rng), jitter(rng));
        const auto op = build_cotangent_laplacian(m);
        const auto basis = solve_eigenpairs(op, 40);
        const Eigen::VectorXd oracle = oracle_eigenvalues(op.stiffness, op.mass);
        for (Eigen::Index i = 0; i < 40; ++i) CHECK(std::abs(basis.eigenvalues[i] - oracle[i]) < 1e-8 * (1 + oracle[i]));
    }

    TEST_CASE("vectors are M-orthonormal") {
        const auto op = build_cotangent_laplacian(make_icosphere(3));
        const auto basis = solve_eigenpairs(op, 20);
        const Eigen::MatrixXd gram = basis.eigenvectors.transpose() * op.mass.asDiagonal() * basis.eigenvectors;
        CHECK((gram - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
    }

    TEST_CASE("two components give two zero modes") {
        const Mesh two = disjoint_union(make_icosphere(1), make_icosphere(1), Vec3(4, 0, 0));
        const auto op = build_cotangent_laplacian(two);
        const auto dense = solve_eigenpairs(op, 4);
        CHECK(dense.eigenvalues[0] < 1e-8);
        CHECK(dense.eigenvalues[1] < 1e-8);
        CHECK(dense.eigenvalues[2] > 1e-3);

        const Mesh big = disjoint_union(make_icosphere(3), make_icosphere(2), Vec3(4, 0, 0));
        const auto sparse = solve_eigenpairs(build_cotangent_laplacian(big), 4);
        CHECK(sparse.eigenvalues[0] < 1e-8);
        CHECK(sparse.eigenvalues[1] < 1e-8);
    }

    TEST_CASE("deterministic per seed") {
        const auto op = build_cotangent_laplacian(make_icosphere(3));
        const auto a = solve_eigenpairs(op, 12);
        const auto b = solve_eigenpairs(op, 12);
        CHECK(a.eigenvalues == b.eigenvalues);
        CHECK(a.eigenvectors == b.eigenvectors);
    }
}

TEST_SUITE("hks") {
    TEST_CASE("sphere rows are nearly equal") {
        const auto h = hks_of(make_icosphere(3), 40, 32);
        const Eigen::RowVectorXd mean = h.features.colwise().mean();
        for (Eigen::Index i = 0; i < h.vertex_count(); ++i)
            CHECK(((h.features.row(i) - mean).cwiseAbs().array() / mean.cwiseAbs().array()).maxCoeff() < 0.02);
    }

    TEST_CASE("columns have unit mass-weighted mean") {
        const Mesh m = make_spiked_sphere(2, 0, 1.6);
        const auto op = build_cotangent_laplacian(m);
        const auto h = compute_hks(solve_eigenpairs(op, 30), op.mass, 16);
        const Eigen::RowVectorXd sums = op.mass.transpose() * h.features / op.mass.sum();
        CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
        for (Eigen::Index j = 1; j < h.times.size(); ++j) CHECK(h.times[j] > h.times[j - 1]);
    }

    TEST_CASE("rigid motion invariance") {
        const Mesh m = make_spiked_sphere(3, 7, 1.5);
        const auto a = hks_of(m, 40, 32);
        const auto b = hks_of(transformed(m, rotation(0.4, -1.1, 2.0), 1.0, Vec3(3, -1, 2)), 40, 32);
        CHECK(relative_change(a.features, b.features) < 1e-6);
    }

    TEST_CASE("uniform scaling invariance") {
        const Mesh m = make_spiked_sphere(3, 7, 1.5);
        const auto a = hks_of(m, 40, 32);
        const auto b = hks_of(transformed(m, Eigen::Matrix3d::Identity(), 2.0, Vec3::Zero()), 40, 32);
        CHECK(relative_change(a.features, b.features) < 1e-5);
    }

    TEST_CASE("distance") {
        const Mesh m = make_icosphere(3);
        const auto h = hks_of(m, 40, 32);
        CHECK(hks_distance(h, 5, 5) == 0.0);
        // Antipodal vertices share their local geometry.
        for (std::uint32_t i = 0; i < 12; ++i) {
            std::uint32_t anti = 0;
            for (std::uint32_t j = 0; j < m.vertex_count(); ++j)
                if ((m.vertices[j] + m.vertices[i]).norm() < (m.vertices[anti] + m.vertices[i]).norm()) anti = j;
            CHECK(hks_distance(h, i, anti) < 1e-3);
        }
    }

    TEST_CASE("spike apex is far from ordinary vertices") {
        const std::uint32_t apex = 0;
        const Mesh m = make_spiked_sphere(3, apex, 1.6);
        const auto h = hks_of(m, 60, 32);
        const Vec3 dir = m.vertices[apex].normalized();
        std::vector<Eigen::Index> far;
        for (std::uint32_t v = 0; v < m.vertex_count(); ++v)
            if (m.vertices[v].normalized().dot(dir) < 0.0) far.push_back(v);
        double sphere_pairs = 0.0;
        for (auto a : far)
            for (auto b : far) sphere_pairs = std::max(sphere_pairs, hks_distance(h, a, b));
        double apex_min = INFINITY;
        for (auto v : far) apex_min = std::min(apex_min, hks_distance(h, apex, v));
        CHECK(apex_min > sphere_pairs);
    }

    TEST_CASE("heat kernel tends to the identity pattern for short times") {
        const Mesh m = make_icosphere(1);  // 42 vertices
        const auto op = build_cotangent_laplacian(m);
        const auto n = static_cast<Eigen::Index>(m.vertex_count());
        const auto basis = solve_eigenpairs_dense(op, n - 1);
        const double t1 = hks_times(basis, 8)[0];
        auto off_ratio = [&](double t) {
            double worst = 0.0;
            for (Eigen::Index x = 0; x < n; ++x)
                for (Eigen::Index y = 0; y < n; ++y)
                    if (x != y) worst = std::max(worst, std::abs(heat_kernel(basis, t, x, y)) / heat_kernel(basis, t, x, x));
            return worst;
        };
        const double coarse = off_ratio(t1);
        const double fine = off_ratio(t1 / 10);
        CHECK(fine < coarse / 4);
        // As t -> 0 the truncated kernel tends to M^-1 minus the one dropped mode.
        const Eigen::MatrixXd md = op.mass.asDiagonal();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> full(Eigen::MatrixXd(op.stiffness), md);
        const Eigen::VectorXd top = full.eigenvectors().col(n - 1);
        const double t = t1 * 1e-9;
        double worst = 0.0;
        for (Eigen::Index x = 0; x < n; ++x) {
            for (Eigen::Index y = 0; y < n; ++y) {
                const double limit = (x == y ? 1.0 / op.mass[x] : 0.0) - top[x] * top[y];
                worst = std::max(worst, std::abs(heat_kernel(basis, t, x, y) - limit) / (1.0 / op.mass[x]));
            }
        }
        CHECK(worst < 1e-6);
    }

    TEST_CASE("binary round trip") {
        const auto h = hks_of(make_icosphere(2), 20, 8);
        std::stringstream buf;
        write_hks(buf, h);
        const auto back = read_hks(buf);
        CHECK(back.features == h.features);
        CHECK(back.times == h.times);
    }

    TEST_CASE("disconnected surface is refused") {
        const Mesh two = disjoint_union(make_icosphere(1), make_icosphere(1), Vec3(4, 0, 0));
        const auto op = build_cotangent_laplacian(two);
        CHECK_THROWS_AS(compute_hks(solve_eigenpairs(op, 8), op.mass, 4), GeometryError);
    }
}
