#include "surfpatch/laplacian.hpp"

#include <vector>

namespace surfpatch {

LaplaceOperator build_cotangent_laplacian(const Mesh& mesh) {
    mesh.validate();
    if (mesh.faces.empty()) throw GeometryError("laplacian: mesh has no faces");
    const auto n = static_cast<Eigen::Index>(mesh.vertices.size());

    LaplaceOperator op;
    op.mass = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.faces.size() * 12);

    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        const Vec3& p0 = mesh.vertices[t[0]];
        const Vec3& p1 = mesh.vertices[t[1]];
        const Vec3& p2 = mesh.vertices[t[2]];
        const double double_area = (p1 - p0).cross(p2 - p0).norm();
        if (0.5 * double_area < 1e-14) {
            throw GeometryError("laplacian: face " + std::to_string(f) + " has zero area");
        }
        for (auto v : t) op.mass[v] += double_area / 6.0;

        // Corner k is opposite edge (k+1, k+2); cot = (u.v) / |u x v|.
        for (int k = 0; k < 3; ++k) {
            const auto i = t[(k + 1) % 3];
            const auto j = t[(k + 2) % 3];
            const Vec3 u = mesh.vertices[i] - mesh.vertices[t[k]];
            const Vec3 w = mesh.vertices[j] - mesh.vertices[t[k]];
            const double half_cot = 0.5 * u.dot(w) / double_area;
            triplets.emplace_back(i, j, -half_cot);
            triplets.emplace_back(j, i, -half_cot);
            triplets.emplace_back(i, i, half_cot);
            triplets.emplace_back(j, j, half_cot);
        }
    }
    for (Eigen::Index v = 0; v < n; ++v) {
        if (op.mass[v] <= 0.0) {
            throw GeometryError("laplacian: vertex " + std::to_string(v) + " is isolated");
        }
    }
    op.stiffness.resize(n, n);
    op.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    op.stiffness.makeCompressed();
    return op;
}

}  // namespace surfpatch
