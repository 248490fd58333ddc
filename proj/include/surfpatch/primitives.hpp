#pragma once

#include "surfpatch/mesh.hpp"

namespace surfpatch {

/// Unit-radius icosphere; subdivision s has 10*4^s + 2 vertices.
Mesh make_icosphere(int subdivisions, double radius = 1.0);

/// Flat grid in the z=0 plane over [0,1]^2 with nx*ny quads split along
/// the same diagonal; (nx+1)*(ny+1) vertices.
Mesh make_grid(int nx, int ny);

/// Icosphere with vertex `apex` pushed radially outward to `height` times
/// the radius.
Mesh make_spiked_sphere(int subdivisions, std::uint32_t apex, double height);

/// Applies p -> rotation * p * scale + translation to every vertex.
Mesh transformed(const Mesh& mesh, const Eigen::Matrix3d& rotation, double scale, const Vec3& translation);

}  // namespace surfpatch
