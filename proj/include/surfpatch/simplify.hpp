#pragma once

#include "surfpatch/mesh.hpp"

#include <cstddef>

namespace surfpatch {

struct SimplifyParams {
    /// Largest admissible collapse cost. The cost is the quadric error of the
    /// collapse on the unit-box-normalized mesh, expressed in units of the
    /// squared mean edge length of the input, so one value transfers across
    /// datasets of different extent and resolution.
    double epsilon = 0.5;
    std::size_t min_vertices = 200;
    /// Weight of the plane-through-boundary-edge constraint quadric.
    double boundary_weight = 1e3;

    void validate() const;
};

struct SimplifyStats {
    std::size_t collapses = 0;
    std::size_t rejected_topology = 0;  // link condition / non-manifold edge
    std::size_t rejected_flip = 0;
    double last_cost = 0.0;
};

/// Garland-Heckbert edge collapse. The input is normalized internally; the
/// result is returned in the input's coordinate frame and untouched
/// vertices keep their original coordinates exactly.
Mesh simplify_qem(const Mesh& mesh, const SimplifyParams& params, SimplifyStats* stats = nullptr);

}  // namespace surfpatch
