#pragma once

#include <array>
#include <vector>

#include "ltn/mesh.hpp"

namespace ltn {

/// Degrees of freedom of the broken P1 space: every vertex touching a local
/// triangle carries a local DOF and every vertex touching a nonlocal
/// triangle a nonlocal one, so interface vertices carry two. Local DOFs come
/// first. Vertices on the boundary of Omega are constrained to zero.
struct DofMap {
    std::vector<Index> local;     // vertex -> DOF or -1
    std::vector<Index> nonlocal;  // vertex -> DOF or -1
    Index num_local = 0;
    Index num_nonlocal = 0;

    Index size() const { return num_local + num_nonlocal; }
    Index offset(Label side) const { return side == Label::Nonlocal ? num_local : 0; }
    Index count(Label side) const {
        return side == Label::Local ? num_local : side == Label::Nonlocal ? num_nonlocal : 0;
    }

    Index dof(Label side, Index v) const {
        switch (side) {
        case Label::Local: return local[v];
        case Label::Nonlocal: return nonlocal[v];
        case Label::Exterior: return -1;
        }
        return -1;
    }

    /// DOFs of a triangle on its own side; all -1 for exterior triangles.
    std::array<Index, 3> element(const LabeledMesh& mesh, Index t) const {
        const auto& tri = mesh.triangle(t);
        const Label side = mesh.label(t);
        return {dof(side, tri[0]), dof(side, tri[1]), dof(side, tri[2])};
    }

    /// With `constrained == false` boundary vertices keep their DOFs; used
    /// for structural checks of the raw forms.
    static DofMap build(const LabeledMesh& mesh, bool constrained = true) {
        DofMap d;
        const std::size_t nv = mesh.num_vertices();
        d.local.assign(nv, -1);
        d.nonlocal.assign(nv, -1);
        for (std::size_t v = 0; v < nv; ++v) {
            const auto& f = mesh.flags(static_cast<Index>(v));
            if (constrained && f.on_boundary) continue;
            if (f.in_local) d.local[v] = d.num_local++;
        }
        for (std::size_t v = 0; v < nv; ++v) {
            const auto& f = mesh.flags(static_cast<Index>(v));
            if (constrained && f.on_boundary) continue;
            if (f.in_nonlocal) d.nonlocal[v] = d.num_local + d.num_nonlocal++;
        }
        return d;
    }
};

}  // namespace ltn
