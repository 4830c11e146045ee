#pragma once

#include <array>

#include "ltn/dofmap.hpp"

namespace ltn {

/// P1 field of the broken space: nodal values on the local and on the
/// nonlocal side. Entries of vertices without a DOF on a side hold the
/// prescribed value zero.
struct BrokenField {
    VectorXd local;
    VectorXd nonlocal;

    static BrokenField zeros(std::size_t num_vertices) {
        return {VectorXd::Zero(static_cast<Eigen::Index>(num_vertices)),
                VectorXd::Zero(static_cast<Eigen::Index>(num_vertices))};
    }

    static BrokenField from_dofs(const DofMap& dofs, const VectorXd& x) {
        if (x.size() != dofs.size()) throw Error(ErrorCode::InvalidArgument, "coefficient size mismatch");
        BrokenField u = zeros(dofs.local.size());
        for (std::size_t v = 0; v < dofs.local.size(); ++v) {
            if (dofs.local[v] >= 0) u.local[v] = x[dofs.local[v]];
            if (dofs.nonlocal[v] >= 0) u.nonlocal[v] = x[dofs.nonlocal[v]];
        }
        return u;
    }

    VectorXd to_dofs(const DofMap& dofs) const {
        VectorXd x(dofs.size());
        for (std::size_t v = 0; v < dofs.local.size(); ++v) {
            if (dofs.local[v] >= 0) x[dofs.local[v]] = local[v];
            if (dofs.nonlocal[v] >= 0) x[dofs.nonlocal[v]] = nonlocal[v];
        }
        return x;
    }

    const VectorXd& side(Label s) const { return s == Label::Nonlocal ? nonlocal : local; }

    /// Nodal values on triangle t from the side owning it (zero on the exterior).
    Eigen::Vector3d element_values(const LabeledMesh& mesh, Index t) const {
        const Label s = mesh.label(t);
        if (s == Label::Exterior) return Eigen::Vector3d::Zero();
        const auto& tri = mesh.triangle(t);
        const auto& f = side(s);
        return {f[tri[0]], f[tri[1]], f[tri[2]]};
    }

    Vec2 gradient(const LabeledMesh& mesh, Index t) const {
        return mesh.basis_gradients(t).transpose() * element_values(mesh, t);
    }

    double value(const LabeledMesh& mesh, Index t, const std::array<double, 3>& bary) const {
        const auto e = element_values(mesh, t);
        return bary[0] * e[0] + bary[1] * e[1] + bary[2] * e[2];
    }
};

}  // namespace ltn
