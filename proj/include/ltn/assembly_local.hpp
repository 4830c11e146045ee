#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ltn/dofmap.hpp"
#include "ltn/parallel.hpp"
#include "ltn/quadrature.hpp"

namespace ltn {

using Mat3 = Eigen::Matrix3d;

/// Scalar field with gradient, e.g. one side of the right-hand side f.
struct ScalarField {
    std::function<double(const Vec2&)> value = [](const Vec2&) { return 0.0; };
    std::function<Vec2(const Vec2&)> gradient = [](const Vec2&) { return Vec2::Zero().eval(); };
    bool zero = true;

    static ScalarField constant(double c) {
        ScalarField f;
        f.value = [c](const Vec2&) { return c; };
        f.zero = c == 0.0;
        return f;
    }

    /// a + b x + c y
    static ScalarField linear(double a, double b, double c) {
        ScalarField f;
        f.value = [a, b, c](const Vec2& x) { return a + b * x.x() + c * x.y(); };
        f.gradient = [b, c](const Vec2&) { return Vec2(b, c); };
        f.zero = a == 0.0 && b == 0.0 && c == 0.0;
        return f;
    }
};

/// Piecewise right-hand side: one field on each subdomain.
struct Forcing {
    ScalarField local, nonlocal;

    static Forcing piecewise_constant(double f_local, double f_nonlocal) {
        return {ScalarField::constant(f_local), ScalarField::constant(f_nonlocal)};
    }

    const ScalarField& on(Label side) const { return side == Label::Nonlocal ? nonlocal : local; }
    bool is_zero() const { return local.zero && nonlocal.zero; }
};

namespace detail {

inline void check_area(const LabeledMesh& mesh, Index t) {
    if (!(mesh.area(t) > 0.0)) throw Error(ErrorCode::DegenerateTriangle, "triangle with non-positive area");
}

/// Scatters a 3x3 element matrix into triplets, skipping constrained rows and columns.
inline void scatter(const std::array<Index, 3>& rows, const std::array<Index, 3>& cols, const Mat3& ke,
                    std::vector<Triplet>& out) {
    for (int i = 0; i < 3; ++i) {
        if (rows[i] < 0) continue;
        for (int j = 0; j < 3; ++j) {
            if (cols[j] < 0 || ke(i, j) == 0.0) continue;
            out.emplace_back(rows[i], cols[j], ke(i, j));
        }
    }
}

template <class ElementFn>
SpMat assemble_region(const LabeledMesh& mesh, Label region, Eigen::Index size,
                      const std::function<std::array<Index, 3>(Index)>& dofs_of, ElementFn&& element) {
    const auto trips = chunked_collect<Triplet>(mesh.num_triangles(), [&](std::size_t b, std::size_t e,
                                                                          std::vector<Triplet>& out) {
        for (std::size_t t = b; t < e; ++t) {
            const auto tt = static_cast<Index>(t);
            if (mesh.label(tt) != region) continue;
            check_area(mesh, tt);
            scatter(dofs_of(tt), dofs_of(tt), element(tt), out);
        }
    });
    return from_triplets(size, size, trips);
}

}  // namespace detail

/// P1 stiffness of one triangle.
inline Mat3 laplace_element(const LabeledMesh& mesh, Index t) {
    const auto g = mesh.basis_gradients(t);
    return mesh.area(t) * g * g.transpose();
}

/// Consistent P1 mass of a triangle with the given area.
inline Mat3 mass_element(double area) {
    Mat3 m;
    m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    return m * (area / 12.0);
}

/// Stiffness over the local triangles, indexed by global free DOFs.
inline SpMat assemble_laplace(const LabeledMesh& mesh, const DofMap& dofs) {
    return detail::assemble_region(mesh, Label::Local, dofs.size(),
                                   [&](Index t) { return dofs.element(mesh, t); },
                                   [&](Index t) { return laplace_element(mesh, t); });
}

/// Mass over the triangles of `region`, as a block over that side's DOFs
/// (zero-dimensional for the exterior).
inline SpMat assemble_mass(const LabeledMesh& mesh, Label region, const DofMap& dofs) {
    const Index off = dofs.offset(region);
    return detail::assemble_region(mesh, region, dofs.count(region),
                                   [&](Index t) {
                                       auto d = dofs.element(mesh, t);
                                       for (auto& i : d)
                                           if (i >= 0) i -= off;
                                       return d;
                                   },
                                   [&](Index t) { return mass_element(mesh.area(t)); });
}

/// Unconstrained vertex-indexed mass over the triangles of `region`.
inline SpMat assemble_vertex_mass(const LabeledMesh& mesh, Label region) {
    return detail::assemble_region(mesh, region, static_cast<Eigen::Index>(mesh.num_vertices()),
                                   [&](Index t) { return mesh.triangle(t); },
                                   [&](Index t) { return mass_element(mesh.area(t)); });
}

/// Vertex-indexed mass over all of Omega.
inline SpMat assemble_omega_mass(const LabeledMesh& mesh) {
    return assemble_vertex_mass(mesh, Label::Local) + assemble_vertex_mass(mesh, Label::Nonlocal);
}

/// Mass with weight w(x) over `region`, indexed by global free DOFs.
inline SpMat assemble_weighted_mass(const LabeledMesh& mesh, Label region,
                                    const std::function<double(const Vec2&)>& w, const DofMap& dofs,
                                    const TriangleRule& rule = seven_point_rule()) {
    return detail::assemble_region(mesh, region, dofs.size(), [&](Index t) { return dofs.element(mesh, t); },
                                   [&](Index t) {
                                       const auto c = mesh.corners(t);
                                       Mat3 m = Mat3::Zero();
                                       for (std::size_t q = 0; q < rule.size(); ++q) {
                                           const auto& l = rule.points[q];
                                           const double wq = w(barycentric_to_point(l, c[0], c[1], c[2]));
                                           if (wq < 0.0)
                                               throw Error(ErrorCode::NegativeWeight, "negative mass weight");
                                           const Eigen::Vector3d phi(l[0], l[1], l[2]);
                                           m += rule.weights[q] * wq * phi * phi.transpose();
                                       }
                                       return (mesh.area(t) * m).eval();
                                   });
}

/// Load vector +int f v on both subdomains, indexed by global free DOFs.
inline VectorXd assemble_load(const LabeledMesh& mesh, const Forcing& f, const DofMap& dofs,
                              const TriangleRule& rule = seven_point_rule()) {
    VectorXd b = VectorXd::Zero(dofs.size());
    if (f.is_zero()) return b;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        const Label side = mesh.label(tt);
        if (side == Label::Exterior) continue;
        detail::check_area(mesh, tt);
        const auto& field = f.on(side);
        if (field.zero) continue;
        const auto c = mesh.corners(tt);
        const auto d = dofs.element(mesh, tt);
        const double area = mesh.area(tt);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto& l = rule.points[q];
            const double fq = field.value(barycentric_to_point(l, c[0], c[1], c[2]));
            for (int i = 0; i < 3; ++i)
                if (d[i] >= 0) b[d[i]] += area * rule.weights[q] * fq * l[i];
        }
    }
    return b;
}

}  // namespace ltn
