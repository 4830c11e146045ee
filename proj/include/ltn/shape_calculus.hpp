#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <variant>
#include <vector>

#include "ltn/ltn_solver.hpp"

namespace ltn {

/// Flattened nodal 2-vector field: entry 2 i + k is component k at vertex i.
using VectorField = VectorXd;

inline Vec2 field_at(const VectorField& f, Index v) { return {f[2 * v], f[2 * v + 1]}; }

inline std::vector<Vec2> to_points(const VectorField& f) {
    std::vector<Vec2> out(static_cast<std::size_t>(f.size() / 2));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = field_at(f, static_cast<Index>(i));
    return out;
}

/// 1/2 int (u - ubar)^2 over Omega, exact for P1 data.
inline double tracking_term(const LabeledMesh& mesh, const BrokenField& u, const VectorXd& ubar) {
    double s = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (!mesh.in_omega(tt)) continue;
        const auto& tri = mesh.triangle(tt);
        const Eigen::Vector3d e = u.element_values(mesh, tt) - Eigen::Vector3d(ubar[tri[0]], ubar[tri[1]], ubar[tri[2]]);
        s += e.dot(mass_element(mesh.area(tt)) * e);
    }
    return 0.5 * s;
}

inline double eval_objective(const LabeledMesh& mesh, const BrokenField& u, const VectorXd& ubar, double nu) {
    return tracking_term(mesh, u, ubar) + nu * derive_interface(mesh).total_length();
}

/// Tracking part along every basis field V = e_k phi_i:
/// int -(u - ubar) I_h(grad ubar . V) + 1/2 (u - ubar)^2 div V, where
/// `ubar_grad` holds the data gradient at each vertex.
inline VectorField shape_derivative_tracking(const LabeledMesh& mesh, const BrokenField& u, const VectorXd& ubar,
                                             const std::vector<Vec2>& ubar_grad) {
    VectorField d = VectorField::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (!mesh.in_omega(tt)) continue;
        const auto& tri = mesh.triangle(tt);
        const Eigen::Vector3d e = u.element_values(mesh, tt) - Eigen::Vector3d(ubar[tri[0]], ubar[tri[1]], ubar[tri[2]]);
        const Mat3 m = mass_element(mesh.area(tt));
        const Eigen::Vector3d me = m * e;  // int e phi_i
        const double e2 = e.dot(me);
        const auto g = mesh.basis_gradients(tt);
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 2; ++k)
                d[2 * tri[i] + k] += -me[i] * ubar_grad[tri[i]][k] + 0.5 * e2 * g(i, k);
        }
    }
    return d;
}

/// nu int_Gamma div V - n^T grad V n, one midpoint per interface edge with
/// grad V averaged over the two adjacent triangles.
inline VectorField shape_derivative_perimeter(const LabeledMesh& mesh, const InterfaceCurve& curve, double nu) {
    VectorField d = VectorField::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (const auto& e : curve.edges) {
        const Index tris[2] = {e.nonlocal_triangle, e.local_triangle};
        const Vec2& n = e.normal;
        // Averaged gradient of phi_i for every vertex of the two triangles.
        std::vector<std::pair<Index, Vec2>> grads;
        for (Index t : tris) {
            const auto g = mesh.basis_gradients(t);
            const auto& tri = mesh.triangle(t);
            for (int i = 0; i < 3; ++i) {
                const Vec2 gi = 0.5 * g.row(i).transpose();
                auto it = std::find_if(grads.begin(), grads.end(), [&](const auto& p) { return p.first == tri[i]; });
                if (it == grads.end()) grads.emplace_back(tri[i], gi);
                else it->second += gi;
            }
        }
        for (const auto& [v, g] : grads) {
            for (int k = 0; k < 2; ++k) {
                // V = e_k phi_v: div V = g_k, n^T grad V n = n_k (g . n).
                d[2 * v + k] += nu * e.length * (g[k] - n[k] * g.dot(n));
            }
        }
    }
    return d;
}

/// Derivative of the load functional F(v) = int f v along every basis
/// field: int (grad f . V) v + f v div V.
inline VectorField shape_derivative_force(const LabeledMesh& mesh, const BrokenField& v, const Forcing& f,
                                          const TriangleRule& rule = seven_point_rule()) {
    VectorField d = VectorField::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        const Label side = mesh.label(tt);
        if (side == Label::Exterior) continue;
        const auto& field = f.on(side);
        if (field.zero) continue;
        const auto c = mesh.corners(tt);
        const auto& tri = mesh.triangle(tt);
        const auto g = mesh.basis_gradients(tt);
        const Eigen::Vector3d ve = v.element_values(mesh, tt);
        const double area = mesh.area(tt);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto& l = rule.points[q];
            const Vec2 x = barycentric_to_point(l, c[0], c[1], c[2]);
            const double fq = field.value(x);
            const Vec2 gf = field.gradient(x);
            const double vq = l[0] * ve[0] + l[1] * ve[1] + l[2] * ve[2];
            const double w = area * rule.weights[q];
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 2; ++k) d[2 * tri[i] + k] += w * vq * (gf[k] * l[i] + fq * g(i, k));
        }
    }
    return d;
}

/// Derivative of int_{Omega_l} grad u . grad v along every basis field:
/// -((grad V + grad V^T) grad u, grad v) + (grad u . grad v) div V.
inline VectorField shape_derivative_local(const LabeledMesh& mesh, const BrokenField& u, const BrokenField& v) {
    VectorField d = VectorField::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (mesh.label(tt) != Label::Local) continue;
        const auto g = mesh.basis_gradients(tt);
        const Vec2 gu = u.gradient(mesh, tt), gv = v.gradient(mesh, tt);
        const double area = mesh.area(tt);
        const auto& tri = mesh.triangle(tt);
        for (int i = 0; i < 3; ++i) {
            const Vec2 gp = g.row(i).transpose();
            for (int k = 0; k < 2; ++k)
                d[2 * tri[i] + k] += area * (-(gu[k] * gp.dot(gv) + gp.dot(gu) * gv[k]) + gu.dot(gv) * gp[k]);
        }
    }
    return d;
}

/// Vertices whose patch contains a triangle with a vertex on the interface.
inline std::vector<bool> interface_patch_mask(const LabeledMesh& mesh) {
    std::vector<bool> touches(mesh.num_triangles(), false);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
        for (Index v : mesh.triangle(t)) touches[t] = touches[t] || mesh.flags(v).on_interface;
    std::vector<bool> keep(mesh.num_vertices(), false);
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (!mesh.flags(v).movable()) continue;
        for (Index t : mesh.vertex_triangles(v)) keep[v] = keep[v] || touches[t];
    }
    return keep;
}

/// Sets both components of every vertex outside the interface patch (and
/// of every non-movable vertex) to zero.
inline void apply_zeroing(const LabeledMesh& mesh, VectorField& d) {
    const auto keep = interface_patch_mask(mesh);
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (keep[v]) continue;
        d[2 * v] = 0.0;
        d[2 * v + 1] = 0.0;
    }
}

struct ShapeDerivativeTerms {
    VectorField tracking, perimeter, local, nonlocal, force;
    VectorField total;  // after zeroing
    std::vector<bool> kept;
};

/// All terms of the reduced shape derivative at the current shape. u is the
/// state, v the adjoint, ubar the data on the mesh with nodal gradients.
inline ShapeDerivativeTerms assemble_full_shape_derivative(const SparseSystem& sys, const Kernel& kernel,
                                                           const Forcing& f, double nu, const BrokenField& u,
                                                           const BrokenField& v, const VectorXd& ubar,
                                                           const std::vector<Vec2>& ubar_grad,
                                                           const AssemblyOptions& opt = {}) {
    const auto& mesh = sys.mesh;
    ShapeDerivativeTerms r;
    r.tracking = shape_derivative_tracking(mesh, u, ubar, ubar_grad);
    r.perimeter = shape_derivative_perimeter(mesh, derive_interface(mesh), nu);
    r.local = shape_derivative_local(mesh, u, v);
    r.nonlocal = nonlocal_shape_derivative(mesh, kernel, u, v, sys.pairs, opt.nonlocal);
    r.force = shape_derivative_force(mesh, v, f, opt.rule);
    r.total = r.tracking + r.perimeter + r.local + r.nonlocal - r.force;
    apply_zeroing(mesh, r.total);
    r.kept = interface_patch_mask(mesh);
    return r;
}

/// Harmonic mu on Omega with mu = mu_min on the boundary of Omega and
/// mu = mu_max on the interface. Exterior-only vertices get mu_min.
inline VectorXd solve_mu(const LabeledMesh& mesh, double mu_min, double mu_max) {
    const std::size_t nv = mesh.num_vertices();
    VectorXd mu = VectorXd::Constant(static_cast<Eigen::Index>(nv), mu_min);
    std::vector<Index> id(nv, -1);
    Index n = 0;
    bool any_interface = false;
    for (std::size_t v = 0; v < nv; ++v) {
        const auto& fl = mesh.flags(v);
        if (fl.on_interface) {
            mu[v] = mu_max;
            any_interface = true;
        } else if (fl.in_omega() && !fl.on_boundary) {
            id[v] = n++;
        }
    }
    if (!any_interface) throw Error(ErrorCode::EmptyInterface, "mu needs an interface");
    std::vector<Triplet> trips;
    VectorXd rhs = VectorXd::Zero(n);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (!mesh.in_omega(tt)) continue;
        const Mat3 k = laplace_element(mesh, tt);
        const auto& tri = mesh.triangle(tt);
        for (int i = 0; i < 3; ++i) {
            if (id[tri[i]] < 0) continue;
            for (int j = 0; j < 3; ++j) {
                if (id[tri[j]] >= 0) trips.emplace_back(id[tri[i]], id[tri[j]], k(i, j));
                else rhs[id[tri[i]]] -= k(i, j) * mu[tri[j]];
            }
        }
    }
    const VectorXd x = LinearSolver(detail::from_triplets(n, n, trips), 1e-12).solve(rhs);
    for (std::size_t v = 0; v < nv; ++v)
        if (id[v] >= 0) mu[v] = x[id[v]];
    return mu;
}

/// Vector P1 form int 2 mu eps(U) : eps(V) over Omega (mu per triangle is
/// the mean of its nodal values), indexed 2 i + k, unconstrained.
inline SpMat elasticity_matrix(const LabeledMesh& mesh, const VectorXd& mu) {
    std::vector<Triplet> trips;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (!mesh.in_omega(tt)) continue;
        const auto& tri = mesh.triangle(tt);
        const double m = (mu[tri[0]] + mu[tri[1]] + mu[tri[2]]) / 3.0;
        if (m == 0.0) continue;
        const auto g = mesh.basis_gradients(tt);
        const double c = m * mesh.area(tt);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l) {
                        const double val = c * ((k == l ? g.row(i).dot(g.row(j)) : 0.0) + g(i, l) * g(j, k));
                        if (val != 0.0) trips.emplace_back(2 * tri[i] + k, 2 * tri[j] + l, val);
                    }
    }
    const auto n = 2 * static_cast<Eigen::Index>(mesh.num_vertices());
    return detail::from_triplets(n, n, trips);
}

/// Elasticity form restricted to movable vertices, with the index map.
struct RieszOperator {
    std::vector<Index> free;  // flattened index -> free index or -1
    Index size = 0;
    SpMat K;                  // free x free
    std::shared_ptr<LinearSolver> solver;

    RieszOperator(const LabeledMesh& mesh, const VectorXd& mu) {
        if (!(mu.maxCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu must be positive somewhere");
        free.assign(2 * mesh.num_vertices(), -1);
        for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
            if (mesh.flags(v).movable())
                for (int k = 0; k < 2; ++k) free[2 * v + k] = size++;
        const SpMat full = elasticity_matrix(mesh, mu);
        std::vector<Triplet> trips;
        for (int c = 0; c < full.outerSize(); ++c)
            for (SpMat::InnerIterator it(full, c); it; ++it)
                if (free[it.row()] >= 0 && free[it.col()] >= 0)
                    trips.emplace_back(free[it.row()], free[it.col()], it.value());
        K = detail::from_triplets(size, size, trips);
        solver = std::make_shared<LinearSolver>(K, 1e-12);
    }

    VectorXd restrict_(const VectorField& f) const {
        VectorXd r(size);
        for (std::size_t i = 0; i < free.size(); ++i)
            if (free[i] >= 0) r[free[i]] = f[i];
        return r;
    }

    VectorField extend(const VectorXd& r) const {
        VectorField f = VectorField::Zero(static_cast<Eigen::Index>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i)
            if (free[i] >= 0) f[i] = r[free[i]];
        return f;
    }

    /// b(a, c) for fields vanishing off the free set.
    double inner(const VectorField& a, const VectorField& c) const { return restrict_(a).dot(K * restrict_(c)); }

    /// Solves b(G, V_i) = D[V_i] for all free basis fields.
    VectorField solve(const VectorField& d) const { return extend(solver->solve(restrict_(d))); }
};

inline VectorField riesz_gradient(const VectorField& derivative, const LabeledMesh& mesh, const VectorXd& mu) {
    return RieszOperator(mesh, mu).solve(derivative);
}

/// L2(Omega) norm of a nodal vector field.
inline double vector_l2_norm(const LabeledMesh& mesh, const VectorField& g) {
    const SpMat m = assemble_omega_mass(mesh);
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    VectorXd gx(n), gy(n);
    for (Eigen::Index v = 0; v < n; ++v) {
        gx[v] = g[2 * v];
        gy[v] = g[2 * v + 1];
    }
    return std::sqrt(std::max(0.0, gx.dot(m * gx) + gy.dot(m * gy)));
}

/// Problem data of the reduced functional.
struct ShapeProblem {
    Kernel kernel = gamma1(0.1);
    Forcing forcing = Forcing::piecewise_constant(-10.0, 10.0);
    double nu = 1e-3;
    AssemblyOptions assembly;
};

/// Continuous data field on a fixed data mesh.
class DataField {
public:
    DataField(LabeledMesh mesh, VectorXd values, double max_distance)
        : interp_(std::make_shared<P1Interpolator>(std::move(mesh), std::move(values))), max_distance_(max_distance) {}

    const P1Interpolator& interpolator() const { return *interp_; }
    double max_distance() const { return max_distance_; }

    VectorXd on(const LabeledMesh& mesh) const { return interpolate(*interp_, mesh, max_distance_); }

    std::vector<Vec2> gradients_on(const LabeledMesh& mesh) const {
        std::vector<Vec2> g(mesh.num_vertices());
        for (std::size_t v = 0; v < mesh.num_vertices(); ++v) g[v] = interp_->gradient(mesh.vertex(v), max_distance_);
        return g;
    }

private:
    std::shared_ptr<const P1Interpolator> interp_;
    double max_distance_;
};

/// Continuous nodal field from a broken one: the two sides are averaged on
/// the interface, exterior-only vertices get 0.
inline VectorXd continuous_projection(const LabeledMesh& mesh, const BrokenField& u) {
    VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const auto& fl = mesh.flags(v);
        if (fl.in_local && fl.in_nonlocal) out[v] = 0.5 * (u.local[v] + u.nonlocal[v]);
        else if (fl.in_local) out[v] = u.local[v];
        else if (fl.in_nonlocal) out[v] = u.nonlocal[v];
    }
    return out;
}

/// Solves the forward problem on the data mesh and keeps its continuous
/// projection as the data field.
inline DataField generate_data(const LabeledMesh& data_mesh, const ShapeProblem& p, double max_distance = 1e-6) {
    const SparseSystem sys = assemble_monolithic(data_mesh, p.kernel, p.forcing, p.assembly);
    return DataField(data_mesh, continuous_projection(data_mesh, solve_state(sys)), max_distance);
}

/// State solve and objective on one shape.
struct Evaluation {
    std::shared_ptr<SparseSystem> system;
    std::shared_ptr<LinearSolver> solver;
    BrokenField u;
    VectorXd ubar;
    double tracking = 0.0, perimeter = 0.0;

    double objective(double nu) const { return tracking + nu * perimeter; }
};

/// Options that pin the nonlocal discretisation to a reference shape, used
/// to compare derivatives with difference quotients.
struct FrozenTruncation {
    const LabeledMesh* reference = nullptr;
    const std::vector<TrianglePair>* pairs = nullptr;
};

inline Evaluation evaluate_shape(const LabeledMesh& mesh, const ShapeProblem& p, const DataField& data,
                                 FrozenTruncation frozen = {}) {
    AssemblyOptions opt = p.assembly;
    if (frozen.reference) opt.nonlocal.truncation_reference = frozen.reference;
    if (frozen.pairs) opt.pairs = *frozen.pairs;
    Evaluation e;
    e.system = std::make_shared<SparseSystem>(assemble_monolithic(mesh, p.kernel, p.forcing, opt));
    e.solver = std::make_shared<LinearSolver>(e.system->A);
    e.u = solve_state(*e.system, *e.solver);
    e.ubar = data.on(mesh);
    e.tracking = tracking_term(mesh, e.u, e.ubar);
    e.perimeter = derive_interface(mesh).total_length();
    return e;
}

inline ShapeDerivativeTerms shape_derivative(const Evaluation& e, const ShapeProblem& p, const DataField& data,
                                             FrozenTruncation frozen = {}) {
    AssemblyOptions opt = p.assembly;
    if (frozen.reference) opt.nonlocal.truncation_reference = frozen.reference;
    const BrokenField v = solve_adjoint(*e.system, *e.solver, e.u, e.ubar);
    return assemble_full_shape_derivative(*e.system, p.kernel, p.forcing, p.nu, e.u, v, e.ubar,
                                          data.gradients_on(e.system->mesh), opt);
}

/// Smooth random vector field evaluated at the vertices whose patch meets
/// the interface (zero elsewhere), scaled to max-norm `amplitude`.
inline VectorField random_interface_field(const LabeledMesh& mesh, std::uint64_t seed, double amplitude = 0.05) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double a[2][3], ph[2][2];
    for (int k = 0; k < 2; ++k) {
        for (double& c : a[k]) c = u(rng);
        for (double& p : ph[k]) p = std::numbers::pi * u(rng);
    }
    const auto keep = interface_patch_mask(mesh);
    VectorField f = VectorField::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (!keep[v]) continue;
        const Vec2& x = mesh.vertex(static_cast<Index>(v));
        for (int k = 0; k < 2; ++k)
            f[2 * v + k] = a[k][0] + a[k][1] * std::sin(2.0 * std::numbers::pi * x.x() + ph[k][0]) +
                           a[k][2] * std::cos(2.0 * std::numbers::pi * x.y() + ph[k][1]);
    }
    const double m = f.cwiseAbs().maxCoeff();
    if (m > 0.0) f *= amplitude / m;
    return f;
}

struct DerivativeCheckRow {
    std::size_t field = 0;
    double t = 0.0;
    double derivative = 0.0;  // sum_i c_i D[V_i]
    double quotient = 0.0;    // (J(t) - J(0)) / t
    double rel_error = 0.0;
};

/// Compares the assembled derivative along each field with forward
/// difference quotients of the reduced objective. The deformed problems keep
/// the interaction pairs and horizon indicator of the reference shape so the
/// discrete objective is differentiable in t.
inline std::vector<DerivativeCheckRow> check_derivative(const LabeledMesh& mesh, const ShapeProblem& p,
                                                        const DataField& data, const std::vector<VectorField>& fields,
                                                        const std::vector<double>& ts) {
    const auto pairs = p.assembly.pairs.empty() ? interaction_pairs(mesh, p.kernel.delta()) : p.assembly.pairs;
    const FrozenTruncation frozen{&mesh, &pairs};
    const Evaluation base = evaluate_shape(mesh, p, data, frozen);
    const double j0 = base.objective(p.nu);
    const VectorField d = shape_derivative(base, p, data, frozen).total;
    std::vector<DerivativeCheckRow> rows;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const double dv = d.dot(fields[i]);
        const auto disp = to_points(fields[i]);
        for (double t : ts) {
            auto moved = deform(mesh, disp, t);
            if (!std::holds_alternative<LabeledMesh>(moved))
                throw Error(ErrorCode::InvalidArgument, "difference step inverts the mesh");
            const double jt = evaluate_shape(std::get<LabeledMesh>(moved), p, data, frozen).objective(p.nu);
            DerivativeCheckRow r{i, t, dv, (jt - j0) / t, 0.0};
            r.rel_error = std::abs(r.derivative - r.quotient) / std::max(std::abs(r.derivative), 1e-300);
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace ltn
