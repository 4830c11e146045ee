#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ltn/assembly_local.hpp"
#include "ltn/broken_field.hpp"
#include "ltn/kernels.hpp"
#include "ltn/mesh_ops.hpp"

namespace ltn {

struct NonlocalAssemblyOptions {
    TriangleRule rule_x = seven_point_rule();
    TriangleRule rule_y = seven_point_rule();
    /// When set, the horizon indicator is evaluated at the quadrature points
    /// of this mesh (same topology) instead of the assembled one. This keeps
    /// the truncation pattern fixed while the geometry moves.
    const LabeledMesh* truncation_reference = nullptr;
};

/// Double-integral blocks of the coupled form, all indexed by global free
/// DOFs. C holds the nonlocal-row / local-column cross block with positive
/// sign; the form is D + M_cross_nl + M_cross_l - C - C^T + M_absorb.
struct NonlocalBlocks {
    SpMat D, C, M_cross_nl, M_cross_l, M_absorb;

    SpMat combined() const {
        SpMat ct = C.transpose();
        return D + M_cross_nl + M_cross_l - C - ct + M_absorb;
    }
};

namespace detail {

/// Quadrature points and physical weights of every triangle for one rule.
struct PointCache {
    std::vector<Vec2> points;  // triangle-major
    std::vector<double> weights;
    std::size_t per = 0;

    PointCache(const LabeledMesh& mesh, const TriangleRule& rule, bool with_weights) : per(rule.size()) {
        points.resize(mesh.num_triangles() * per);
        if (with_weights) weights.resize(points.size());
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const auto c = mesh.corners(static_cast<Index>(t));
            const double area = with_weights ? mesh.area(static_cast<Index>(t)) : 0.0;
            for (std::size_t q = 0; q < per; ++q) {
                points[t * per + q] = barycentric_to_point(rule.points[q], c[0], c[1], c[2]);
                if (with_weights) weights[t * per + q] = area * rule.weights[q];
            }
        }
    }
    const Vec2& x(Index t, std::size_t q) const { return points[static_cast<std::size_t>(t) * per + q]; }
    double w(Index t, std::size_t q) const { return weights[static_cast<std::size_t>(t) * per + q]; }
};

inline MatrixXd basis_table(const TriangleRule& rule) {
    MatrixXd phi(3, static_cast<Eigen::Index>(rule.size()));
    for (std::size_t q = 0; q < rule.size(); ++q)
        for (int i = 0; i < 3; ++i) phi(i, static_cast<Eigen::Index>(q)) = rule.points[q][i];
    return phi;
}

/// Shared geometry of a pair loop: current points, truncation points and basis tables.
struct PairContext {
    const LabeledMesh& mesh;
    const Kernel& kernel;
    PointCache cur_x, cur_y;
    std::optional<PointCache> ref_x, ref_y;
    MatrixXd phi_x, phi_y;

    PairContext(const LabeledMesh& m, const Kernel& k, const NonlocalAssemblyOptions& opt)
        : mesh(m), kernel(k), cur_x(m, opt.rule_x, true), cur_y(m, opt.rule_y, true),
          phi_x(basis_table(opt.rule_x)), phi_y(basis_table(opt.rule_y)) {
        for (std::size_t t = 0; t < m.num_triangles(); ++t) check_area(m, static_cast<Index>(t));
        if (opt.truncation_reference) {
            if (opt.truncation_reference->num_triangles() != m.num_triangles())
                throw Error(ErrorCode::InvalidArgument, "truncation reference has a different topology");
            ref_x.emplace(*opt.truncation_reference, opt.rule_x, false);
            ref_y.emplace(*opt.truncation_reference, opt.rule_y, false);
        }
    }

    bool inside(Index a, std::size_t q, Index b, std::size_t r) const {
        if (ref_x) return kernel.in_horizon(ref_x->x(a, q), ref_y->x(b, r));
        return kernel.in_horizon(cur_x.x(a, q), cur_y.x(b, r));
    }

    /// G(q, r) = W_q W_r gamma(x_q, y_r) with the truncation indicator applied.
    MatrixXd weights(Index a, Index b) const {
        const std::size_t nq = cur_x.per, nr = cur_y.per;
        MatrixXd g(nq, nr);
        for (std::size_t q = 0; q < nq; ++q) {
            for (std::size_t r = 0; r < nr; ++r) {
                g(q, r) = inside(a, q, b, r)
                              ? cur_x.w(a, q) * cur_y.w(b, r) * kernel.smooth_value(cur_x.x(a, q), cur_y.x(b, r))
                              : 0.0;
            }
        }
        return g;
    }
};

enum Block : int { kD = 0, kC, kCrossNl, kCrossL, kAbsorb, kNumBlocks };

struct BlockTriplet {
    int block;
    Triplet t;
};

inline void scatter_block(int block, const std::array<Index, 3>& rows, const std::array<Index, 3>& cols,
                          const Mat3& m, std::vector<BlockTriplet>& out) {
    for (int i = 0; i < 3; ++i) {
        if (rows[i] < 0) continue;
        for (int j = 0; j < 3; ++j) {
            if (cols[j] < 0 || m(i, j) == 0.0) continue;
            out.push_back({block, Triplet(rows[i], cols[j], m(i, j))});
        }
    }
}

inline std::array<Index, 3> side_dofs(const DofMap& dofs, const LabeledMesh& mesh, Index t, Label side) {
    const auto& tri = mesh.triangle(t);
    return {dofs.dof(side, tri[0]), dofs.dof(side, tri[1]), dofs.dof(side, tri[2])};
}

inline NonlocalBlocks assemble_blocks(const LabeledMesh& mesh, const Kernel& kernel,
                                      const std::vector<TrianglePair>& pairs, const DofMap& dofs,
                                      const NonlocalAssemblyOptions& opt, std::array<bool, 3> partner_enabled) {
    for (const auto& [a, b] : pairs)
        if (mesh.label(a) != Label::Nonlocal) throw Error(ErrorCode::InvalidArgument, "pair must start nonlocal");
    const PairContext ctx(mesh, kernel, opt);
    const auto trips = chunked_collect<BlockTriplet>(pairs.size(), [&](std::size_t begin, std::size_t end,
                                                                       std::vector<BlockTriplet>& out) {
        for (std::size_t p = begin; p < end; ++p) {
            const auto [a, b] = pairs[p];
            const Label lb = mesh.label(b);
            if (!partner_enabled[static_cast<int>(lb)]) continue;
            const MatrixXd g = ctx.weights(a, b);
            if (g.isZero(0.0)) continue;
            const auto da = side_dofs(dofs, mesh, a, Label::Nonlocal);
            const Mat3 mxx = ctx.phi_x * g.rowwise().sum().asDiagonal() * ctx.phi_x.transpose();
            switch (lb) {
            case Label::Nonlocal: {
                const auto db = side_dofs(dofs, mesh, b, Label::Nonlocal);
                const Mat3 myy = ctx.phi_y * g.colwise().sum().transpose().asDiagonal() * ctx.phi_y.transpose();
                const Mat3 mxy = ctx.phi_x * g * ctx.phi_y.transpose();
                scatter_block(kD, da, da, mxx, out);
                scatter_block(kD, db, db, myy, out);
                scatter_block(kD, da, db, -mxy, out);
                scatter_block(kD, db, da, -mxy.transpose(), out);
                break;
            }
            case Label::Local: {
                const auto db = side_dofs(dofs, mesh, b, Label::Local);
                const Mat3 myy = ctx.phi_y * g.colwise().sum().transpose().asDiagonal() * ctx.phi_y.transpose();
                const Mat3 mxy = ctx.phi_x * g * ctx.phi_y.transpose();
                scatter_block(kCrossNl, da, da, mxx, out);
                scatter_block(kCrossL, db, db, myy, out);
                scatter_block(kC, da, db, mxy, out);
                break;
            }
            case Label::Exterior: scatter_block(kAbsorb, da, da, mxx, out); break;
            }
        }
    });
    std::array<std::vector<Triplet>, kNumBlocks> split;
    for (const auto& bt : trips) split[bt.block].push_back(bt.t);
    const auto n = dofs.size();
    return {from_triplets(n, n, split[kD]), from_triplets(n, n, split[kC]), from_triplets(n, n, split[kCrossNl]),
            from_triplets(n, n, split[kCrossL]), from_triplets(n, n, split[kAbsorb])};
}

}  // namespace detail

/// All double-integral blocks in one pass over the interaction pairs.
inline NonlocalBlocks assemble_nonlocal(const LabeledMesh& mesh, const Kernel& kernel,
                                        const std::vector<TrianglePair>& pairs, const DofMap& dofs,
                                        const NonlocalAssemblyOptions& opt = {}) {
    return detail::assemble_blocks(mesh, kernel, pairs, dofs, opt, {true, true, true});
}

/// Nonlocal x nonlocal difference block.
inline SpMat assemble_difference_block(const LabeledMesh& mesh, const Kernel& kernel,
                                       const std::vector<TrianglePair>& pairs, const DofMap& dofs,
                                       const NonlocalAssemblyOptions& opt = {}) {
    // Label order: Local, Nonlocal, Exterior.
    return detail::assemble_blocks(mesh, kernel, pairs, dofs, opt, {false, true, false}).D;
}

struct CrossBlocks {
    SpMat C, M_cross_nl, M_cross_l;
};

inline CrossBlocks assemble_cross_blocks(const LabeledMesh& mesh, const Kernel& kernel,
                                         const std::vector<TrianglePair>& pairs, const DofMap& dofs,
                                         const NonlocalAssemblyOptions& opt = {}) {
    auto b = detail::assemble_blocks(mesh, kernel, pairs, dofs, opt, {true, false, false});
    return {std::move(b.C), std::move(b.M_cross_nl), std::move(b.M_cross_l)};
}

inline SpMat assemble_absorption(const LabeledMesh& mesh, const Kernel& kernel,
                                 const std::vector<TrianglePair>& pairs, const DofMap& dofs,
                                 const NonlocalAssemblyOptions& opt = {}) {
    return detail::assemble_blocks(mesh, kernel, pairs, dofs, opt, {false, false, true}).M_absorb;
}

/// Derivative of the double-integral part of the coupled form A(u, v) along
/// every vector P1 basis field e_k phi_i, with u and v held fixed.
/// Entry 2 i + k. Kernel gradients enter only for kernels with a non-constant
/// smooth part.
inline VectorXd nonlocal_shape_derivative(const LabeledMesh& mesh, const Kernel& kernel, const BrokenField& u,
                                          const BrokenField& v, const std::vector<TrianglePair>& pairs,
                                          const NonlocalAssemblyOptions& opt = {}) {
    const detail::PairContext ctx(mesh, kernel, opt);
    const bool with_grad = kernel.has_gradient();
    using Entry = std::pair<Index, double>;
    const auto entries = detail::chunked_collect<Entry>(pairs.size(), [&](std::size_t begin, std::size_t end,
                                                                          std::vector<Entry>& out) {
        const std::size_t nq = ctx.cur_x.per, nr = ctx.cur_y.per;
        for (std::size_t p = begin; p < end; ++p) {
            const auto [a, b] = pairs[p];
            const Eigen::VectorXd ux = ctx.phi_x.transpose() * u.element_values(mesh, a);
            const Eigen::VectorXd vx = ctx.phi_x.transpose() * v.element_values(mesh, a);
            const Eigen::VectorXd uy = ctx.phi_y.transpose() * u.element_values(mesh, b);
            const Eigen::VectorXd vy = ctx.phi_y.transpose() * v.element_values(mesh, b);
            MatrixXd h(nq, nr);
            double p_sum = 0.0;
            for (std::size_t q = 0; q < nq; ++q) {
                for (std::size_t r = 0; r < nr; ++r) {
                    if (!ctx.inside(a, q, b, r)) {
                        h(q, r) = 0.0;
                        continue;
                    }
                    h(q, r) = ctx.cur_x.w(a, q) * ctx.cur_y.w(b, r) * (ux[q] - uy[r]) * (vx[q] - vy[r]);
                    p_sum += h(q, r) * kernel.smooth_value(ctx.cur_x.x(a, q), ctx.cur_y.x(b, r));
                }
            }
            if (h.isZero(0.0)) continue;
            const auto ga = mesh.basis_gradients(a);
            const auto gb = mesh.basis_gradients(b);
            const auto& ta = mesh.triangle(a);
            const auto& tb = mesh.triangle(b);
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 2; ++k) {
                    out.emplace_back(2 * ta[i] + k, p_sum * ga(i, k));
                    out.emplace_back(2 * tb[i] + k, p_sum * gb(i, k));
                }
            }
            if (!with_grad) continue;
            Eigen::Matrix<double, Eigen::Dynamic, 2> tx = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(nq, 2);
            Eigen::Matrix<double, Eigen::Dynamic, 2> ty = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(nr, 2);
            for (std::size_t q = 0; q < nq; ++q) {
                for (std::size_t r = 0; r < nr; ++r) {
                    if (h(q, r) == 0.0) continue;
                    const Vec2& x = ctx.cur_x.x(a, q);
                    const Vec2& y = ctx.cur_y.x(b, r);
                    tx.row(q) += h(q, r) * kernel.smooth_grad_x(x, y).transpose();
                    ty.row(r) += h(q, r) * kernel.smooth_grad_y(x, y).transpose();
                }
            }
            const Eigen::Matrix<double, 3, 2> cx = ctx.phi_x * tx;
            const Eigen::Matrix<double, 3, 2> cy = ctx.phi_y * ty;
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 2; ++k) {
                    out.emplace_back(2 * ta[i] + k, cx(i, k));
                    out.emplace_back(2 * tb[i] + k, cy(i, k));
                }
            }
        }
    });
    VectorXd d = VectorXd::Zero(2 * static_cast<Eigen::Index>(mesh.num_vertices()));
    for (const auto& [i, val] : entries) d[i] += val;
    return d;
}

}  // namespace ltn
