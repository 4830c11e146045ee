#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "ltn/assembly_local.hpp"
#include "ltn/assembly_nonlocal.hpp"

namespace ltn {

struct AssemblyOptions {
    TriangleRule rule = seven_point_rule();  // single integrals
    NonlocalAssemblyOptions nonlocal;
    /// Interaction pairs to use; computed from the mesh when empty.
    std::vector<TrianglePair> pairs;
};

/// Coupled system over the free DOFs together with its ingredients.
struct SparseSystem {
    LabeledMesh mesh;
    DofMap dofs;
    std::vector<TrianglePair> pairs;
    SpMat laplace;
    NonlocalBlocks blocks;
    SpMat A;
    VectorXd rhs;

    Index free_dofs() const { return dofs.size(); }
};

inline SparseSystem assemble_monolithic(const LabeledMesh& mesh, const Kernel& kernel, const Forcing& f,
                                        const AssemblyOptions& opt = {}) {
    SparseSystem s;
    s.mesh = mesh;
    s.dofs = DofMap::build(mesh);
    s.pairs = opt.pairs.empty() ? interaction_pairs(mesh, kernel.delta()) : opt.pairs;
    s.laplace = assemble_laplace(mesh, s.dofs);
    s.blocks = assemble_nonlocal(mesh, kernel, s.pairs, s.dofs, opt.nonlocal);
    s.A = s.laplace + s.blocks.combined();
    s.A.makeCompressed();
    s.rhs = assemble_load(mesh, f, s.dofs, opt.rule);
    return s;
}

/// Sparse LDL^T factorization with a conjugate-gradient fallback.
class LinearSolver {
public:
    explicit LinearSolver(const SpMat& a, double rel_tol = 1e-10) : a_(a), tol_(rel_tol) {
        if (a.rows() == 0) return;
        ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>();
        ldlt_->compute(a);
        if (ldlt_->info() != Eigen::Success) ldlt_.reset();
    }

    const SpMat& matrix() const { return a_; }

    VectorXd solve(const VectorXd& b) const {
        if (b.size() != a_.rows()) throw Error(ErrorCode::InvalidArgument, "right-hand side size mismatch");
        if (a_.rows() == 0) return VectorXd(0);
        const double bn = b.norm();
        if (bn == 0.0) return VectorXd::Zero(b.size());
        if (ldlt_) {
            VectorXd x = ldlt_->solve(b);
            if (ldlt_->info() == Eigen::Success && (a_ * x - b).norm() <= tol_ * bn) return x;
        }
        Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg(a_);
        cg.setTolerance(tol_ * 0.1);
        cg.setMaxIterations(std::max<Eigen::Index>(1000, 10 * a_.rows()));
        VectorXd x = cg.solve(b);
        if (cg.info() != Eigen::Success || !((a_ * x - b).norm() <= tol_ * bn))
            throw Error(ErrorCode::SolverFailure, "linear solve did not reach the requested tolerance");
        return x;
    }

private:
    SpMat a_;
    double tol_;
    std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
};

inline BrokenField solve_state(const SparseSystem& sys, const LinearSolver& solver) {
    return BrokenField::from_dofs(sys.dofs, solver.solve(sys.rhs));
}

inline BrokenField solve_state(const SparseSystem& sys) { return solve_state(sys, LinearSolver(sys.A)); }

/// Right-hand side -int (u - ubar) v of the adjoint equation; ubar is a
/// continuous nodal field on the system mesh.
inline VectorXd adjoint_rhs(const SparseSystem& sys, const BrokenField& u, const VectorXd& ubar) {
    const auto& mesh = sys.mesh;
    if (static_cast<std::size_t>(ubar.size()) != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "data field size mismatch");
    const VectorXd rl = assemble_vertex_mass(mesh, Label::Local) * (u.local - ubar);
    const VectorXd rn = assemble_vertex_mass(mesh, Label::Nonlocal) * (u.nonlocal - ubar);
    VectorXd b = VectorXd::Zero(sys.dofs.size());
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (sys.dofs.local[v] >= 0) b[sys.dofs.local[v]] = -rl[v];
        if (sys.dofs.nonlocal[v] >= 0) b[sys.dofs.nonlocal[v]] = -rn[v];
    }
    return b;
}

inline BrokenField solve_adjoint(const SparseSystem& sys, const LinearSolver& solver, const BrokenField& u,
                                 const VectorXd& ubar) {
    return BrokenField::from_dofs(sys.dofs, solver.solve(adjoint_rhs(sys, u, ubar)));
}

inline BrokenField solve_adjoint(const SparseSystem& sys, const BrokenField& u, const VectorXd& ubar) {
    return solve_adjoint(sys, LinearSolver(sys.A), u, ubar);
}

/// E(u) = 1/2 u^T A u - F^T u.
inline double energy(const VectorXd& x, const SparseSystem& sys) {
    return 0.5 * x.dot(sys.A * x) - sys.rhs.dot(x);
}

inline double energy(const BrokenField& u, const SparseSystem& sys) { return energy(u.to_dofs(sys.dofs), sys); }

/// L2 norm over Omega of a broken field, each side on its own triangles.
inline double l2_norm(const LabeledMesh& mesh, const BrokenField& u) {
    const double l = u.local.dot(assemble_vertex_mass(mesh, Label::Local) * u.local);
    const double n = u.nonlocal.dot(assemble_vertex_mass(mesh, Label::Nonlocal) * u.nonlocal);
    return std::sqrt(std::max(0.0, l + n));
}

inline BrokenField difference(const BrokenField& a, const BrokenField& b) {
    return {a.local - b.local, a.nonlocal - b.nonlocal};
}

struct SchwarzReport {
    std::vector<double> residuals;  // monolithic residual of each iterate, the initial one first
    bool converged = false;
    int iterations = 0;
    double rate = 0.0;       // fitted epsilon of r_k ~ C eps^k
    double r_squared = 0.0;  // of the log-linear fit
};

/// Least-squares fit of log r_k = log C + k log eps over the positive residuals.
inline void fit_geometric_rate(SchwarzReport& rep) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < rep.residuals.size(); ++k)
        if (rep.residuals[k] > 0.0) pts.emplace_back(static_cast<double>(k), std::log(rep.residuals[k]));
    if (pts.size() < 2) {
        rep.rate = 0.0;
        rep.r_squared = 1.0;
        return;
    }
    double mx = 0, my = 0;
    for (auto [x, y] : pts) mx += x, my += y;
    mx /= pts.size();
    my /= pts.size();
    double sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    const double slope = sxy / sxx;
    rep.rate = std::exp(slope);
    rep.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
}

namespace detail {

inline std::pair<BrokenField, SchwarzReport> schwarz(const SparseSystem& sys, const BrokenField& init, double tol,
                                                     int maxiter, bool multiplicative) {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
    const Index nl = sys.dofs.num_local, nn = sys.dofs.num_nonlocal;
    const SpMat a_ll = sys.A.topLeftCorner(nl, nl);
    const SpMat a_nn = sys.A.bottomRightCorner(nn, nn);
    const SpMat a_ln = sys.A.topRightCorner(nl, nn);
    const SpMat a_nl = sys.A.bottomLeftCorner(nn, nl);
    const VectorXd f_l = sys.rhs.head(nl), f_n = sys.rhs.tail(nn);
    const LinearSolver s_l(a_ll, 1e-12), s_n(a_nn, 1e-12);

    VectorXd x = init.to_dofs(sys.dofs);
    SchwarzReport rep;
    for (int k = 1;; ++k) {
        const double r = (sys.rhs - sys.A * x).norm();
        rep.residuals.push_back(r);
        rep.iterations = k;
        if (r <= tol) {
            rep.converged = true;
            break;
        }
        if (k > maxiter) break;
        const VectorXd prev_l = x.head(nl), prev_n = x.tail(nn);
        VectorXd ul = s_l.solve(f_l - a_ln * prev_n);
        const VectorXd& coupling = multiplicative ? ul : prev_l;
        VectorXd un = s_n.solve(f_n - a_nl * coupling);
        x.head(nl) = ul;
        x.tail(nn) = un;
    }
    fit_geometric_rate(rep);
    return {BrokenField::from_dofs(sys.dofs, x), rep};
}

}  // namespace detail

/// Alternating local / nonlocal solves; the nonlocal step uses the fresh
/// local iterate. Stops when the monolithic residual drops below tol.
inline std::pair<BrokenField, SchwarzReport> schwarz_multiplicative(const SparseSystem& sys, const BrokenField& init,
                                                                    double tol, int maxiter) {
    return detail::schwarz(sys, init, tol, maxiter, true);
}

/// Both subproblems use the previous iterate.
inline std::pair<BrokenField, SchwarzReport> schwarz_additive(const SparseSystem& sys, const BrokenField& init,
                                                              double tol, int maxiter) {
    return detail::schwarz(sys, init, tol, maxiter, false);
}

}  // namespace ltn
