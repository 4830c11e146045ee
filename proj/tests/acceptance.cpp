// Acceptance run: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "ltn/ltn.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace ltn;
using fixtures::rel_diff;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(3) << v;
    return s.str();
}

MatrixXd dense(const SpMat& m) { return MatrixXd(m); }

VectorXd random_vector(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    VectorXd v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

const Forcing kForcing = Forcing::piecewise_constant(-10.0, 10.0);

// Unit square, circle of radius 0.25 nonlocal, gamma1 with delta 0.1.
const SparseSystem& desk_system() {
    static const SparseSystem sys = assemble_monolithic(fixtures::circle_mesh(64), gamma1(0.1), kForcing);
    return sys;
}

Outcome c1_assembly_oracle() {
    double worst = 0.0;
    std::size_t max_tris = 0;
    int meshes = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto m = meshgen::random_labeled_mesh(3, 5, seed);
        max_tris = std::max(max_tris, m.num_triangles());
        ++meshes;
        for (bool constrained : {true, false}) {
            const auto dofs = DofMap::build(m, constrained);
            for (const auto& k : {gamma1(0.3), gamma2(0.3)}) {
                const auto b = assemble_nonlocal(m, k, interaction_pairs(m, k.delta()), dofs);
                const auto o = fixtures::dense_blocks(m, k, dofs, seven_point_rule());
                for (double e : {rel_diff(dense(b.D), o.D), rel_diff(dense(b.C), o.C),
                                 rel_diff(dense(b.M_cross_nl), o.cross_nl), rel_diff(dense(b.M_cross_l), o.cross_l),
                                 rel_diff(dense(b.M_absorb), o.absorb)})
                    worst = std::max(worst, e);
            }
        }
    }
    return {worst <= 1e-8 && max_tris <= 30 && meshes >= 10,
            std::to_string(meshes) + " meshes, <= " + std::to_string(max_tris) + " triangles, max rel diff " +
                fmt(worst)};
}

Outcome c2_structure() {
    double asym = 0.0, min_eig = std::numeric_limits<double>::infinity(), constants = 0.0;
    Index max_dofs = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto m = meshgen::random_labeled_mesh(8, 8, seed, 0.3, 0.1);
        const auto k = seed % 2 ? gamma1(0.3) : gamma2(0.3);
        const auto sys = assemble_monolithic(m, k, kForcing);
        max_dofs = std::max(max_dofs, sys.free_dofs());
        const MatrixXd a = dense(sys.A);
        asym = std::max(asym, rel_diff(a, a.transpose()));
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff());

        const auto all = DofMap::build(m, false);
        const MatrixXd d = dense(assemble_difference_block(m, k, interaction_pairs(m, 0.3), all));
        VectorXd ones = VectorXd::Zero(all.size());
        ones.tail(all.num_nonlocal).setOnes();
        constants = std::max(constants, (d * ones).cwiseAbs().maxCoeff() / d.cwiseAbs().maxCoeff());
    }
    return {asym <= 1e-12 && min_eig > 0.0 && max_dofs <= 400 && constants <= 1e-12,
            "asymmetry " + fmt(asym) + ", min eigenvalue / max " + fmt(min_eig) + " (<= " +
                std::to_string(max_dofs) + " dofs), |D 1| / scale " + fmt(constants)};
}

Outcome c3_schwarz() {
    const auto& sys = desk_system();
    const auto exact = solve_state(sys);
    const auto [u, rep] = schwarz_multiplicative(sys, BrokenField::zeros(sys.mesh.num_vertices()), 1e-11, 1000);
    // Independent least-squares fit of log r_k against k.
    double sk = 0, sl = 0, skk = 0, skl = 0, sll = 0;
    int n = 0;
    for (std::size_t k = 0; k < rep.residuals.size(); ++k) {
        if (!(rep.residuals[k] > 0.0)) continue;
        const double l = std::log(rep.residuals[k]);
        sk += k, sl += l, skk += double(k) * k, skl += k * l, sll += l * l;
        ++n;
    }
    const double cov = skl - sk * sl / n, vk = skk - sk * sk / n, vl = sll - sl * sl / n;
    const double eps = std::exp(cov / vk);
    const double r2 = cov * cov / (vk * vl);
    const double diff = l2_norm(sys.mesh, difference(u, exact));
    return {rep.converged && eps < 1.0 && r2 >= 0.98 && diff <= 1e-8,
            std::to_string(sys.mesh.num_triangles()) + " triangles, " + std::to_string(rep.iterations) +
                " iterations, eps " + fmt(eps) + ", R^2 " + fmt(r2) + ", L2 diff " + fmt(diff)};
}

Outcome c4_energy() {
    const auto& sys = desk_system();
    const VectorXd x = solve_state(sys).to_dofs(sys.dofs);
    auto e = [&](const VectorXd& y) { return 0.5 * y.dot(sys.A * y) - sys.rhs.dot(y); };
    const double e0 = e(x);
    int strict = 0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
        const VectorXd w = random_vector(x.size(), 100 + i) * std::pow(10.0, -(i % 6));
        if (e(x + w) > e0) ++strict;
        min_gap = std::min(min_gap, 0.5 * w.dot(sys.A * w));
    }
    return {strict == 100 && min_gap > 0.0,
            std::to_string(strict) + "/100 perturbations increase the energy, min w^T A w / 2 = " + fmt(min_gap)};
}

LabeledMesh jittered_target(int segments) {
    meshgen::InterfaceMeshSpec s;
    s.segments = segments;
    s.radius = meshgen::circle_radius(s.center, {0.53, 0.48}, 0.27);
    return meshgen::jitter_interior(meshgen::interface_mesh(s), 0.1, 17);
}

Outcome c5_shape_derivative() {
    const auto m = fixtures::circle_mesh(64);
    const std::vector<double> ts{1e-3, 1e-4, 1e-5};
    double worst = 0.0, worst_ratio = std::numeric_limits<double>::infinity();
    bool decreasing = true;
    int fields_checked = 0;
    for (const Kernel& k : {gamma1(0.1), gamma2(0.1)}) {
        ShapeProblem p;
        p.kernel = k;
        const DataField data = generate_data(jittered_target(96), p);
        std::vector<VectorField> fields;
        for (std::uint64_t s = 0; s < 5; ++s) fields.push_back(random_interface_field(m, 200 + s, 0.05));
        const auto rows = check_derivative(m, p, data, fields, ts);
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const auto* r = &rows[3 * i];
            worst = std::max(worst, r[2].rel_error);
            decreasing = decreasing && r[1].rel_error < r[0].rel_error && r[2].rel_error < r[1].rel_error;
            worst_ratio = std::min(worst_ratio, r[0].rel_error / r[2].rel_error);
            ++fields_checked;
        }
    }
    // First order: two decades of t should buy well over one decade of error.
    return {worst <= 1e-2 && decreasing && worst_ratio >= 10.0 && fields_checked >= 10,
            std::to_string(fields_checked / 2) + " fields x 2 kernels, max rel error at t=1e-5 " + fmt(worst) +
                ", min error(1e-3)/error(1e-5) " + fmt(worst_ratio)};
}

Outcome c6_perimeter() {
    const auto m = fixtures::circle_mesh(128);
    const double nu = 1e-3;
    const VectorField d = shape_derivative_perimeter(m, derive_interface(m), nu);
    VectorField v(2 * static_cast<Eigen::Index>(m.num_vertices()));
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        const Vec2 x = m.vertex(static_cast<Index>(i)) - Vec2(0.5, 0.5);
        v[2 * i] = x.x();
        v[2 * i + 1] = x.y();
    }
    const double exact = nu * 2.0 * std::numbers::pi * 0.25;
    const double got = d.dot(v);
    return {std::abs(got - exact) <= 0.02 * exact,
            "dPer[x - c] = " + fmt(got) + ", nu 2 pi r = " + fmt(exact) + ", rel " + fmt(std::abs(got / exact - 1))};
}

Outcome c7_mu() {
    const auto m = fixtures::circle_mesh(64);
    const VectorXd mu = solve_mu(m, 0.0, 1.0);
    bool ok = true;
    int on_gamma = 0, on_boundary = 0;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
        const auto& fl = m.flags(static_cast<Index>(v));
        if (!fl.in_omega()) continue;
        ok = ok && mu[v] >= 0.0 && mu[v] <= 1.0;
        if (fl.on_interface) ok = ok && mu[v] == 1.0, ++on_gamma;
        else if (fl.on_boundary) ok = ok && mu[v] == 0.0, ++on_boundary;
    }
    return {ok && on_gamma > 0 && on_boundary > 0,
            "mu in [" + fmt(mu.minCoeff()) + ", " + fmt(mu.maxCoeff()) + "], exact on " + std::to_string(on_gamma) +
                " interface and " + std::to_string(on_boundary) + " boundary vertices"};
}

Outcome c8_riesz() {
    const auto m = fixtures::circle_mesh(64);
    ShapeProblem p;
    const DataField data = generate_data(jittered_target(96), p);
    const auto e = evaluate_shape(m, p, data);
    const VectorField d = shape_derivative(e, p, data).total;
    const VectorXd mu = solve_mu(m, 0.0, 1.0);
    const VectorField g = riesz_gradient(d, m, mu);

    // Assemble b(., .) independently, element by element, and test with every
    // basis field V_i = phi_v e_k of the movable vertices.
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
        if (!m.in_omega(static_cast<Index>(t))) continue;
        const auto& tri = m.triangle(t);
        const Vec2 p0 = m.vertex(tri[0]), p1 = m.vertex(tri[1]), p2 = m.vertex(tri[2]);
        const double area = 0.5 * ((p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y());
        Vec2 grad[3];
        for (int i = 0; i < 3; ++i) {
            const Vec2 a = m.vertex(tri[(i + 1) % 3]), c = m.vertex(tri[(i + 2) % 3]);
            grad[i] = Vec2(a.y() - c.y(), c.x() - a.x()) / (2.0 * area);
        }
        const double mu_t = (mu[tri[0]] + mu[tri[1]] + mu[tri[2]]) / 3.0;
        // mu (eps(U) : eps(V)) * 2 with U = phi_i e_k, V = phi_j e_l.
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l) {
                        Eigen::Matrix2d gu = Eigen::Matrix2d::Zero(), gv = Eigen::Matrix2d::Zero();
                        gu.row(k) = grad[i].transpose();
                        gv.row(l) = grad[j].transpose();
                        const Eigen::Matrix2d eu = 0.5 * (gu + gu.transpose()), ev = 0.5 * (gv + gv.transpose());
                        entries.emplace_back(2 * tri[i] + k, 2 * tri[j] + l,
                                             2.0 * mu_t * area * eu.cwiseProduct(ev).sum());
                    }
    }
    SpMat b(d.size(), d.size());
    b.setFromTriplets(entries.begin(), entries.end());
    const VectorXd bg = b * g;
    double res = 0.0, scale = 0.0;
    int tested = 0;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
        if (!m.flags(static_cast<Index>(v)).movable()) continue;
        for (int k = 0; k < 2; ++k) {
            res = std::max(res, std::abs(bg[2 * v + k] - d[2 * v + k]));
            scale = std::max(scale, std::abs(d[2 * v + k]));
            ++tested;
        }
    }
    return {res <= 1e-10 && res <= 1e-10 * scale,
            std::to_string(tested) + " basis fields, max |b(grad J, V_i) - D[V_i]| " + fmt(res) + " (max |D[V_i]| " +
                fmt(scale) + ")"};
}

double mean_radial_deviation(const LabeledMesh& m, Vec2 c, double r, double* mean_edge) {
    const auto curve = derive_interface(m);
    double dev = 0.0;
    for (const auto& e : curve.edges) dev += std::abs((m.vertex(e.a) - c).norm() - r);
    *mean_edge = curve.total_length() / static_cast<double>(curve.edges.size());
    return dev / static_cast<double>(curve.edges.size());
}

Outcome c9_circle_recovery() {
    ShapeProblem p;  // nu = 1e-3
    const DataField data = generate_data(fixtures::circle_mesh(64), p);
    meshgen::InterfaceMeshSpec s;
    s.segments = 64;
    s.radius = meshgen::circle_radius(s.center, {0.53, 0.5}, 0.2);
    const auto start = meshgen::interface_mesh(s);
    OptConfig cfg;  // tol 5e-5, maxiter 25
    double h0 = 0.0;
    const double dev0 = mean_radial_deviation(start, {0.5, 0.5}, 0.25, &h0);
    const auto st = optimize(start, p, data, cfg);
    const auto& r = st.history.records;
    bool monotone = true;
    for (std::size_t k = 1; k < r.size(); ++k) monotone = monotone && r[k].objective <= r[k - 1].objective;
    double h = 0.0;
    const double dev = mean_radial_deviation(st.mesh, {0.5, 0.5}, 0.25, &h);
    return {!st.history.step_failure && r.size() <= 25 && monotone && dev <= 2.0 * h,
            std::to_string(r.size()) + " iterations (" + st.history.stop_reason + "), J " +
                fmt(r.empty() ? 0.0 : r.front().objective) + " -> " + fmt(r.empty() ? 0.0 : r.back().objective) +
                (monotone ? " monotone" : " NOT monotone") + ", radial deviation " + fmt(dev0) + " -> " + fmt(dev) +
                " vs 2h = " + fmt(2.0 * h)};
}

Outcome c10_kernels() {
    bool ok = true;
    for (const auto& k : {gamma1(0.1), gamma2(0.1)}) ok = ok && validate_kernel(k, 1000).all_pass();
    // Independent check of the gamma2 gradient against central differences.
    const auto k = gamma2(0.1);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec2 x(u(rng), u(rng));
        const double rr = 0.9 * k.delta() * std::sqrt(u(rng)), th = 2.0 * std::numbers::pi * u(rng);
        const Vec2 y = x + rr * Vec2(std::cos(th), std::sin(th));
        const double h = 1e-6 * k.delta();
        Vec2 fd;
        for (int c = 0; c < 2; ++c) {
            Vec2 e = Vec2::Zero();
            e[c] = h;
            fd[c] = (k.value(x + e, y) - k.value(x - e, y)) / (2.0 * h);
        }
        const Vec2 g = k.smooth_grad_x(x, y);
        const double floor = 1e-9 * k.upper_bound() / k.delta();
        worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), floor));
    }
    return {ok && worst <= 1e-5, "K1-K4 sampled at 1000 pairs for gamma1 and gamma2: " +
                                     std::string(ok ? "pass" : "FAIL") + "; gamma2 gradient max rel error " +
                                     fmt(worst)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"assembly oracle equivalence", c1_assembly_oracle},
        {"structural invariants", c2_structure},
        {"Schwarz geometric convergence", c3_schwarz},
        {"energy minimality", c4_energy},
        {"shape derivative vs difference quotients", c5_shape_derivative},
        {"perimeter derivative on a circle", c6_perimeter},
        {"mu bounds", c7_mu},
        {"Riesz consistency", c8_riesz},
        {"circle recovery", c9_circle_recovery},
        {"kernel validation", c10_kernels}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  C" << i + 1 << " " << criteria[i].first << ": " << o.detail
                  << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << "/" << criteria.size() << "\n";
    return failed ? 1 : 0;
}
