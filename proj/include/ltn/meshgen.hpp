#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "ltn/mesh.hpp"

namespace ltn::meshgen {

/// O-grid mesh of the unit square with a star-shaped interface around the
/// square's centre, plus an exterior layer. Everything inside the interface
/// is nonlocal, the rest of the square local.
struct InterfaceMeshSpec {
    Vec2 center{0.5, 0.5};
    double half_width = 0.5;  // Omega = center +- half_width
    int segments = 64;        // interface segments, multiple of 8
    /// Interface radius as a function of the polar angle around `center`.
    std::function<double(double)> radius = [](double) { return 0.25; };
    double core_fraction = 0.55;  // core square half-width relative to min radius / sqrt(2)
    int inner_layers = 3;
    int outer_layers = 6;
    int exterior_layers = 2;
    double exterior_width = 0.1;
};

/// Radius function of a circle (centre c, radius r) seen from `origin`.
inline std::function<double(double)> circle_radius(Vec2 origin, Vec2 c, double r) {
    return [origin, c, r](double theta) {
        const Vec2 w(std::cos(theta), std::sin(theta));
        const Vec2 d = c - origin;
        const double b = w.dot(d);
        return b + std::sqrt(b * b - d.squaredNorm() + r * r);
    };
}

namespace detail {
/// Point at normalised perimeter position s in [0, 1) on the square of
/// half-width h, starting at the middle of the right side, counter-clockwise.
inline Vec2 square_perimeter_point(const Vec2& c, double h, double s) {
    double p = std::fmod(s + 0.125, 1.0) * 8.0;  // 0 at the lower right corner
    if (p < 2.0) return c + Vec2(h, -h + h * p);
    if (p < 4.0) return c + Vec2(h - h * (p - 2.0), h);
    if (p < 6.0) return c + Vec2(-h, h - h * (p - 4.0));
    return c + Vec2(-h + h * (p - 6.0), -h);
}
}  // namespace detail

inline LabeledMesh interface_mesh(const InterfaceMeshSpec& spec) {
    const int n = spec.segments;
    if (n < 8 || n % 8 != 0) throw Error(ErrorCode::InvalidArgument, "segments must be a positive multiple of 8");
    const int cells = n / 4;
    std::vector<double> radii(n);
    double rmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        radii[k] = spec.radius(2.0 * std::numbers::pi * k / n);
        rmin = std::min(rmin, radii[k]);
    }
    const double a = spec.core_fraction * rmin / std::sqrt(2.0);
    if (!(a > 0.0) || std::sqrt(2.0) * a >= rmin) throw Error(ErrorCode::InvalidArgument, "bad core size");

    std::vector<Vec2> verts;
    std::vector<Tri> tris;
    std::vector<Label> labels;

    // Core grid.
    const Vec2 lo = spec.center - Vec2(a, a);
    const double hc = 2.0 * a / cells;
    auto grid = [cells](int i, int j) { return static_cast<Index>(j * (cells + 1) + i); };
    for (int j = 0; j <= cells; ++j)
        for (int i = 0; i <= cells; ++i) verts.push_back(lo + Vec2(i * hc, j * hc));
    for (int j = 0; j < cells; ++j) {
        for (int i = 0; i < cells; ++i) {
            const Index v00 = grid(i, j), v10 = grid(i + 1, j), v01 = grid(i, j + 1), v11 = grid(i + 1, j + 1);
            // Diagonals point away from the centre so the pattern is symmetric.
            const bool flip = (2 * i + 1 < cells) == (2 * j + 1 < cells);
            if (flip) {
                tris.push_back({v00, v10, v11});
                tris.push_back({v00, v11, v01});
            } else {
                tris.push_back({v00, v10, v01});
                tris.push_back({v10, v11, v01});
            }
            labels.push_back(Label::Nonlocal);
            labels.push_back(Label::Nonlocal);
        }
    }
    // Core boundary ring in perimeter order starting at the middle of the right side.
    std::vector<Index> ring(n);
    for (int k = 0; k < n; ++k) {
        int p = (k + cells / 2) % n;  // steps from the lower-right corner
        int i, j;
        if (p < cells) i = cells, j = p;
        else if (p < 2 * cells) i = cells - (p - cells), j = cells;
        else if (p < 3 * cells) i = 0, j = cells - (p - 2 * cells);
        else i = p - 3 * cells, j = 0;
        ring[k] = grid(i, j);
    }

    auto connect = [&](const std::vector<Index>& inner, const std::vector<Index>& outer, Label label) {
        for (int k = 0; k < n; ++k) {
            const int k1 = (k + 1) % n;
            const Index a0 = inner[k], a1 = inner[k1], b0 = outer[k], b1 = outer[k1];
            const double d1 = (verts[a0] - verts[b1]).squaredNorm();
            const double d2 = (verts[a1] - verts[b0]).squaredNorm();
            if (d1 <= d2) {
                tris.push_back({a0, a1, b1});
                tris.push_back({a0, b1, b0});
            } else {
                tris.push_back({a0, a1, b0});
                tris.push_back({a1, b1, b0});
            }
            labels.push_back(label);
            labels.push_back(label);
        }
    };
    auto add_ring = [&](auto&& point_of) {
        std::vector<Index> r(n);
        for (int k = 0; k < n; ++k) {
            r[k] = static_cast<Index>(verts.size());
            verts.push_back(point_of(k));
        }
        return r;
    };
    auto layers = [&](std::vector<Index> from, const std::vector<Vec2>& to, int count, Label label) {
        std::vector<Vec2> start(n);
        for (int k = 0; k < n; ++k) start[k] = verts[from[k]];
        for (int l = 1; l <= count; ++l) {
            const double s = static_cast<double>(l) / count;
            auto next = add_ring([&](int k) { return ((1.0 - s) * start[k] + s * to[k]).eval(); });
            connect(from, next, label);
            from = std::move(next);
        }
        return from;
    };

    std::vector<Vec2> interface_pts(n), boundary_pts(n), outer_pts(n);
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * std::numbers::pi * k / n;
        interface_pts[k] = spec.center + radii[k] * Vec2(std::cos(th), std::sin(th));
        boundary_pts[k] = detail::square_perimeter_point(spec.center, spec.half_width, static_cast<double>(k) / n);
        outer_pts[k] = detail::square_perimeter_point(spec.center, spec.half_width + spec.exterior_width,
                                                      static_cast<double>(k) / n);
    }
    auto r1 = layers(ring, interface_pts, spec.inner_layers, Label::Nonlocal);
    auto r2 = layers(r1, boundary_pts, spec.outer_layers, Label::Local);
    if (spec.exterior_layers > 0) layers(r2, outer_pts, spec.exterior_layers, Label::Exterior);
    return LabeledMesh(std::move(verts), std::move(tris), std::move(labels));
}

/// Structured grid on [x0,x1]x[y0,y1] with nx*ny cells split into two
/// triangles each; `label_of(centroid)` labels every triangle.
inline LabeledMesh grid_mesh(int nx, int ny, Vec2 lo, Vec2 hi, const std::function<Label(const Vec2&)>& label_of,
                             double jitter = 0.0, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double hx = (hi.x() - lo.x()) / nx, hy = (hi.y() - lo.y()) / ny;
    std::vector<Vec2> verts;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            Vec2 p = lo + Vec2(i * hx, j * hy);
            if (i > 0 && i < nx && j > 0 && j < ny) p += jitter * Vec2(u(rng) * hx, u(rng) * hy);
            verts.push_back(p);
        }
    }
    std::vector<Tri> tris;
    std::vector<Label> labels;
    auto id = [nx](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Tri t0{id(i, j), id(i + 1, j), id(i + 1, j + 1)};
            const Tri t1{id(i, j), id(i + 1, j + 1), id(i, j + 1)};
            for (const auto& t : {t0, t1}) {
                tris.push_back(t);
                labels.push_back(label_of((verts[t[0]] + verts[t[1]] + verts[t[2]]) / 3.0));
            }
        }
    }
    return LabeledMesh(std::move(verts), std::move(tris), std::move(labels));
}

/// Jittered grid on the unit square with random labels; exterior with the
/// given probability, local and nonlocal equally likely otherwise. Triangle 0
/// is always nonlocal.
inline LabeledMesh random_labeled_mesh(int nx, int ny, std::uint64_t seed, double jitter = 0.3,
                                       double exterior_probability = 1.0 / 3.0) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto pick = [&](const Vec2&) {
        const double r = u(rng);
        if (r < exterior_probability) return Label::Exterior;
        return r < exterior_probability + 0.5 * (1.0 - exterior_probability) ? Label::Local : Label::Nonlocal;
    };
    auto mesh = grid_mesh(nx, ny, {0.0, 0.0}, {1.0, 1.0}, pick, jitter, seed);
    auto labels = mesh.labels();
    labels[0] = Label::Nonlocal;
    return LabeledMesh(mesh.vertices(), mesh.triangles(), labels);
}

/// Uniform red refinement: every triangle split into four.
inline LabeledMesh refine_uniform(const LabeledMesh& mesh) {
    std::vector<Vec2> verts = mesh.vertices();
    std::unordered_map<std::uint64_t, Index> mid;
    auto midpoint = [&](Index a, Index b) {
        const auto key = ltn::detail::edge_key(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        const Index id = static_cast<Index>(verts.size());
        verts.push_back(0.5 * (verts[a] + verts[b]));
        mid.emplace(key, id);
        return id;
    };
    std::vector<Tri> tris;
    std::vector<Label> labels;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& [a, b, c] = mesh.triangle(t);
        const Index ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
        for (const Tri& s : {Tri{a, ab, ca}, Tri{ab, b, bc}, Tri{ca, bc, c}, Tri{ab, bc, ca}}) {
            tris.push_back(s);
            labels.push_back(mesh.label(t));
        }
    }
    return LabeledMesh(std::move(verts), std::move(tris), std::move(labels));
}

/// Moves every interior vertex off the interface by a random offset of at
/// most `fraction` times its shortest incident edge. Used to put a mesh in
/// general position with respect to another mesh of the same family.
inline LabeledMesh jitter_interior(const LabeledMesh& mesh, double fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec2> verts = mesh.vertices();
    for (std::size_t v = 0; v < verts.size(); ++v) {
        const auto& fl = mesh.flags(static_cast<Index>(v));
        const Vec2 d(u(rng), u(rng));
        if (!fl.movable() || fl.on_interface) continue;
        double h = std::numeric_limits<double>::infinity();
        for (Index t : mesh.vertex_triangles(static_cast<Index>(v)))
            for (Index w : mesh.triangle(t))
                if (w != static_cast<Index>(v)) h = std::min(h, (mesh.vertex(w) - verts[v]).norm());
        verts[v] += fraction * h / std::sqrt(2.0) * d;
    }
    return mesh.with_vertices(std::move(verts));
}

}  // namespace ltn::meshgen
