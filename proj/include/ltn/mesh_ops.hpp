#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ltn/geometry.hpp"
#include "ltn/mesh.hpp"
#include "ltn/spatial_index.hpp"

namespace ltn {

using TrianglePair = std::pair<Index, Index>;

/// All (nonlocal triangle, any triangle) pairs at triangle distance < delta,
/// self pairs included, sorted lexicographically.
inline std::vector<TrianglePair> interaction_pairs(const LabeledMesh& mesh, double delta) {
    if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
    SpatialIndex index(mesh, delta);
    std::vector<TrianglePair> pairs;
    for (std::size_t a = 0; a < mesh.num_triangles(); ++a) {
        if (mesh.label(a) != Label::Nonlocal) continue;
        const auto ta = mesh.corners(a);
        for (Index b : index.query_triangle(static_cast<Index>(a), delta)) {
            if (geom::triangle_distance(ta, mesh.corners(b)) < delta)
                pairs.emplace_back(static_cast<Index>(a), b);
        }
    }
    return pairs;
}

struct InvalidityReport {
    std::vector<Index> triangles;  // area ratio below threshold or inverted
    std::vector<Index> vertices;   // interior vertices moved outside Omega
};

inline constexpr double kMinAreaRatio = 1e-3;

using DeformResult = std::variant<LabeledMesh, InvalidityReport>;

/// Moves every vertex by alpha * displacement. The displacement must vanish
/// on all vertices that are not interior to Omega.
inline DeformResult deform(const LabeledMesh& mesh, std::span<const Vec2> displacement, double alpha) {
    if (displacement.size() != mesh.num_vertices())
        throw Error(ErrorCode::InvalidArgument, "displacement size mismatch");
    std::vector<Vec2> moved(mesh.vertices());
    std::vector<Index> moved_ids;
    for (std::size_t v = 0; v < moved.size(); ++v) {
        if (displacement[v].isZero(0.0)) continue;
        if (!mesh.flags(v).movable())
            throw Error(ErrorCode::InvalidArgument, "displacement must vanish on the boundary and exterior");
        moved[v] += alpha * displacement[v];
        moved_ids.push_back(static_cast<Index>(v));
    }
    LabeledMesh out = mesh.with_vertices(std::move(moved));

    InvalidityReport report;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto tt = static_cast<Index>(t);
        if (!(out.area(tt) >= kMinAreaRatio * mesh.area(tt))) report.triangles.push_back(tt);
    }
    if (!moved_ids.empty()) {
        const auto boundary = mesh.boundary_polyline();
        if (!boundary.empty()) {
            for (Index v : moved_ids) {
                if (!geom::point_in_polygon(out.vertex(v), boundary)) report.vertices.push_back(v);
            }
        }
    }
    if (!report.triangles.empty() || !report.vertices.empty()) return report;
    return out;
}

/// Evaluates a continuous P1 field given on a source mesh at arbitrary points.
class P1Interpolator {
public:
    P1Interpolator(LabeledMesh source, VectorXd values, double snap_tolerance = 1e-10)
        : mesh_(std::move(source)), values_(std::move(values)), snap_(snap_tolerance),
          index_(mesh_, std::max(mesh_avg_edge(mesh_), 1e-12)) {
        if (static_cast<std::size_t>(values_.size()) != mesh_.num_vertices())
            throw Error(ErrorCode::InvalidArgument, "field size does not match source mesh");
    }

    const LabeledMesh& mesh() const { return mesh_; }
    const VectorXd& values() const { return values_; }

    /// Triangle used to evaluate at p: containing triangle if any, otherwise
    /// the nearest one. Throws OutOfDomain when farther than max_distance.
    Index locate(const Vec2& p, double max_distance) const {
        Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        double radius = snap_;
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (Index t : index_.query_point(p, radius)) {
                const auto c = mesh_.corners(t);
                const double d = geom::point_triangle_distance(p, c[0], c[1], c[2]);
                if (d < best_d) {
                    best_d = d;
                    best = t;
                    if (d == 0.0) return t;
                }
            }
            if (best >= 0 && best_d <= radius) break;
            if (radius >= max_distance) break;
            radius = std::min(max_distance, std::max(radius * 4.0, index_.cell_size()));
        }
        if (best < 0 || best_d > max_distance)
            throw Error(ErrorCode::OutOfDomain, "point farther than the allowed distance from the source mesh");
        return best;
    }

    double value(const Vec2& p, double max_distance) const {
        const Index t = locate(p, max_distance);
        const auto& tri = mesh_.triangle(t);
        const auto l = geom::barycentric(p, mesh_.vertex(tri[0]), mesh_.vertex(tri[1]), mesh_.vertex(tri[2]));
        return l[0] * values_[tri[0]] + l[1] * values_[tri[1]] + l[2] * values_[tri[2]];
    }

    Vec2 gradient(const Vec2& p, double max_distance) const {
        const Index t = locate(p, max_distance);
        const auto g = mesh_.basis_gradients(t);
        const auto& tri = mesh_.triangle(t);
        return (values_[tri[0]] * g.row(0) + values_[tri[1]] * g.row(1) + values_[tri[2]] * g.row(2)).transpose();
    }

private:
    static double mesh_avg_edge(const LabeledMesh& m) {
        double s = 0.0;
        for (const auto& e : m.edges()) s += (m.vertex(e.a) - m.vertex(e.b)).norm();
        return m.edges().empty() ? 1.0 : 2.0 * s / static_cast<double>(m.edges().size());
    }

    LabeledMesh mesh_;
    VectorXd values_;
    double snap_;
    SpatialIndex index_;
};

/// Nodal values of the source field at every target vertex.
inline VectorXd interpolate(const P1Interpolator& source, const LabeledMesh& target, double max_distance) {
    VectorXd out(target.num_vertices());
    for (std::size_t v = 0; v < target.num_vertices(); ++v) out[v] = source.value(target.vertex(v), max_distance);
    return out;
}

inline VectorXd interpolate(const LabeledMesh& source, const VectorXd& field, const LabeledMesh& target,
                            double max_distance) {
    return interpolate(P1Interpolator(source, field), target, max_distance);
}

}  // namespace ltn
