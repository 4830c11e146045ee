#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ltn/mesh.hpp"

namespace ltn {

/// Uniform background grid over triangle bounding boxes. Queries return a
/// superset of the triangles meeting the query box.
class SpatialIndex {
public:
    SpatialIndex(const LabeledMesh& mesh, double cell_size) : cell_(cell_size) {
        if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "cell size must be positive");
        lo_ = Vec2::Constant(std::numeric_limits<double>::infinity());
        Vec2 hi = -lo_;
        for (const auto& v : mesh.vertices()) {
            lo_ = lo_.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        nx_ = std::max<Index>(1, static_cast<Index>(std::ceil((hi.x() - lo_.x()) / cell_)) + 1);
        ny_ = std::max<Index>(1, static_cast<Index>(std::ceil((hi.y() - lo_.y()) / cell_)) + 1);
        cells_.assign(static_cast<std::size_t>(nx_ * ny_), {});
        boxes_.reserve(mesh.num_triangles());
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const auto c = mesh.corners(static_cast<Index>(t));
            Box b{c[0].cwiseMin(c[1]).cwiseMin(c[2]), c[0].cwiseMax(c[1]).cwiseMax(c[2])};
            boxes_.push_back(b);
            for_cells(b.lo, b.hi, [&](std::size_t cell) { cells_[cell].push_back(static_cast<Index>(t)); });
        }
        stamp_.assign(mesh.num_triangles(), 0);
    }

    double cell_size() const { return cell_; }

    /// Triangles whose bounding box meets [lo - r, hi + r]. Not thread safe
    /// (uses an internal stamp buffer); copy the index per worker.
    std::vector<Index> query_box(const Vec2& lo, const Vec2& hi, double r = 0.0) const {
        std::vector<Index> out;
        ++epoch_;
        const Vec2 qlo = lo - Vec2::Constant(r), qhi = hi + Vec2::Constant(r);
        for_cells(qlo, qhi, [&](std::size_t cell) {
            for (Index t : cells_[cell]) {
                if (stamp_[t] == epoch_) continue;
                stamp_[t] = epoch_;
                const Box& b = boxes_[t];
                if (b.hi.x() < qlo.x() || b.lo.x() > qhi.x() || b.hi.y() < qlo.y() || b.lo.y() > qhi.y()) continue;
                out.push_back(t);
            }
        });
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Candidates within distance r of triangle t (superset).
    std::vector<Index> query_triangle(Index t, double r) const { return query_box(boxes_[t].lo, boxes_[t].hi, r); }

    std::vector<Index> query_point(const Vec2& p, double r = 0.0) const { return query_box(p, p, r); }

private:
    struct Box {
        Vec2 lo, hi;
    };

    template <class F>
    void for_cells(const Vec2& lo, const Vec2& hi, F&& f) const {
        auto clampi = [](Index v, Index n) { return std::clamp<Index>(v, 0, n - 1); };
        const Index i0 = clampi(static_cast<Index>(std::floor((lo.x() - lo_.x()) / cell_)), nx_);
        const Index i1 = clampi(static_cast<Index>(std::floor((hi.x() - lo_.x()) / cell_)), nx_);
        const Index j0 = clampi(static_cast<Index>(std::floor((lo.y() - lo_.y()) / cell_)), ny_);
        const Index j1 = clampi(static_cast<Index>(std::floor((hi.y() - lo_.y()) / cell_)), ny_);
        for (Index j = j0; j <= j1; ++j)
            for (Index i = i0; i <= i1; ++i) f(static_cast<std::size_t>(j * nx_ + i));
    }

    double cell_;
    Vec2 lo_;
    Index nx_ = 1, ny_ = 1;
    std::vector<std::vector<Index>> cells_;
    std::vector<Box> boxes_;
    mutable std::vector<std::uint32_t> stamp_;
    mutable std::uint32_t epoch_ = 0;
};

}  // namespace ltn
