#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

#include "ltn/types.hpp"

namespace ltn::geom {

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * cross2(b - a, c - a);
}

/// Barycentric coordinates of p with respect to (a, b, c).
inline std::array<double, 3> barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double area2 = cross2(b - a, c - a);
    const double l1 = cross2(p - a, c - a) / area2;
    const double l2 = cross2(b - a, p - a) / area2;
    return {1.0 - l1 - l2, l1, l2};
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

inline int orientation_sign(const Vec2& a, const Vec2& b, const Vec2& c) {
    const double v = cross2(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
}

inline bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

/// Closed-segment intersection test, collinear overlaps included.
inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const int o1 = orientation_sign(p1, p2, q1);
    const int o2 = orientation_sign(p1, p2, q2);
    const int o3 = orientation_sign(q1, q2, p1);
    const int o4 = orientation_sign(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

inline double segment_segment_distance(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    if (segments_intersect(p1, p2, q1, q2)) return 0.0;
    return std::min({point_segment_distance(p1, q1, q2), point_segment_distance(p2, q1, q2),
                     point_segment_distance(q1, p1, p2), point_segment_distance(q2, p1, p2)});
}

/// Closed-triangle containment, orientation agnostic.
inline bool point_in_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double d1 = cross2(b - a, p - a);
    const double d2 = cross2(c - b, p - b);
    const double d3 = cross2(a - c, p - c);
    const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(has_neg && has_pos);
}

inline double point_triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    if (point_in_triangle(p, a, b, c)) return 0.0;
    return std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                     point_segment_distance(p, c, a)});
}

using Triangle = std::array<Vec2, 3>;

/// Euclidean distance between two closed triangles.
inline double triangle_distance(const Triangle& s, const Triangle& t) {
    if (point_in_triangle(s[0], t[0], t[1], t[2]) || point_in_triangle(t[0], s[0], s[1], s[2]))
        return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            best = std::min(best, segment_segment_distance(s[i], s[(i + 1) % 3], t[j], t[(j + 1) % 3]));
            if (best == 0.0) return 0.0;
        }
    }
    return best;
}

/// Even-odd point-in-polygon against an arbitrary edge soup.
inline bool point_in_polygon(const Vec2& p, std::span<const std::pair<Vec2, Vec2>> edges) {
    bool inside = false;
    for (const auto& [a, b] : edges) {
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
            if (p.x() < x) inside = !inside;
        }
    }
    return inside;
}

/// Interior angles in degrees.
inline std::array<double, 3> triangle_angles(const Vec2& a, const Vec2& b, const Vec2& c) {
    auto angle = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        const Vec2 u = q - p, v = r - p;
        return std::atan2(std::abs(cross2(u, v)), u.dot(v)) * 180.0 / std::numbers::pi;
    };
    return {angle(a, b, c), angle(b, c, a), angle(c, a, b)};
}

}  // namespace ltn::geom
