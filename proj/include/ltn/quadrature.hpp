#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "ltn/types.hpp"

namespace ltn {

/// Quadrature rule on the reference triangle in barycentric form. Weights
/// sum to one, so a physical integral is `area * sum(w_q f(x_q))`.
struct TriangleRule {
    std::vector<std::array<double, 3>> points;  // barycentric (l0, l1, l2)
    std::vector<double> weights;
    int degree = 0;

    std::size_t size() const { return weights.size(); }
};

/// Gauss-Legendre nodes and weights on [0, 1].
inline void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    auto legendre = [n](double z, double& p1, double& dp) {
        double p2 = 0.0;
        p1 = 1.0;
        for (int j = 1; j <= n; ++j) {
            const double p3 = p2;
            p2 = p1;
            p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
        }
        dp = n * (z * p1 - p2) / (z * z - 1.0);
    };
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double p1 = 0.0, pp = 1.0;
        for (int it = 0; it < 100; ++it) {
            legendre(z, p1, pp);
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        legendre(z, p1, pp);
        nodes[i] = 0.5 * (1.0 - z);
        weights[i] = 1.0 / ((1.0 - z * z) * pp * pp);
    }
}

/// Conical product rule (Duffy-collapsed Gauss square), exact for total
/// degree <= 2n - 2.
inline TriangleRule collapsed_gauss_rule(int n) {
    std::vector<double> x, w;
    gauss_legendre_01(n, x, w);
    TriangleRule rule;
    rule.degree = 2 * n - 2;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double s = x[i];
            const double t = x[j] * (1.0 - s);
            rule.points.push_back({1.0 - s - t, s, t});
            rule.weights.push_back(2.0 * w[i] * w[j] * (1.0 - s));
        }
    }
    return rule;
}

inline TriangleRule centroid_rule() {
    return {{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, {1.0}, 1};
}

inline TriangleRule three_point_rule() {
    constexpr double a = 2.0 / 3, b = 1.0 / 6;
    return {{{a, b, b}, {b, a, b}, {b, b, a}}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 2};
}

/// Symmetric 7-point rule, exact for degree 5.
inline TriangleRule seven_point_rule() {
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0, a2 = (6.0 + s15) / 21.0;
    const double w1 = (155.0 - s15) / 1200.0, w2 = (155.0 + s15) / 1200.0;
    TriangleRule r;
    r.degree = 5;
    r.points = {{1.0 / 3, 1.0 / 3, 1.0 / 3},
                {1 - 2 * a1, a1, a1}, {a1, 1 - 2 * a1, a1}, {a1, a1, 1 - 2 * a1},
                {1 - 2 * a2, a2, a2}, {a2, 1 - 2 * a2, a2}, {a2, a2, 1 - 2 * a2}};
    r.weights = {9.0 / 40, w1, w1, w1, w2, w2, w2};
    return r;
}

/// Cheapest built-in rule exact for the requested polynomial degree.
inline TriangleRule rule_for_degree(int degree) {
    if (degree <= 1) return centroid_rule();
    if (degree == 2) return three_point_rule();
    if (degree <= 5) return seven_point_rule();
    return collapsed_gauss_rule((degree + 3) / 2);
}

inline Vec2 barycentric_to_point(const std::array<double, 3>& l, const Vec2& a, const Vec2& b,
                                 const Vec2& c) {
    return l[0] * a + l[1] * b + l[2] * c;
}

}  // namespace ltn
