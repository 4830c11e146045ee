#include <gtest/gtest.h>

#include "ltn/quadrature.hpp"
#include "test_util.hpp"

using namespace ltn;

namespace {

double integrate(const TriangleRule& r, int a, int b) {
    double s = 0.0;
    for (std::size_t q = 0; q < r.size(); ++q) {
        const double x = r.points[q][1], y = r.points[q][2];
        s += r.weights[q] * std::pow(x, a) * std::pow(y, b);
    }
    return 0.5 * s;  // reference area
}

void check_exact(const TriangleRule& r) {
    for (int a = 0; a <= r.degree; ++a)
        for (int b = 0; a + b <= r.degree; ++b)
            EXPECT_NEAR(integrate(r, a, b), fixtures::exact_monomial_integral(a, b), 1e-15)
                << "degree " << r.degree << " monomial " << a << "," << b;
}

}  // namespace

TEST(Quadrature, WeightsSumToOne) {
    for (const auto& r : {centroid_rule(), three_point_rule(), seven_point_rule(), collapsed_gauss_rule(6)}) {
        double s = 0.0;
        for (double w : r.weights) s += w;
        EXPECT_NEAR(s, 1.0, 1e-14);
    }
}

TEST(Quadrature, BuiltInRulesAreExact) {
    check_exact(centroid_rule());
    check_exact(three_point_rule());
    check_exact(seven_point_rule());
}

TEST(Quadrature, CollapsedGaussIsExact) {
    for (int n = 1; n <= 7; ++n) check_exact(collapsed_gauss_rule(n));
}

TEST(Quadrature, SevenPointRuleIsNotDegreeSix) {
    const auto r = seven_point_rule();
    double worst = 0.0;
    for (int a = 0; a <= 6; ++a) worst = std::max(worst, std::abs(integrate(r, a, 6 - a) - fixtures::exact_monomial_integral(a, 6 - a)));
    EXPECT_GT(worst, 1e-8);
}

TEST(Quadrature, RuleForDegree) {
    for (int d = 0; d <= 12; ++d) EXPECT_GE(rule_for_degree(d).degree, d);
}
