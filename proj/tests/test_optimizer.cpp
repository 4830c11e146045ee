#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ltn/meshgen.hpp"
#include "ltn/optimizer.hpp"
#include "test_util.hpp"

using namespace ltn;

namespace {

LabeledMesh shifted_circle_mesh(int segments, Vec2 c, double r) {
    meshgen::InterfaceMeshSpec s;
    s.segments = segments;
    s.radius = meshgen::circle_radius(s.center, c, r);
    return meshgen::interface_mesh(s);
}

struct Setup {
    ShapeProblem problem;
    DataField data;
};

Setup make_setup() {
    ShapeProblem p;
    auto data_mesh = meshgen::jitter_interior(shifted_circle_mesh(48, {0.53, 0.48}, 0.27), 0.1, 17);
    DataField d = generate_data(data_mesh, p);
    return {p, d};
}

}  // namespace

TEST(Lbfgs, EmptyMemoryIsSteepestDescent) {
    const LbfgsMemory mem(5);
    const VectorXd g = VectorXd::LinSpaced(7, -1.0, 2.0);
    const auto d = lbfgs_direction(mem, g, euclidean_inner());
    EXPECT_EQ(d.kind, DirectionKind::SteepestDescent);
    EXPECT_EQ((d.field + g).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lbfgs, QuadraticModelConverges) {
    const int n = 10;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> N;
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = N(rng);
    const Eigen::MatrixXd q = b * b.transpose() / n + Eigen::MatrixXd::Identity(n, n);
    VectorXd rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = N(rng);
    auto f = [&](const VectorXd& x) { return 0.5 * x.dot(q * x) - rhs.dot(x); };

    LbfgsMemory mem(n);
    const auto ip = euclidean_inner();
    VectorXd x = VectorXd::Zero(n);
    VectorXd g = q * x - rhs;
    int it = 0;
    while (g.norm() > 1e-8 && it < 2 * n) {
        const auto d = lbfgs_direction(mem, g, ip);
        ASSERT_LT(d.field.dot(g), 0.0);
        const auto r = armijo_backtracking(1.0, f(x), d.field.dot(g), 1e-4, 0.5,
                                           [&](double a) { return std::optional<double>(f(x + a * d.field)); });
        const VectorXd s = r.alpha * d.field;
        x += s;
        const VectorXd gn = q * x - rhs;
        mem.push(s, gn - g, ip);
        g = gn;
        ++it;
    }
    EXPECT_LE(g.norm(), 1e-8);
    EXPECT_LE(it, 2 * n);
}

TEST(Lbfgs, CurvatureSafeguard) {
    LbfgsMemory mem(3);
    const auto ip = euclidean_inner();
    VectorXd s(2), y(2);
    s << 1, 0;
    y << -1, 0.5;
    EXPECT_FALSE(mem.push(s, y, ip));
    EXPECT_TRUE(mem.empty());
    y << 2, 0.5;
    EXPECT_TRUE(mem.push(s, y, ip));
    for (const auto& p : mem.pairs()) EXPECT_GT(ip(p.s, p.y), 0.0);
    VectorXd g(2);
    g << 0.3, -2.0;
    EXPECT_LT(lbfgs_direction(mem, g, ip).field.dot(g), 0.0);
    // A different inner product under which the pair has negative curvature.
    const InnerProduct skew = [](const VectorXd& a, const VectorXd& b) { return a[0] * b[0] - 10 * a[1] * b[1] - 0.0; };
    VectorXd s2(2), y2(2);
    s2 << 0.1, 1.0;
    y2 << 0.1, 1.0;
    EXPECT_FALSE(mem.push(s2, y2, skew));
    mem.push(s2, y2, ip);
    mem.prune(skew);
    for (const auto& p : mem.pairs()) EXPECT_GT(skew(p.s, p.y), 0.0);
}

TEST(LineSearch, AcceptsFirstTrial) {
    const auto r = armijo_backtracking(0.25, 1.0, -1.0, 1e-4, 0.5, [](double a) { return std::optional(1.0 - a); });
    EXPECT_EQ(r.alpha, 0.25);
    EXPECT_EQ(r.trials, 1);
}

TEST(LineSearch, QuadraticSurrogateArmijoInterval) {
    // phi(a) = j0 + s a + k a^2 / 2 satisfies Armijo iff a <= 2 (1 - c) (-s) / k.
    const double j0 = 3.0, s = -2.0, k = 7.0, c = 1e-4, tau = 0.5;
    const double upper = 2.0 * (1.0 - c) * (-s) / k;
    const auto r = armijo_backtracking(
        4.0, j0, s, c, tau, [&](double a) { return std::optional(j0 + s * a + 0.5 * k * a * a); });
    EXPECT_GT(r.alpha, 0.0);
    EXPECT_LE(r.alpha, upper);
    EXPECT_GT(r.alpha / tau, upper);  // the previous trial was rejected
}

TEST(LineSearch, StepFailureBelowMinimum) {
    EXPECT_THROW(armijo_backtracking(1.0, 0.0, -1.0, 1e-4, 0.5, [](double) { return std::optional(1.0); }), Error);
    try {
        armijo_backtracking(1.0, 0.0, -1.0, 1e-4, 0.5, [](double) { return std::optional<double>(); });
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StepFailure);
    }
}

TEST(LineSearch, ShrinksOnInversion) {
    const auto s = make_setup();
    const auto m = fixtures::circle_mesh(32);
    const auto e = evaluate_shape(m, s.problem, s.data);
    const VectorField d = shape_derivative(e, s.problem, s.data).total;
    // Large push of the single vertex with the largest derivative entry.
    Eigen::Index i = 0;
    d.cwiseAbs().maxCoeff(&i);
    VectorField u = VectorField::Zero(d.size());
    u[i] = d[i] > 0 ? -0.2 : 0.2;
    OptConfig cfg;
    cfg.step_fraction = 1e9;  // first trial alpha = 1
    const auto r = line_search(m, u, e.objective(s.problem.nu), u.dot(d), s.problem, s.data, cfg);
    EXPECT_GE(r.trials, 2);
    EXPECT_LT(r.alpha, 1.0);
    EXPECT_TRUE(std::holds_alternative<InvalidityReport>(deform(m, to_points(u), 1.0)));
}

TEST(Optimize, MaxiterZeroGivesEmptyHistory) {
    const auto s = make_setup();
    OptConfig cfg;
    cfg.maxiter = 0;
    const auto st = optimize(fixtures::circle_mesh(32), s.problem, s.data, cfg);
    EXPECT_TRUE(st.history.records.empty());
    EXPECT_EQ(st.history.stop_reason, "maxiter");
}

TEST(Optimize, StationaryStartHasSmallGradient) {
    ShapeProblem p;
    const auto m = fixtures::circle_mesh(32);
    const DataField data = generate_data(m, p);
    OptConfig cfg;
    cfg.maxiter = 1;
    const auto st = optimize(m, p, data, cfg);
    ASSERT_EQ(st.history.records.size(), 1u);
    const double floor = st.history.records[0].gradient_norm;
    const auto s = make_setup();
    const auto off = optimize(m, s.problem, s.data, cfg);
    RecordProperty("stationary_gradient_norm", std::to_string(floor));
    EXPECT_LT(floor, 0.1 * off.history.records[0].gradient_norm);
}

TEST(Optimize, ArmijoHistoryAndDeterminism) {
    const auto s = make_setup();
    OptConfig cfg;
    cfg.maxiter = 4;
    const auto a = optimize(fixtures::circle_mesh(32), s.problem, s.data, cfg);
    const auto& r = a.history.records;
    ASSERT_EQ(r.size(), 4u);
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
        EXPECT_LT(r[k].slope, 0.0);
        EXPECT_LE(r[k + 1].objective, r[k].objective + cfg.c * r[k].alpha * r[k].slope);
    }
    EXPECT_LT(r.back().objective, r.front().objective);
    EXPECT_EQ(r[1].direction, DirectionKind::Lbfgs);

    const auto b = optimize(fixtures::circle_mesh(32), s.problem, s.data, cfg);
    EXPECT_EQ(to_json(a.history).dump(), to_json(b.history).dump());
    EXPECT_EQ(a.mesh.vertices(), b.mesh.vertices());
}

TEST(Checkpoint, RestartOnSameMeshReproducesNextIterate) {
    const auto s = make_setup();
    OptConfig cfg;
    cfg.maxiter = 2;
    OptState st = optimize(fixtures::circle_mesh(32), s.problem, s.data, cfg);
    const auto path = std::filesystem::temp_directory_path() / "ltn_checkpoint_test.json";
    save_checkpoint(path.string(), st);
    const OptState loaded = load_checkpoint(path.string());
    EXPECT_EQ(checkpoint_json(loaded).dump(), checkpoint_json(st).dump());

    OptState resumed = restart(loaded, loaded.mesh);
    cfg.maxiter = 3;
    optimize(st, s.problem, s.data, cfg);
    optimize(resumed, s.problem, s.data, cfg);
    EXPECT_EQ(st.mesh.vertices(), resumed.mesh.vertices());
    EXPECT_EQ(to_json(st.history).dump(), to_json(resumed.history).dump());
    std::filesystem::remove(path);
}

TEST(Checkpoint, RestartOnRefinedMesh) {
    OptState st;
    st.mesh = fixtures::circle_mesh(32);
    VectorXd a = VectorXd::Ones(2 * static_cast<Eigen::Index>(st.mesh.num_vertices()));
    st.memory.push(a, a, euclidean_inner());
    st.last_step = a;
    st.last_gradient = a;
    const auto r = restart(st, meshgen::refine_uniform(st.mesh));
    EXPECT_TRUE(r.memory.empty());
    EXPECT_FALSE(r.last_step.has_value());
    EXPECT_EQ(r.mesh.num_triangles(), 4 * st.mesh.num_triangles());
}

TEST(Checkpoint, DifferentCircleIsRejected) {
    OptState st;
    st.mesh = fixtures::circle_mesh(32);
    try {
        restart(st, shifted_circle_mesh(64, {0.5, 0.5}, 0.4));
        FAIL() << "expected InterfaceMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InterfaceMismatch);
    }
}

TEST(Checkpoint, CorruptFileIsParseFailure) {
    const auto path = std::filesystem::temp_directory_path() / "ltn_bad_checkpoint.json";
    std::ofstream(path) << "{\"version\": 1, \"mesh\": ";
    try {
        load_checkpoint(path.string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseFailure);
    }
    std::filesystem::remove(path);
}

TEST(OptConfig, Validation) {
    OptConfig c;
    EXPECT_NO_THROW(c.validate());
    c.tau = 1.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.mu_max = 0.0;
    EXPECT_THROW(c.validate(), Error);
}
