#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ltn/app.hpp"
#include "test_util.hpp"
#include "vtk_check.hpp"

using namespace ltn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "ltn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = app::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("ltn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        save_msh((dir / "shape.msh").string(), fixtures::circle_mesh(32));
        // Target: shifted circle on a jittered mesh, so the two meshes share no structure.
        meshgen::InterfaceMeshSpec s;
        s.segments = 48;
        s.radius = meshgen::circle_radius(s.center, {0.53, 0.48}, 0.27);
        save_msh((dir / "target.msh").string(), meshgen::jitter_interior(meshgen::interface_mesh(s), 0.1, 17));
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    std::string config(const json& extra, const std::string& name = "run.json") const {
        json j = {{"mesh", "shape.msh"}, {"data_mesh", "target.msh"}, {"output_dir", "out"}};
        if (extra.is_object()) j.merge_patch(extra);
        std::ofstream(dir / name) << j.dump(2);
        return path(name);
    }

    std::vector<std::vector<std::string>> csv(const std::string& name) const {
        std::ifstream in(dir / "out" / name, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return io::parse_csv(s.str());
    }

    BrokenField state(const std::string& file) const {
        const auto f = io::load_field((dir / "out" / file).string());
        const Eigen::Index n = static_cast<Eigen::Index>(f.num_vertices);
        return {f.values.head(n), f.values.tail(n)};
    }
};

}  // namespace

TEST_F(Cli, InfoAndExitCodes) {
    const auto r = run({"info", "-c", config({})});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("interface_loops"), 1);
    EXPECT_GT(j.at("dofs_nonlocal").get<int>(), 0);

    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"info", "-c", config({{"kernel", {{"name", "gauss"}}}})}).code, 2);
    EXPECT_EQ(run({"info", "-c", config({{"mesh", "missing.msh"}})}).code, 2);
    EXPECT_EQ(run({"info", "-c", config({{"surprise", 1}})}).code, 2);
    EXPECT_EQ(run({"info", "-c", config({{"kernel", {{"delta", 0.5}}}})}).code, 2);
    // Without config: built-in geometry, overrides after the subcommand.
    EXPECT_EQ(run({"info", "--kernel", "gamma2"}).code, 0);
}

TEST_F(Cli, GenerateDataZeroForcing) {
    const auto c = config({{"forcing", {{"local", 0}, {"nonlocal", 0}}}});
    ASSERT_EQ(run({"generate-data", "-c", c}).code, 0);
    const auto f = io::load_field(path("out/data.bin"));
    EXPECT_EQ(f.layout, io::FieldLayout::Continuous);
    EXPECT_EQ(f.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(Cli, GenerateDataReloadAndResolve) {
    const auto r = run({"generate-data", "-c", config({})});
    ASSERT_EQ(r.code, 0) << r.err;
    // Reload the stored mesh and state and check them against a fresh assembly.
    const auto m = load_msh(path("out/data_mesh.msh"));
    const auto f = io::load_field(path("out/data_state.bin"));
    io::check_field_mesh(f, m);
    const auto sys = assemble_monolithic(m, gamma1(0.1), Forcing::piecewise_constant(-10.0, 10.0));
    const VectorXd x = state("data_state.bin").to_dofs(sys.dofs);
    EXPECT_LE((sys.A * x - sys.rhs).norm(), 1e-10 * sys.rhs.norm());

    // The continuous data averages the two sides on the interface.
    const auto d = io::load_field(path("out/data.bin"));
    const auto u = state("data_state.bin");
    for (std::size_t v = 0; v < m.num_vertices(); ++v)
        if (m.flags(static_cast<Index>(v)).on_interface)
            EXPECT_NEAR(d.values[v], 0.5 * (u.local[v] + u.nonlocal[v]), 1e-14);

    const auto g = fixtures::read_vtk(path("out/data.vtk"));
    EXPECT_EQ(g.cells.size(), m.num_triangles());
    EXPECT_TRUE(g.point_scalars.count("u") && g.point_scalars.count("ubar"));
}

TEST_F(Cli, SolveMonolithicAgainstSchwarz) {
    const auto c = config({{"data", "out/data.bin"}});
    ASSERT_EQ(run({"generate-data", "-c", c, "-o", path("out")}).code, 0);
    ASSERT_EQ(run({"solve", "-c", c, "-o", path("mono")}).code, 0);
    const auto r = run({"solve", "-c", c, "--method", "multiplicative", "--adjoint"});
    ASSERT_EQ(r.code, 0) << r.err;

    const auto m = load_msh(path("shape.msh"));
    auto load = [&](const std::string& p) {
        const auto f = io::load_field(p);
        const Eigen::Index n = static_cast<Eigen::Index>(f.num_vertices);
        return BrokenField{f.values.head(n), f.values.tail(n)};
    };
    const auto a = load(path("mono/state.bin"));
    const auto b = load(path("out/state.bin"));
    EXPECT_LE(l2_norm(m, difference(a, b)), 1e-8);
    EXPECT_GT(l2_norm(m, a), 1e-3);

    const auto rows = csv("schwarz.csv");
    ASSERT_GT(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"iteration", "residual"}));
    for (std::size_t k = 2; k < rows.size(); ++k) EXPECT_LT(std::stod(rows[k][1]), std::stod(rows[k - 1][1])) << k;

    const auto head = csv("state.csv").front();
    EXPECT_EQ(head.back(), "v_nonlocal");
    const auto g = fixtures::read_vtk(path("out/state.vtk"));
    EXPECT_TRUE(g.point_scalars.count("v"));
    EXPECT_TRUE(json::parse(std::ifstream(dir / "out" / "solve.json")).at("objective").get<double>() > 0.0);
}

TEST_F(Cli, SolveZeroForcing) {
    ASSERT_EQ(run({"solve", "-c", config({{"forcing", {{"local", 0}, {"nonlocal", 0}}}})}).code, 0);
    const auto u = state("state.bin");
    EXPECT_EQ(u.local.norm() + u.nonlocal.norm(), 0.0);
}

TEST_F(Cli, OptimizeMaxiterZero) {
    ASSERT_EQ(run({"optimize", "-c", config({}), "--maxiter", "0"}).code, 0);
    const auto rows = csv("history.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].front(), "iteration");
    EXPECT_TRUE(fs::exists(dir / "out" / "final.msh"));
}

TEST_F(Cli, OptimizeShortRun) {
    const auto r = run({"optimize", "-c", config({{"optimizer", {{"maxiter", 3}}}})});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv("history.csv");
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t k = 2; k < rows.size(); ++k) EXPECT_LE(std::stod(rows[k][1]), std::stod(rows[k - 1][1]));
    for (int k = 0; k < 3; ++k) EXPECT_TRUE(fs::exists(dir / "out" / ("iter_00" + std::to_string(k) + ".vtk")));
    EXPECT_NO_THROW(fixtures::read_vtk(path("out/iter_002.vtk")).point_vectors.at("gradient"));

    // Restart continues the iteration count.
    const auto r2 = run({"optimize", "-c", config({{"optimizer", {{"maxiter", 4}}}}), "--restart",
                         path("out/checkpoint.json"), "-o", path("more")});
    ASSERT_EQ(r2.code, 0) << r2.err;
    std::ifstream in(dir / "more" / "history.csv", std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    const auto more = io::parse_csv(s.str());
    ASSERT_EQ(more.size(), 5u);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(more[k], rows[k]);
}

TEST_F(Cli, OptimizeStepFailureExitCode) {
    const auto r = run({"optimize", "-c", config({{"optimizer", {{"min_alpha", 1e3}, {"maxiter", 2}}}})});
    EXPECT_EQ(r.code, 4) << r.err;
}

TEST_F(Cli, CheckDerivativeBothKernels) {
    for (const char* k : {"gamma1", "gamma2"}) {
        const auto r = run({"check-derivative", "-c", config({{"kernel", {{"name", k}}}, {"check", {{"fields", 3}}}})});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto rows = csv("derivative_check.csv");
        ASSERT_EQ(rows.size(), 1u + 4u * 3u);
        EXPECT_EQ(rows[0].back(), "rel_error");
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i][1] == "away") {
                EXPECT_EQ(std::stod(rows[i][3]), 0.0);  // zeroed derivative
                continue;
            }
            const double t = std::stod(rows[i][2]);
            const double rel = std::stod(rows[i][6]);
            if (t == 1e-5) EXPECT_LE(rel, 1e-2) << k << " field " << rows[i][0];
            if (t != 1e-3) EXPECT_LT(rel, std::stod(rows[i - 1][6])) << k;  // decreasing in t
        }
    }
}
