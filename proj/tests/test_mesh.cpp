#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "ltn/mesh.hpp"
#include "test_util.hpp"

using namespace ltn;

namespace {

const char* kSingleTriangle = R"($MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 0 1 0
3 1 0 0
$EndNodes
$Elements
1
1 2 2 2 7 1 2 3
$EndElements
)";

template <class F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Msh, SingleTriangleFixture) {
    std::istringstream in(kSingleTriangle);
    const auto mesh = parse_msh(in);
    ASSERT_EQ(mesh.num_triangles(), 1u);
    EXPECT_EQ(mesh.num_vertices(), 3u);
    EXPECT_EQ(mesh.label(0), Label::Nonlocal);
    // Given clockwise, stored counter-clockwise.
    EXPECT_GT(geom::signed_area(mesh.corners(0)[0], mesh.corners(0)[1], mesh.corners(0)[2]), 0.0);
}

TEST(Msh, UnknownPhysicalTag) {
    std::string text = kSingleTriangle;
    text.replace(text.find("1 2 2 2 7"), 9, "1 2 2 9 7");
    std::istringstream in(text);
    EXPECT_EQ(code_of([&] { parse_msh(in); }), ErrorCode::UnknownLabel);
}

TEST(Msh, ParseFailures) {
    std::istringstream empty("");
    EXPECT_EQ(code_of([&] { parse_msh(empty); }), ErrorCode::ParseFailure);
    std::string text = kSingleTriangle;
    text.replace(text.find("2.2 0 8"), 7, "4.1 0 8");
    std::istringstream v4(text);
    EXPECT_EQ(code_of([&] { parse_msh(v4); }), ErrorCode::ParseFailure);
}

TEST(Msh, OnlyExteriorIsEmptySubdomain) {
    std::string text = kSingleTriangle;
    text.replace(text.find("1 2 2 2 7"), 9, "1 2 2 3 7");
    std::istringstream in(text);
    EXPECT_EQ(code_of([&] { parse_msh(in); }), ErrorCode::EmptySubdomain);
}

TEST(Msh, HangingNodeIsRejected) {
    // Vertex 4 lies in the middle of the long edge of triangle 0.
    std::vector<Vec2> v{{0, 0}, {2, 0}, {0, 2}, {1, 0}, {1, -1}};
    EXPECT_EQ(code_of([&] {
                  LabeledMesh(v, {{0, 1, 2}, {0, 4, 3}, {3, 4, 1}}, {Label::Local, Label::Local, Label::Local});
              }),
              ErrorCode::NonConforming);
}

TEST(Msh, GeneratedMeshRoundTripCounts) {
    const auto mesh = fixtures::circle_mesh(32);
    std::stringstream file;
    write_msh(file, mesh);
    const std::string text = file.str();
    // Counts as announced in the section headers of the written file.
    auto header_count = [&](const std::string& section) {
        const auto pos = text.find(section + "\n");
        std::istringstream ss(text.substr(pos + section.size() + 1));
        std::size_t n = 0;
        ss >> n;
        return n;
    };
    const std::size_t nodes = header_count("$Nodes");
    const std::size_t elements = header_count("$Elements");
    const auto back = parse_msh(file);
    EXPECT_EQ(back.num_vertices(), nodes);
    EXPECT_EQ(back.num_triangles(), elements);
    EXPECT_EQ(back.num_triangles(), mesh.num_triangles());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) EXPECT_EQ(back.label(t), mesh.label(t));
}

TEST(Interface, VerticalSplitTouchingBoundaryIsNotClosed) {
    const auto mesh = meshgen::grid_mesh(4, 4, {0, 0}, {1, 1},
                                         [](const Vec2& c) { return c.x() < 0.5 ? Label::Nonlocal : Label::Local; });
    EXPECT_EQ(code_of([&] { derive_interface(mesh); }), ErrorCode::NotClosed);
}

TEST(Interface, NoAdjacencyIsEmpty) {
    const auto mesh = meshgen::grid_mesh(3, 3, {0, 0}, {1, 1}, [](const Vec2&) { return Label::Local; });
    EXPECT_EQ(code_of([&] { derive_interface(mesh); }), ErrorCode::EmptyInterface);
}

TEST(Interface, CircleLength) {
    const auto mesh = fixtures::circle_mesh(128);
    const auto curve = derive_interface(mesh);
    EXPECT_EQ(curve.num_loops(), 1u);
    EXPECT_EQ(curve.edges.size(), 128u);
    const double exact = 128 * 2 * 0.25 * std::sin(std::numbers::pi / 128);
    EXPECT_NEAR(curve.total_length(), exact, 1e-3 * exact);
}

TEST(Interface, NormalsPointIntoLocal) {
    const auto mesh = fixtures::circle_mesh(64);
    const auto curve = derive_interface(mesh);
    for (std::size_t i = 0; i < curve.edges.size(); ++i) {
        const auto& e = curve.edges[i];
        EXPECT_NEAR(e.normal.norm(), 1.0, 1e-14);
        EXPECT_GT(e.normal.dot(mesh.centroid(e.local_triangle) - mesh.centroid(e.nonlocal_triangle)), 0.0);
        // Outward from the disc.
        EXPECT_GT(e.normal.dot(0.5 * (mesh.vertex(e.a) + mesh.vertex(e.b)) - Vec2(0.5, 0.5)), 0.0);
        // Chained.
        const auto& next = curve.edges[(i + 1) % curve.edges.size()];
        EXPECT_EQ(e.b, next.a);
    }
}

TEST(Mesh, VertexFlags) {
    const auto mesh = fixtures::circle_mesh(32);
    std::size_t on_gamma = 0, boundary = 0;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const auto& f = mesh.flags(v);
        on_gamma += f.on_interface;
        boundary += f.on_boundary;
        if (f.on_interface) {
            EXPECT_NEAR((mesh.vertex(v) - Vec2(0.5, 0.5)).norm(), 0.25, 1e-12);
        }
        if (f.on_boundary) {
            const Vec2 p = mesh.vertex(v);
            EXPECT_NEAR(std::max(std::abs(p.x() - 0.5), std::abs(p.y() - 0.5)), 0.5, 1e-12);
        }
    }
    EXPECT_EQ(on_gamma, 32u);
    EXPECT_EQ(boundary, 32u);
    EXPECT_NEAR(mesh.region_area(Label::Local) + mesh.region_area(Label::Nonlocal), 1.0, 1e-12);
}

TEST(Mesh, QualityExamples) {
    const LabeledMesh eq({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}}, {{0, 1, 2}}, {Label::Nonlocal});
    EXPECT_NEAR(mesh_quality(eq).min_angle_deg, 60.0, 1e-12);
    EXPECT_NEAR(mesh_quality(eq).min_shape_ratio, 1.0, 1e-12);
    const LabeledMesh rt({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}, {Label::Nonlocal});
    EXPECT_NEAR(mesh_quality(rt).min_angle_deg, 45.0, 1e-12);
    EXPECT_FALSE(mesh_quality(rt).remesh_recommended());
    // Sliver: apex at height 0.05 over the midpoint of a unit base, base angles atan(0.1).
    const LabeledMesh sl({{0, 0}, {1, 0}, {0.5, 0.05}}, {{0, 1, 2}}, {Label::Nonlocal});
    const double expected = std::atan(0.1) * 180.0 / std::numbers::pi;
    EXPECT_NEAR(mesh_quality(sl).min_angle_deg, expected, 1e-10);
    EXPECT_TRUE(mesh_quality(sl).remesh_recommended());
}

TEST(Mesh, HashChangesWithGeometry) {
    const auto a = fixtures::circle_mesh(16);
    auto v = a.vertices();
    const auto b = a.with_vertices(v);
    EXPECT_EQ(a.hash(), b.hash());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (a.flags(i).movable()) {
            v[i].x() += 1e-9;
            break;
        }
    }
    EXPECT_NE(a.hash(), a.with_vertices(v).hash());
}
