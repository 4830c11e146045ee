#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltn/geometry.hpp"
#include "ltn/types.hpp"

namespace ltn {

using Tri = std::array<Index, 3>;

namespace detail {
inline std::uint64_t edge_key(Index a, Index b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}
}  // namespace detail

/// Two triangles sharing an edge, or one triangle and -1 on the mesh hull.
struct EdgeInfo {
    Index a = -1, b = -1;
    Index t0 = -1, t1 = -1;
};

struct VertexFlags {
    bool in_local = false;
    bool in_nonlocal = false;
    bool in_exterior = false;
    bool on_boundary = false;   // on the boundary of Omega = local U nonlocal
    bool on_interface = false;  // shared by a local and a nonlocal triangle

    bool in_omega() const { return in_local || in_nonlocal; }
    /// Interior vertex of Omega; only these may move under a deformation.
    bool movable() const { return in_omega() && !on_boundary; }
};

/// Connectivity and labels shared by all geometric instances of a mesh.
struct MeshTopology {
    std::vector<Tri> triangles;
    std::vector<Label> labels;
    std::vector<EdgeInfo> edges;
    std::vector<VertexFlags> flags;
    std::vector<std::vector<Index>> vertex_triangles;
    std::vector<std::pair<Index, Index>> boundary_edges;  // edges of the boundary of Omega
    std::size_t num_vertices = 0;
};

/// Triangle mesh with local / nonlocal / exterior labels. Immutable: a
/// deformation creates a new mesh that shares the topology.
class LabeledMesh {
public:
    LabeledMesh() = default;

    /// Validates and orients triangles counter-clockwise. Throws on zero area,
    /// non-manifold edges or hanging nodes.
    LabeledMesh(std::vector<Vec2> vertices, std::vector<Tri> triangles, std::vector<Label> labels)
        : vertices_(std::move(vertices)) {
        if (triangles.size() != labels.size())
            throw Error(ErrorCode::InvalidArgument, "triangle and label counts differ");
        auto topo = std::make_shared<MeshTopology>();
        topo->num_vertices = vertices_.size();
        for (auto& t : triangles) {
            for (Index v : t) {
                if (v < 0 || static_cast<std::size_t>(v) >= vertices_.size())
                    throw Error(ErrorCode::InvalidArgument, "triangle references missing vertex");
            }
            const double area = geom::signed_area(vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
            if (area == 0.0 || !std::isfinite(area))
                throw Error(ErrorCode::DegenerateTriangle, "triangle with zero area");
            if (area < 0.0) std::swap(t[1], t[2]);
        }
        topo->triangles = std::move(triangles);
        topo->labels = std::move(labels);
        build_topology(*topo);
        topo_ = std::move(topo);
        check_conforming();
    }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_triangles() const { return topo_ ? topo_->triangles.size() : 0; }

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const Vec2& vertex(Index i) const { return vertices_[i]; }
    const std::vector<Tri>& triangles() const { return topo_->triangles; }
    const Tri& triangle(Index t) const { return topo_->triangles[t]; }
    Label label(Index t) const { return topo_->labels[t]; }
    const std::vector<Label>& labels() const { return topo_->labels; }
    const VertexFlags& flags(Index v) const { return topo_->flags[v]; }
    const std::vector<EdgeInfo>& edges() const { return topo_->edges; }
    const std::vector<Index>& vertex_triangles(Index v) const { return topo_->vertex_triangles[v]; }
    const std::vector<std::pair<Index, Index>>& boundary_edges() const { return topo_->boundary_edges; }
    const std::shared_ptr<const MeshTopology>& topology() const { return topo_; }

    bool in_omega(Index t) const { return label(t) != Label::Exterior; }

    geom::Triangle corners(Index t) const {
        const auto& tri = triangle(t);
        return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
    }

    double area(Index t) const {
        const auto& tri = triangle(t);
        return geom::signed_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
    }

    Vec2 centroid(Index t) const {
        const auto& tri = triangle(t);
        return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
    }

    /// Gradients of the three P1 basis functions on triangle t (rows).
    Eigen::Matrix<double, 3, 2> basis_gradients(Index t) const {
        const auto& tri = triangle(t);
        const Vec2& a = vertices_[tri[0]];
        const Vec2& b = vertices_[tri[1]];
        const Vec2& c = vertices_[tri[2]];
        const double area2 = cross2(b - a, c - a);
        Eigen::Matrix<double, 3, 2> g;
        g.row(0) = Vec2(b.y() - c.y(), c.x() - b.x()) / area2;
        g.row(1) = Vec2(c.y() - a.y(), a.x() - c.x()) / area2;
        g.row(2) = Vec2(a.y() - b.y(), b.x() - a.x()) / area2;
        return g;
    }

    /// Same connectivity and labels, new coordinates. No validity checks.
    LabeledMesh with_vertices(std::vector<Vec2> vertices) const {
        LabeledMesh m;
        m.vertices_ = std::move(vertices);
        m.topo_ = topo_;
        return m;
    }

    /// Polyline of the boundary of Omega as coordinate pairs.
    std::vector<std::pair<Vec2, Vec2>> boundary_polyline() const {
        std::vector<std::pair<Vec2, Vec2>> out;
        out.reserve(boundary_edges().size());
        for (const auto& [a, b] : boundary_edges()) out.emplace_back(vertices_[a], vertices_[b]);
        return out;
    }

    double min_edge_length() const {
        double h = std::numeric_limits<double>::infinity();
        for (const auto& e : edges()) h = std::min(h, (vertices_[e.a] - vertices_[e.b]).norm());
        return h;
    }

    double region_area(Label label) const {
        double s = 0.0;
        for (std::size_t t = 0; t < num_triangles(); ++t)
            if (labels()[t] == label) s += area(static_cast<Index>(t));
        return s;
    }

    /// FNV-1a over coordinates, connectivity and labels.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* data, std::size_t n) {
            const auto* p = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= p[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& v : vertices_) mix(v.data(), 2 * sizeof(double));
        for (const auto& t : triangles()) mix(t.data(), 3 * sizeof(Index));
        for (Label l : labels()) mix(&l, sizeof(Label));
        return h;
    }

private:
    static void build_topology(MeshTopology& topo) {
        const std::size_t nv = topo.num_vertices;
        topo.flags.assign(nv, {});
        topo.vertex_triangles.assign(nv, {});
        std::unordered_map<std::uint64_t, std::size_t> edge_index;
        for (std::size_t t = 0; t < topo.triangles.size(); ++t) {
            const auto& tri = topo.triangles[t];
            for (int k = 0; k < 3; ++k) {
                auto& f = topo.flags[tri[k]];
                switch (topo.labels[t]) {
                case Label::Local: f.in_local = true; break;
                case Label::Nonlocal: f.in_nonlocal = true; break;
                case Label::Exterior: f.in_exterior = true; break;
                }
                topo.vertex_triangles[tri[k]].push_back(static_cast<Index>(t));
                const Index a = tri[k], b = tri[(k + 1) % 3];
                const auto key = detail::edge_key(a, b);
                auto it = edge_index.find(key);
                if (it == edge_index.end()) {
                    edge_index.emplace(key, topo.edges.size());
                    topo.edges.push_back({std::min(a, b), std::max(a, b), static_cast<Index>(t), -1});
                } else {
                    auto& e = topo.edges[it->second];
                    if (e.t1 != -1)
                        throw Error(ErrorCode::NonConforming, "edge shared by more than two triangles");
                    e.t1 = static_cast<Index>(t);
                }
            }
        }
        for (const auto& e : topo.edges) {
            const bool in0 = topo.labels[e.t0] != Label::Exterior;
            const bool in1 = e.t1 >= 0 && topo.labels[e.t1] != Label::Exterior;
            if (in0 != in1) {
                topo.boundary_edges.emplace_back(e.a, e.b);
                topo.flags[e.a].on_boundary = topo.flags[e.b].on_boundary = true;
            }
        }
        for (auto& f : topo.flags) {
            if (f.in_omega() && f.in_exterior) f.on_boundary = true;
            f.on_interface = f.in_local && f.in_nonlocal;
        }
    }

    /// Rejects hanging nodes: a vertex inside a hull edge of another triangle.
    void check_conforming() const {
        std::vector<Index> hull_vertices;
        double h = 0.0;
        std::size_t hull = 0;
        for (const auto& e : edges()) {
            if (e.t1 < 0) {
                ++hull;
                h = std::max(h, (vertices_[e.a] - vertices_[e.b]).norm());
            }
        }
        if (hull == 0) return;
        std::vector<bool> used(num_vertices(), false);
        for (const auto& e : edges()) {
            if (e.t1 < 0) used[e.a] = used[e.b] = true;
        }
        // Bin hull vertices on a grid of cell size h.
        std::unordered_map<std::uint64_t, std::vector<Index>> bins;
        auto cell = [h](double x) { return static_cast<std::int64_t>(std::floor(x / h)); };
        auto key = [](std::int64_t i, std::int64_t j) {
            return (static_cast<std::uint64_t>(i + (1 << 30)) << 32) | static_cast<std::uint64_t>(j + (1 << 30));
        };
        for (std::size_t v = 0; v < num_vertices(); ++v) {
            if (!used[v]) continue;
            bins[key(cell(vertices_[v].x()), cell(vertices_[v].y()))].push_back(static_cast<Index>(v));
        }
        for (const auto& e : edges()) {
            if (e.t1 >= 0) continue;
            const Vec2& a = vertices_[e.a];
            const Vec2& b = vertices_[e.b];
            const double len = (b - a).norm();
            const std::int64_t i0 = cell(std::min(a.x(), b.x())), i1 = cell(std::max(a.x(), b.x()));
            const std::int64_t j0 = cell(std::min(a.y(), b.y())), j1 = cell(std::max(a.y(), b.y()));
            for (auto i = i0; i <= i1; ++i) {
                for (auto j = j0; j <= j1; ++j) {
                    auto it = bins.find(key(i, j));
                    if (it == bins.end()) continue;
                    for (Index v : it->second) {
                        if (v == e.a || v == e.b) continue;
                        const Vec2& p = vertices_[v];
                        const double t = (p - a).dot(b - a) / (len * len);
                        if (t <= 1e-12 || t >= 1.0 - 1e-12) continue;
                        if (std::abs(cross2(b - a, p - a)) / len <= 1e-12 * len)
                            throw Error(ErrorCode::NonConforming, "hanging node on a hull edge");
                    }
                }
            }
        }
    }

    std::vector<Vec2> vertices_;
    std::shared_ptr<const MeshTopology> topo_;
};

/// Physical tag -> label map used by the MSH reader and writer.
using LabelMap = std::map<int, Label>;

inline LabelMap default_label_map() {
    return {{1, Label::Local}, {2, Label::Nonlocal}, {3, Label::Exterior}};
}

/// Reads a Gmsh MSH 2.2 ASCII document. Only 3-node triangles (type 2) are
/// kept; their first tag is the physical tag.
inline LabeledMesh parse_msh(std::istream& in, const LabelMap& labels = default_label_map()) {
    std::string line;
    bool have_format = false, have_nodes = false, have_elements = false;
    std::unordered_map<long, Vec2> nodes;
    std::vector<std::array<long, 3>> tris;
    std::vector<Label> tri_labels;
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ParseFailure, what); };

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "$MeshFormat") {
            std::getline(in, line);
            std::istringstream ss(line);
            double version = 0;
            int file_type = -1;
            ss >> version >> file_type;
            if (!ss || version < 2.0 || version >= 3.0) fail("unsupported MSH version: " + line);
            if (file_type != 0) fail("binary MSH is not supported");
            have_format = true;
        } else if (line == "$Nodes") {
            std::size_t n = 0;
            if (!(in >> n)) fail("bad node count");
            nodes.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                long id;
                double x, y, z;
                if (!(in >> id >> x >> y >> z)) fail("bad node record");
                nodes[id] = Vec2(x, y);
            }
            have_nodes = true;
        } else if (line == "$Elements") {
            std::size_t n = 0;
            if (!(in >> n)) fail("bad element count");
            std::getline(in, line);
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::getline(in, line)) fail("truncated element section");
                std::istringstream ss(line);
                long id;
                int type, ntags;
                if (!(ss >> id >> type >> ntags)) fail("bad element record");
                std::vector<long> tags(ntags);
                for (auto& t : tags)
                    if (!(ss >> t)) fail("bad element tags");
                if (type != 2) continue;
                std::array<long, 3> v;
                for (auto& x : v)
                    if (!(ss >> x)) fail("bad triangle nodes");
                if (tags.empty()) fail("triangle without physical tag");
                auto it = labels.find(static_cast<int>(tags[0]));
                if (it == labels.end())
                    throw Error(ErrorCode::UnknownLabel, "physical tag " + std::to_string(tags[0]));
                tris.push_back(v);
                tri_labels.push_back(it->second);
            }
            have_elements = true;
        }
    }
    if (!have_format || !have_nodes || !have_elements) fail("missing MSH section");
    if (tris.empty()) throw Error(ErrorCode::EmptySubdomain, "no triangles");
    if (std::none_of(tri_labels.begin(), tri_labels.end(), [](Label l) { return l != Label::Exterior; }))
        throw Error(ErrorCode::EmptySubdomain, "no local or nonlocal triangles");

    // Keep only referenced nodes, numbered in order of first use.
    std::unordered_map<long, Index> remap;
    std::vector<Vec2> verts;
    std::vector<Tri> triangles;
    triangles.reserve(tris.size());
    for (const auto& t : tris) {
        Tri out;
        for (int k = 0; k < 3; ++k) {
            auto it = remap.find(t[k]);
            if (it == remap.end()) {
                auto nit = nodes.find(t[k]);
                if (nit == nodes.end()) fail("triangle references unknown node " + std::to_string(t[k]));
                it = remap.emplace(t[k], static_cast<Index>(verts.size())).first;
                verts.push_back(nit->second);
            }
            out[k] = it->second;
        }
        triangles.push_back(out);
    }
    return LabeledMesh(std::move(verts), std::move(triangles), std::move(tri_labels));
}

inline LabeledMesh load_msh(const std::string& path, const LabelMap& labels = default_label_map()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseFailure, "cannot open " + path);
    return parse_msh(in, labels);
}

inline void write_msh(std::ostream& out, const LabeledMesh& mesh, const LabelMap& labels = default_label_map()) {
    std::map<Label, int> tag;
    for (const auto& [k, v] : labels) tag.emplace(v, k);
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    out << "$Nodes\n" << mesh.num_vertices() << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
        out << i + 1 << " " << mesh.vertex(i).x() << " " << mesh.vertex(i).y() << " 0\n";
    out << "$EndNodes\n$Elements\n" << mesh.num_triangles() << "\n";
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const int phys = tag.at(mesh.label(t));
        out << t + 1 << " 2 2 " << phys << " " << phys << " " << tri[0] + 1 << " " << tri[1] + 1 << " "
            << tri[2] + 1 << "\n";
    }
    out << "$EndElements\n";
}

inline void save_msh(const std::string& path, const LabeledMesh& mesh, const LabelMap& labels = default_label_map()) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseFailure, "cannot write " + path);
    write_msh(out, mesh, labels);
}

/// One edge of the discrete interface.
struct InterfaceEdge {
    Index a = -1, b = -1;
    Index nonlocal_triangle = -1, local_triangle = -1;
    Vec2 normal;  // unit, from the nonlocal into the local triangle
    double length = 0.0;
};

/// The discrete interface: closed polylines stored back to back.
struct InterfaceCurve {
    std::vector<InterfaceEdge> edges;
    std::vector<std::size_t> loop_offsets;  // loop i is [offsets[i], offsets[i+1])

    std::size_t num_loops() const { return loop_offsets.empty() ? 0 : loop_offsets.size() - 1; }

    double total_length() const {
        double s = 0.0;
        for (const auto& e : edges) s += e.length;
        return s;
    }
};

inline InterfaceCurve derive_interface(const LabeledMesh& mesh) {
    std::vector<InterfaceEdge> raw;
    for (const auto& e : mesh.edges()) {
        if (e.t1 < 0) continue;
        const Label l0 = mesh.label(e.t0), l1 = mesh.label(e.t1);
        if (!((l0 == Label::Local && l1 == Label::Nonlocal) || (l0 == Label::Nonlocal && l1 == Label::Local)))
            continue;
        InterfaceEdge ie;
        ie.a = e.a;
        ie.b = e.b;
        ie.nonlocal_triangle = l0 == Label::Nonlocal ? e.t0 : e.t1;
        ie.local_triangle = l0 == Label::Nonlocal ? e.t1 : e.t0;
        raw.push_back(ie);
    }
    if (raw.empty()) throw Error(ErrorCode::EmptyInterface, "no local/nonlocal adjacency");

    std::unordered_map<Index, std::vector<std::size_t>> incident;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        incident[raw[i].a].push_back(i);
        incident[raw[i].b].push_back(i);
    }
    for (const auto& [v, list] : incident) {
        if (list.size() % 2 != 0 || mesh.flags(v).on_boundary)
            throw Error(ErrorCode::NotClosed, "interface polyline has an open end at vertex " + std::to_string(v));
    }

    InterfaceCurve curve;
    std::vector<bool> used(raw.size(), false);
    curve.loop_offsets.push_back(0);
    for (std::size_t start = 0; start < raw.size(); ++start) {
        if (used[start]) continue;
        // Orient the first edge so the nonlocal side lies to its left.
        InterfaceEdge e = raw[start];
        used[start] = true;
        {
            const Vec2 d = mesh.vertex(e.b) - mesh.vertex(e.a);
            const Vec2 c = mesh.centroid(e.nonlocal_triangle) - mesh.vertex(e.a);
            if (cross2(d, c) < 0) std::swap(e.a, e.b);
        }
        const Index first = e.a;
        curve.edges.push_back(e);
        Index cur = e.b;
        while (cur != first) {
            std::size_t next = raw.size();
            for (std::size_t k : incident[cur]) {
                if (!used[k]) {
                    next = k;
                    break;
                }
            }
            if (next == raw.size()) throw Error(ErrorCode::NotClosed, "interface chain breaks");
            used[next] = true;
            InterfaceEdge n = raw[next];
            if (n.a != cur) std::swap(n.a, n.b);
            curve.edges.push_back(n);
            cur = n.b;
        }
        curve.loop_offsets.push_back(curve.edges.size());
    }

    for (auto& e : curve.edges) {
        const Vec2 d = mesh.vertex(e.b) - mesh.vertex(e.a);
        e.length = d.norm();
        Vec2 n(d.y(), -d.x());
        n /= e.length;
        if (n.dot(mesh.centroid(e.local_triangle) - mesh.centroid(e.nonlocal_triangle)) < 0) n = -n;
        e.normal = n;
    }
    return curve;
}

struct MeshQuality {
    double min_angle_deg = 0.0;
    /// min over triangles of 4*sqrt(3)*area / (sum of squared edge lengths); 1 for equilateral.
    double min_shape_ratio = 0.0;

    bool remesh_recommended(double min_angle_threshold_deg = 10.0) const {
        return min_angle_deg < min_angle_threshold_deg;
    }
};

inline MeshQuality mesh_quality(const LabeledMesh& mesh) {
    MeshQuality q{180.0, 1.0};
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto c = mesh.corners(static_cast<Index>(t));
        const auto ang = geom::triangle_angles(c[0], c[1], c[2]);
        q.min_angle_deg = std::min({q.min_angle_deg, ang[0], ang[1], ang[2]});
        const double l2 = (c[1] - c[0]).squaredNorm() + (c[2] - c[1]).squaredNorm() + (c[0] - c[2]).squaredNorm();
        q.min_shape_ratio = std::min(q.min_shape_ratio, 4.0 * std::sqrt(3.0) * mesh.area(static_cast<Index>(t)) / l2);
    }
    return q;
}

}  // namespace ltn
