#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltn/broken_field.hpp"
#include "ltn/mesh.hpp"

namespace ltn::io {

// ---------------------------------------------------------------------------
// VTK

/// Point data for the VTK writer. Broken fields take the value of the side
/// of each cell; nodal fields are continuous.
struct VtkFields {
    std::vector<std::pair<std::string, BrokenField>> broken;
    std::vector<std::pair<std::string, VectorXd>> nodal;
    std::vector<std::pair<std::string, VectorXd>> vectors;  // flattened 2-vectors
};

/// Legacy ASCII unstructured grid. Every vertex gets one point per side of
/// the triangles around it, so fields may jump across the interface.
inline void write_vtk(std::ostream& out, const LabeledMesh& mesh, const VtkFields& f,
                      const std::string& title = "ltn") {
    const std::size_t nv = mesh.num_vertices();
    for (const auto& [name, b] : f.broken)
        if (static_cast<std::size_t>(b.local.size()) != nv || static_cast<std::size_t>(b.nonlocal.size()) != nv)
            throw Error(ErrorCode::InvalidArgument, "field '" + name + "' does not match the mesh");
    for (const auto& [name, v] : f.nodal)
        if (static_cast<std::size_t>(v.size()) != nv)
            throw Error(ErrorCode::InvalidArgument, "field '" + name + "' does not match the mesh");
    for (const auto& [name, v] : f.vectors)
        if (static_cast<std::size_t>(v.size()) != 2 * nv)
            throw Error(ErrorCode::InvalidArgument, "field '" + name + "' does not match the mesh");

    // (vertex, side) -> point id, in order of first use.
    std::map<std::pair<Index, int>, Index> ids;
    std::vector<std::pair<Index, Label>> points;
    std::vector<std::array<Index, 3>> cells(mesh.num_triangles());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const Label side = mesh.label(static_cast<Index>(t));
        for (int i = 0; i < 3; ++i) {
            const Index v = mesh.triangle(t)[i];
            auto [it, fresh] = ids.try_emplace({v, static_cast<int>(side)}, static_cast<Index>(points.size()));
            if (fresh) points.emplace_back(v, side);
            cells[t][i] = it->second;
        }
    }
    std::ostringstream s;
    s << std::setprecision(17);
    s << "# vtk DataFile Version 3.0\n" << title.substr(0, 255) << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    s << "POINTS " << points.size() << " double\n";
    for (const auto& [v, side] : points) s << mesh.vertex(v).x() << ' ' << mesh.vertex(v).y() << " 0\n";
    s << "CELLS " << cells.size() << ' ' << 4 * cells.size() << '\n';
    for (const auto& c : cells) s << "3 " << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
    s << "CELL_TYPES " << cells.size() << '\n';
    for (std::size_t i = 0; i < cells.size(); ++i) s << "5\n";
    s << "CELL_DATA " << cells.size() << "\nSCALARS label int 1\nLOOKUP_TABLE default\n";
    for (Label l : mesh.labels()) s << static_cast<int>(l) << '\n';
    if (!points.empty() && (!f.broken.empty() || !f.nodal.empty() || !f.vectors.empty())) {
        s << "POINT_DATA " << points.size() << '\n';
        for (const auto& [name, b] : f.broken) {
            s << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (const auto& [v, side] : points)
                s << (side == Label::Exterior ? 0.0 : b.side(side)[v]) << '\n';
        }
        for (const auto& [name, n] : f.nodal) {
            s << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (const auto& p : points) s << n[p.first] << '\n';
        }
        for (const auto& [name, n] : f.vectors) {
            s << "VECTORS " << name << " double\n";
            for (const auto& p : points) s << n[2 * p.first] << ' ' << n[2 * p.first + 1] << " 0\n";
        }
    }
    out << s.str();
}

inline void save_vtk(const std::string& path, const LabeledMesh& mesh, const VtkFields& f) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    write_vtk(out, mesh, f, std::filesystem::path(path).stem().string());
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF line ends, quoted fields when needed)

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_escape(cells[i]);
        }
        out_ << "\r\n";
    }

    static std::string num(double v) {
        std::ostringstream s;
        s << std::setprecision(17) << v;
        return s.str();
    }

    static std::string num(long long v) { return std::to_string(v); }

private:
    std::ostream& out_;
};

/// Splits an RFC 4180 document into rows.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            cell += c;
            any = true;
        }
    }
    if (any || !cell.empty() || !row.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Field files: raw little-endian float64 values plus a JSON sidecar that ties
// them to a mesh.

enum class FieldLayout { Continuous, Broken };

struct FieldFile {
    FieldLayout layout = FieldLayout::Continuous;
    std::uint64_t mesh_hash = 0;
    std::size_t num_vertices = 0;
    std::string mesh_path;  // as written in the sidecar, relative to it
    VectorXd values;        // continuous: nv; broken: local then nonlocal
};

namespace detail {
inline std::uint64_t swap64(std::uint64_t x) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((x >> (8 * i)) & 0xffu);
    return r;
}
}  // namespace detail

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline void save_field(const std::string& path, const FieldFile& f) {
    const std::size_t expect = f.layout == FieldLayout::Broken ? 2 * f.num_vertices : f.num_vertices;
    if (static_cast<std::size_t>(f.values.size()) != expect)
        throw Error(ErrorCode::InvalidArgument, "field size does not match its layout");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(f.values[i]);
        if constexpr (std::endian::native == std::endian::big) bits = detail::swap64(bits);
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    const nlohmann::json side = {{"format", "float64-le"},
                                 {"layout", f.layout == FieldLayout::Broken ? "broken" : "continuous"},
                                 {"count", f.values.size()},
                                 {"num_vertices", f.num_vertices},
                                 {"mesh_hash", f.mesh_hash},
                                 {"mesh", f.mesh_path}};
    std::ofstream(sidecar_path(path)) << side.dump(2) << '\n';
}

inline FieldFile load_field(const std::string& path) {
    std::ifstream sc(sidecar_path(path));
    if (!sc) throw Error(ErrorCode::InvalidArgument, "missing sidecar " + sidecar_path(path));
    FieldFile f;
    try {
        nlohmann::json j;
        sc >> j;
        if (j.at("format") != "float64-le") throw Error(ErrorCode::ParseFailure, "unknown field format");
        const std::string layout = j.at("layout");
        if (layout != "broken" && layout != "continuous") throw Error(ErrorCode::ParseFailure, "unknown layout");
        f.layout = layout == "broken" ? FieldLayout::Broken : FieldLayout::Continuous;
        f.num_vertices = j.at("num_vertices");
        f.mesh_hash = j.at("mesh_hash");
        f.mesh_path = j.at("mesh");
        const std::size_t count = j.at("count");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path);
        f.values.resize(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
                throw Error(ErrorCode::ParseFailure, "field file shorter than its sidecar says");
            if constexpr (std::endian::native == std::endian::big) bits = detail::swap64(bits);
            f.values[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
        }
        if (in.peek() != std::char_traits<char>::eof())
            throw Error(ErrorCode::ParseFailure, "field file longer than its sidecar says");
        const std::size_t expect = f.layout == FieldLayout::Broken ? 2 * f.num_vertices : f.num_vertices;
        if (count != expect) throw Error(ErrorCode::ParseFailure, "field count does not match its layout");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("field sidecar: ") + e.what());
    }
    return f;
}

/// Throws unless the field was written for `mesh`.
inline void check_field_mesh(const FieldFile& f, const LabeledMesh& mesh) {
    if (f.num_vertices != mesh.num_vertices() || f.mesh_hash != mesh.hash())
        throw Error(ErrorCode::InvalidArgument, "field was written for a different mesh");
}

inline FieldFile continuous_field(const LabeledMesh& mesh, const VectorXd& v, std::string mesh_path) {
    return {FieldLayout::Continuous, mesh.hash(), mesh.num_vertices(), std::move(mesh_path), v};
}

inline FieldFile broken_field(const LabeledMesh& mesh, const BrokenField& b, std::string mesh_path) {
    VectorXd v(b.local.size() + b.nonlocal.size());
    v << b.local, b.nonlocal;
    return {FieldLayout::Broken, mesh.hash(), mesh.num_vertices(), std::move(mesh_path), v};
}

}  // namespace ltn::io
