#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltn/meshgen.hpp"
#include "ltn/optimizer.hpp"

namespace ltn {

/// Right-hand side on one subdomain: a + b x + c y.
struct ForcingSpec {
    double a = 0.0, b = 0.0, c = 0.0;

    ScalarField field() const { return b == 0.0 && c == 0.0 ? ScalarField::constant(a) : ScalarField::linear(a, b, c); }
    bool operator==(const ForcingSpec&) const = default;
};

/// Generated O-grid geometry, used when no mesh file is given.
struct GeometrySpec {
    int segments = 64;
    Vec2 circle_center{0.5, 0.5};
    double circle_radius = 0.25;
    double exterior_width = 0.1;
    // Random interior vertex displacement, as a fraction of the local edge
    // length. Puts a data mesh in general position relative to the shape mesh.
    double jitter = 0.0;
    std::uint64_t jitter_seed = 1;

    LabeledMesh build() const {
        meshgen::InterfaceMeshSpec s;
        s.segments = segments;
        s.exterior_width = exterior_width;
        s.radius = meshgen::circle_radius(s.center, circle_center, circle_radius);
        auto m = meshgen::interface_mesh(s);
        return jitter > 0.0 ? meshgen::jitter_interior(m, jitter, jitter_seed) : m;
    }
    bool operator==(const GeometrySpec&) const = default;
};

struct RunConfig {
    // Shapes: a mesh file or a generated geometry for each.
    std::string mesh;
    std::optional<GeometrySpec> geometry;
    std::string data_mesh;
    std::optional<GeometrySpec> data_geometry;
    std::string data;  // field file of the data (written by generate-data)
    LabelMap label_map = default_label_map();

    std::string kernel = "gamma1";
    double delta = 0.1;
    ForcingSpec f_local{-10.0}, f_nonlocal{10.0};
    double nu = 1e-3;
    OptConfig opt;

    std::string method = "monolithic";  // solve: monolithic | multiplicative | additive
    double schwarz_tol = 1e-10;
    int schwarz_maxiter = 1000;
    bool adjoint = false;

    std::vector<double> fd_steps{1e-3, 1e-4, 1e-5};
    int fd_fields = 5;
    double fd_amplitude = 0.05;

    std::string output_dir = "out";
    std::uint64_t seed = 1;
    bool deterministic = true;
    int threads = 0;  // 0: library default

    ShapeProblem problem() const {
        ShapeProblem p;
        p.kernel = make_kernel(kernel, delta);
        p.forcing = {f_local.field(), f_nonlocal.field()};
        p.nu = nu;
        return p;
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw Error(ErrorCode::ConfigError, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline nlohmann::json geometry_json(const GeometrySpec& g) {
    return {{"segments", g.segments},
            {"circle_center", {g.circle_center.x(), g.circle_center.y()}},
            {"circle_radius", g.circle_radius},
            {"exterior_width", g.exterior_width},
            {"jitter", g.jitter},
            {"jitter_seed", g.jitter_seed}};
}

inline GeometrySpec geometry_from(const nlohmann::json& j, const std::string& where) {
    reject_unknown(j, {"segments", "circle_center", "circle_radius", "exterior_width", "jitter", "jitter_seed"}, where);
    GeometrySpec g;
    read(j, "segments", g.segments);
    if (j.contains("circle_center")) {
        const auto c = j.at("circle_center").get<std::vector<double>>();
        if (c.size() != 2) throw Error(ErrorCode::ConfigError, where + ".circle_center needs two numbers");
        g.circle_center = {c[0], c[1]};
    }
    read(j, "circle_radius", g.circle_radius);
    read(j, "exterior_width", g.exterior_width);
    read(j, "jitter", g.jitter);
    read(j, "jitter_seed", g.jitter_seed);
    return g;
}

inline nlohmann::json forcing_json(const ForcingSpec& f) { return {f.a, f.b, f.c}; }

inline ForcingSpec forcing_from(const nlohmann::json& j, const std::string& where) {
    if (j.is_number()) return {j.get<double>()};
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw Error(ErrorCode::ConfigError, where + " needs a number or [a, b, c]");
    return {v[0], v[1], v[2]};
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [tag, l] : c.label_map) labels[std::to_string(tag)] = std::string(to_string(l));
    nlohmann::json j = {
        {"mesh", c.mesh},
        {"data_mesh", c.data_mesh},
        {"data", c.data},
        {"label_map", labels},
        {"kernel", {{"name", c.kernel}, {"delta", c.delta}}},
        {"forcing", {{"local", detail::forcing_json(c.f_local)}, {"nonlocal", detail::forcing_json(c.f_nonlocal)}}},
        {"nu", c.nu},
        {"optimizer",
         {{"tol", c.opt.tol}, {"maxiter", c.opt.maxiter}, {"c", c.opt.c}, {"tau", c.opt.tau},
          {"alpha_max", c.opt.alpha_max}, {"step_fraction", c.opt.step_fraction}, {"min_alpha", c.opt.min_alpha},
          {"memory", c.opt.memory}, {"mu_min", c.opt.mu_min}, {"mu_max", c.opt.mu_max},
          {"remesh_min_angle", c.opt.remesh_min_angle}}},
        {"solve",
         {{"method", c.method}, {"schwarz_tol", c.schwarz_tol}, {"schwarz_maxiter", c.schwarz_maxiter},
          {"adjoint", c.adjoint}}},
        {"check", {{"steps", c.fd_steps}, {"fields", c.fd_fields}, {"amplitude", c.fd_amplitude}}},
        {"output_dir", c.output_dir},
        {"seed", c.seed},
        {"deterministic", c.deterministic},
        {"threads", c.threads}};
    if (c.geometry) j["geometry"] = detail::geometry_json(*c.geometry);
    if (c.data_geometry) j["data_geometry"] = detail::geometry_json(*c.data_geometry);
    return j;
}

/// Parses and validates; throws ConfigError on unknown keys, wrong types or
/// out-of-range values. Missing keys keep their defaults.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::read;
    RunConfig c;
    try {
        detail::reject_unknown(j,
                               {"mesh", "geometry", "data_mesh", "data_geometry", "data", "label_map", "kernel",
                                "forcing", "nu", "optimizer", "solve", "check", "output_dir", "seed", "deterministic",
                                "threads"},
                               "config");
        read(j, "mesh", c.mesh);
        read(j, "data_mesh", c.data_mesh);
        read(j, "data", c.data);
        if (j.contains("geometry")) c.geometry = detail::geometry_from(j["geometry"], "geometry");
        if (j.contains("data_geometry")) c.data_geometry = detail::geometry_from(j["data_geometry"], "data_geometry");
        if (j.contains("label_map")) {
            c.label_map.clear();
            for (const auto& [tag, name] : j["label_map"].items()) {
                const std::string n = name.get<std::string>();
                Label l;
                if (n == "local") l = Label::Local;
                else if (n == "nonlocal") l = Label::Nonlocal;
                else if (n == "exterior") l = Label::Exterior;
                else throw Error(ErrorCode::ConfigError, "unknown label '" + n + "'");
                c.label_map[std::stoi(tag)] = l;
            }
        }
        if (j.contains("kernel")) {
            const auto& k = j["kernel"];
            detail::reject_unknown(k, {"name", "delta"}, "kernel");
            read(k, "name", c.kernel);
            read(k, "delta", c.delta);
        }
        if (j.contains("forcing")) {
            const auto& f = j["forcing"];
            detail::reject_unknown(f, {"local", "nonlocal"}, "forcing");
            if (f.contains("local")) c.f_local = detail::forcing_from(f["local"], "forcing.local");
            if (f.contains("nonlocal")) c.f_nonlocal = detail::forcing_from(f["nonlocal"], "forcing.nonlocal");
        }
        read(j, "nu", c.nu);
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            detail::reject_unknown(o,
                                   {"tol", "maxiter", "c", "tau", "alpha_max", "step_fraction", "min_alpha", "memory",
                                    "mu_min", "mu_max", "remesh_min_angle"},
                                   "optimizer");
            read(o, "tol", c.opt.tol);
            read(o, "maxiter", c.opt.maxiter);
            read(o, "c", c.opt.c);
            read(o, "tau", c.opt.tau);
            read(o, "alpha_max", c.opt.alpha_max);
            read(o, "step_fraction", c.opt.step_fraction);
            read(o, "min_alpha", c.opt.min_alpha);
            read(o, "memory", c.opt.memory);
            read(o, "mu_min", c.opt.mu_min);
            read(o, "mu_max", c.opt.mu_max);
            read(o, "remesh_min_angle", c.opt.remesh_min_angle);
        }
        if (j.contains("solve")) {
            const auto& s = j["solve"];
            detail::reject_unknown(s, {"method", "schwarz_tol", "schwarz_maxiter", "adjoint"}, "solve");
            read(s, "method", c.method);
            read(s, "schwarz_tol", c.schwarz_tol);
            read(s, "schwarz_maxiter", c.schwarz_maxiter);
            read(s, "adjoint", c.adjoint);
        }
        if (j.contains("check")) {
            const auto& s = j["check"];
            detail::reject_unknown(s, {"steps", "fields", "amplitude"}, "check");
            read(s, "steps", c.fd_steps);
            read(s, "fields", c.fd_fields);
            read(s, "amplitude", c.fd_amplitude);
        }
        read(j, "output_dir", c.output_dir);
        read(j, "seed", c.seed);
        read(j, "deterministic", c.deterministic);
        read(j, "threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
    }
    return c;
}

/// Range checks that do not touch the file system.
inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    try {
        (void)make_kernel(c.kernel, c.delta);
    } catch (const Error& e) {
        fail(e.what());
    }
    if (!(c.nu >= 0.0)) fail("nu must be nonnegative");
    c.opt.validate();
    if (c.method != "monolithic" && c.method != "multiplicative" && c.method != "additive")
        fail("solve.method must be monolithic, multiplicative or additive");
    if (!(c.schwarz_tol > 0.0) || c.schwarz_maxiter < 0) fail("bad Schwarz settings");
    if (c.fd_steps.empty()) fail("check.steps must not be empty");
    for (double t : c.fd_steps)
        if (!(t > 0.0)) fail("check.steps must be positive");
    if (c.fd_fields < 1 || !(c.fd_amplitude > 0.0)) fail("bad check settings");
    if (c.threads < 0) fail("threads must be nonnegative");
    for (const auto* g : {&c.geometry, &c.data_geometry}) {
        if (!*g) continue;
        if ((*g)->segments < 8 || (*g)->segments % 8 != 0) fail("geometry.segments must be a positive multiple of 8");
        if (!((*g)->circle_radius > 0.0) || !((*g)->exterior_width > 0.0)) fail("geometry sizes must be positive");
        if (!((*g)->jitter >= 0.0 && (*g)->jitter < 0.5)) fail("geometry.jitter must lie in [0, 0.5)");
        if (c.delta > (*g)->exterior_width) fail("kernel horizon exceeds the exterior layer width");
    }
}

/// Width of the layer around the nonlocal subdomain that stays inside the
/// mesh: distance from the nonlocal vertices to the mesh hull.
inline double nonlocal_clearance(const LabeledMesh& mesh) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        if (!mesh.flags(static_cast<Index>(v)).in_nonlocal) continue;
        for (const auto& e : mesh.edges())
            if (e.t1 < 0)
                d = std::min(d, geom::point_segment_distance(mesh.vertex(static_cast<Index>(v)), mesh.vertex(e.a),
                                                             mesh.vertex(e.b)));
    }
    return d;
}

/// Loads (or generates) a mesh and checks that the horizon fits inside it.
inline LabeledMesh load_shape(const std::string& path, const std::optional<GeometrySpec>& g, const RunConfig& c,
                              const char* what) {
    LabeledMesh m;
    if (!path.empty()) {
        if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, std::string(what) + " not found: " + path);
        m = load_msh(path, c.label_map);
    } else if (g) {
        m = g->build();
    } else {
        throw Error(ErrorCode::ConfigError, std::string("no ") + what + " or geometry given");
    }
    if (c.delta > nonlocal_clearance(m) * (1.0 + 1e-12))
        throw Error(ErrorCode::ConfigError, std::string("kernel horizon exceeds the exterior layer of the ") + what);
    return m;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
    }
    RunConfig c = config_from_json(j);
    // Relative paths are taken relative to the config file.
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* p : {&c.mesh, &c.data_mesh, &c.data, &c.output_dir})
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    return c;
}

}  // namespace ltn
