#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltn/config.hpp"
#include "ltn/io.hpp"
#include "ltn/optimizer.hpp"

namespace ltn::app {

namespace fs = std::filesystem;

/// Exit codes of the command-line tool.
enum Exit : int { Ok = 0, Internal = 1, BadConfig = 2, SolverFailed = 3, StepFailed = 4 };

inline int exit_code(ErrorCode c) {
    switch (c) {
    case ErrorCode::SolverFailure: return SolverFailed;
    case ErrorCode::StepFailure: return StepFailed;
    default: return BadConfig;
    }
}

/// Command-line values that override the config file when given.
struct Overrides {
    std::string config;
    std::optional<std::string> mesh, data_mesh, data, output_dir, kernel, method, restart;
    std::optional<double> delta, nu, tol;
    std::optional<int> maxiter, threads;
    std::optional<std::uint64_t> seed;
    bool adjoint = false;

    RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : load_config(config);
        if (mesh) c.mesh = *mesh;
        if (data_mesh) c.data_mesh = *data_mesh;
        if (data) c.data = *data;
        if (output_dir) c.output_dir = *output_dir;
        if (kernel) c.kernel = *kernel;
        if (method) c.method = *method;
        if (delta) c.delta = *delta;
        if (nu) c.nu = *nu;
        if (tol) c.opt.tol = *tol;
        if (maxiter) c.opt.maxiter = *maxiter;
        if (threads) c.threads = *threads;
        if (seed) c.seed = *seed;
        if (adjoint) c.adjoint = true;
        // Without any shape the built-in circle geometry is used.
        if (c.mesh.empty() && !c.geometry) c.geometry = GeometrySpec{};
        validate(c);
        return c;
    }
};

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + p.string());
    return out;
}

inline fs::path prepare_output(const RunConfig& c) {
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);
    return dir;
}

inline LabeledMesh current_mesh(const RunConfig& c) { return load_shape(c.mesh, c.geometry, c, "mesh"); }

/// Data mesh falls back to the optimisation shape's source when unset.
inline LabeledMesh data_mesh(const RunConfig& c) {
    if (!c.data_mesh.empty() || c.data_geometry) return load_shape(c.data_mesh, c.data_geometry, c, "data mesh");
    return current_mesh(c);
}

/// Loads the data field named in the config, or generates it in memory.
inline DataField load_data(const RunConfig& c) {
    if (c.data.empty()) return generate_data(data_mesh(c), c.problem());
    if (!fs::exists(c.data)) throw Error(ErrorCode::ConfigError, "data field not found: " + c.data);
    const auto f = io::load_field(c.data);
    if (f.layout != io::FieldLayout::Continuous) throw Error(ErrorCode::ConfigError, "data must be a continuous field");
    fs::path mp(f.mesh_path);
    if (mp.is_relative()) mp = fs::path(c.data).parent_path() / mp;
    const LabeledMesh m = load_msh(mp.string(), c.label_map);
    io::check_field_mesh(f, m);
    return DataField(m, f.values, 1e-6);
}

inline void write_state_csv(const fs::path& p, const LabeledMesh& m, const BrokenField& u,
                            const std::optional<BrokenField>& v = std::nullopt) {
    auto out = open_out(p);
    io::CsvWriter w(out);
    std::vector<std::string> head{"vertex", "x", "y", "in_local", "in_nonlocal", "u_local", "u_nonlocal"};
    if (v) head.insert(head.end(), {"v_local", "v_nonlocal"});
    w.row(head);
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        const auto& fl = m.flags(static_cast<Index>(i));
        if (!fl.in_omega()) continue;
        std::vector<std::string> r{std::to_string(i), io::CsvWriter::num(m.vertex(i).x()),
                                   io::CsvWriter::num(m.vertex(i).y()), fl.in_local ? "1" : "0",
                                   fl.in_nonlocal ? "1" : "0", io::CsvWriter::num(u.local[i]),
                                   io::CsvWriter::num(u.nonlocal[i])};
        if (v) r.insert(r.end(), {io::CsvWriter::num(v->local[i]), io::CsvWriter::num(v->nonlocal[i])});
        w.row(r);
    }
}

inline int cmd_generate_data(const RunConfig& c, std::ostream& log) {
    const auto dir = prepare_output(c);
    const LabeledMesh m = data_mesh(c);
    const auto p = c.problem();
    const SparseSystem sys = assemble_monolithic(m, p.kernel, p.forcing);
    const BrokenField u = solve_state(sys);
    const VectorXd ubar = continuous_projection(m, u);
    save_msh((dir / "data_mesh.msh").string(), m, c.label_map);
    io::save_field((dir / "data.bin").string(), io::continuous_field(m, ubar, "data_mesh.msh"));
    io::save_field((dir / "data_state.bin").string(), io::broken_field(m, u, "data_mesh.msh"));
    io::save_vtk((dir / "data.vtk").string(), m, {{{"u", u}}, {{"ubar", ubar}}, {}});
    log << "data: " << (dir / "data.bin").string() << " (" << m.num_vertices() << " vertices, "
        << sys.free_dofs() << " dofs)\n";
    return Ok;
}

inline int cmd_solve(const RunConfig& c, std::ostream& log) {
    const auto dir = prepare_output(c);
    const LabeledMesh m = current_mesh(c);
    const auto p = c.problem();
    const SparseSystem sys = assemble_monolithic(m, p.kernel, p.forcing);
    const LinearSolver solver(sys.A);
    BrokenField u = solve_state(sys, solver);
    nlohmann::json summary = {{"method", c.method}, {"dofs", sys.free_dofs()}};
    if (c.method != "monolithic") {
        const auto init = BrokenField::zeros(m.num_vertices());
        auto [x, rep] = c.method == "multiplicative" ? schwarz_multiplicative(sys, init, c.schwarz_tol, c.schwarz_maxiter)
                                                     : schwarz_additive(sys, init, c.schwarz_tol, c.schwarz_maxiter);
        auto out = open_out(dir / "schwarz.csv");
        io::CsvWriter w(out);
        w.row({"iteration", "residual"});
        for (std::size_t k = 0; k < rep.residuals.size(); ++k)
            w.row({std::to_string(k), io::CsvWriter::num(rep.residuals[k])});
        summary["converged"] = rep.converged;
        summary["iterations"] = rep.iterations;
        summary["rate"] = rep.rate;
        summary["r_squared"] = rep.r_squared;
        summary["l2_difference_to_monolithic"] = l2_norm(m, difference(x, u));
        if (!rep.converged) log << "warning: Schwarz iteration did not converge\n";
        u = std::move(x);
    }
    std::optional<BrokenField> v;
    io::VtkFields fields{{{"u", u}}, {}, {}};
    if (c.adjoint) {
        const DataField data = load_data(c);
        const VectorXd ubar = data.on(m);
        v = solve_adjoint(sys, solver, u, ubar);
        fields.broken.emplace_back("v", *v);
        fields.nodal.emplace_back("ubar", ubar);
        summary["objective"] = eval_objective(m, u, ubar, c.nu);
    }
    summary["l2_norm"] = l2_norm(m, u);
    io::save_vtk((dir / "state.vtk").string(), m, fields);
    write_state_csv(dir / "state.csv", m, u, v);
    io::save_field((dir / "state.bin").string(), io::broken_field(m, u, ""));
    open_out(dir / "solve.json") << summary.dump(2) << '\n';
    log << summary.dump() << '\n';
    return Ok;
}

inline const std::vector<std::string>& history_header() {
    static const std::vector<std::string> h{"iteration",     "objective", "tracking", "perimeter",
                                            "gradient_norm", "slope",     "alpha",    "trials",
                                            "direction",     "min_angle_deg", "min_shape_ratio"};
    return h;
}

inline void write_history_csv(const fs::path& p, const OptHistory& h) {
    auto out = open_out(p);
    io::CsvWriter w(out);
    w.row(history_header());
    using io::CsvWriter;
    for (const auto& r : h.records)
        w.row({std::to_string(r.iteration), CsvWriter::num(r.objective), CsvWriter::num(r.tracking),
               CsvWriter::num(r.perimeter), CsvWriter::num(r.gradient_norm), CsvWriter::num(r.slope),
               CsvWriter::num(r.alpha), std::to_string(r.trials), to_string(r.direction),
               CsvWriter::num(r.min_angle_deg), CsvWriter::num(r.min_shape_ratio)});
}

inline int cmd_optimize(const RunConfig& c, const std::optional<std::string>& restart_from, bool mesh_given,
                        std::ostream& log) {
    const auto dir = prepare_output(c);
    const auto p = c.problem();
    const DataField data = load_data(c);
    OptState st;
    if (restart_from) {
        const OptState saved = load_checkpoint(*restart_from);
        st = restart(saved, mesh_given ? current_mesh(c) : saved.mesh);
        log << "restart at iteration " << st.iteration << (st.memory.empty() ? " (memory cleared)" : "") << '\n';
    } else {
        st.mesh = current_mesh(c);
        st.seed = c.seed;
    }
    const IterationObserver observer = [&](const OptState& s, const Evaluation& e, const VectorField& g) {
        const auto& r = s.history.records.back();
        char name[32];
        std::snprintf(name, sizeof name, "iter_%03d.vtk", r.iteration);
        io::save_vtk((dir / name).string(), s.mesh, {{{"u", e.u}}, {{"ubar", e.ubar}}, {{"gradient", g}}});
        write_history_csv(dir / "history.csv", s.history);
        save_checkpoint((dir / "checkpoint.json").string(), s);
        log << "iter " << r.iteration << "  J " << r.objective << "  |grad| " << r.gradient_norm << "  alpha "
            << r.alpha << "  " << to_string(r.direction) << '\n';
    };
    optimize(st, p, data, c.opt, observer);
    write_history_csv(dir / "history.csv", st.history);
    save_checkpoint((dir / "checkpoint.json").string(), st);
    save_msh((dir / "final.msh").string(), st.mesh, c.label_map);
    open_out(dir / "history.json") << to_json(st.history).dump(2) << '\n';
    log << "stop: " << st.history.stop_reason << (st.history.remesh_recommended ? " (remeshing recommended)" : "")
        << '\n';
    return st.history.step_failure ? StepFailed : Ok;
}

/// Random fields near the interface plus one supported away from it.
inline int cmd_check_derivative(const RunConfig& c, std::ostream& log) {
    const auto dir = prepare_output(c);
    const LabeledMesh m = current_mesh(c);
    const auto p = c.problem();
    const DataField data = load_data(c);
    std::vector<VectorField> fields;
    for (int i = 0; i < c.fd_fields; ++i)
        fields.push_back(random_interface_field(m, c.seed + static_cast<std::uint64_t>(i), c.fd_amplitude));
    {
        // Away from the interface: movable vertices outside the kept patch.
        VectorField away = VectorField::Zero(2 * static_cast<Eigen::Index>(m.num_vertices()));
        const auto keep = interface_patch_mask(m);
        for (std::size_t v = 0; v < m.num_vertices(); ++v)
            if (m.flags(static_cast<Index>(v)).movable() && !keep[v]) {
                away[2 * v] = c.fd_amplitude;
                away[2 * v + 1] = -0.5 * c.fd_amplitude;
            }
        // Keep only vertices whose whole patch stays away from the interface.
        for (std::size_t v = 0; v < m.num_vertices(); ++v)
            for (Index t : m.vertex_triangles(static_cast<Index>(v)))
                for (Index w : m.triangle(t))
                    if (keep[w]) away[2 * v] = away[2 * v + 1] = 0.0;
        fields.push_back(away);
    }
    const auto rows = check_derivative(m, p, data, fields, c.fd_steps);
    auto out = open_out(dir / "derivative_check.csv");
    io::CsvWriter w(out);
    w.row({"field", "support", "t", "derivative", "quotient", "abs_error", "rel_error"});
    using io::CsvWriter;
    double worst = 0.0;
    for (const auto& r : rows) {
        const bool away = r.field + 1 == fields.size();
        const double abs_err = std::abs(r.derivative - r.quotient);
        w.row({std::to_string(r.field), away ? "away" : "interface", CsvWriter::num(r.t), CsvWriter::num(r.derivative),
               CsvWriter::num(r.quotient), CsvWriter::num(abs_err), away ? "" : CsvWriter::num(r.rel_error)});
        if (!away && r.t == c.fd_steps.back()) worst = std::max(worst, r.rel_error);
    }
    log << "worst relative error at t = " << c.fd_steps.back() << ": " << worst << '\n';
    return Ok;
}

inline int cmd_info(const RunConfig& c, std::ostream& log) {
    const LabeledMesh m = current_mesh(c);
    const auto dofs = DofMap::build(m);
    const auto curve = derive_interface(m);
    const auto q = mesh_quality(m);
    const nlohmann::json j = {{"vertices", m.num_vertices()},
                              {"triangles", m.num_triangles()},
                              {"area_local", m.region_area(Label::Local)},
                              {"area_nonlocal", m.region_area(Label::Nonlocal)},
                              {"area_exterior", m.region_area(Label::Exterior)},
                              {"dofs_local", dofs.num_local},
                              {"dofs_nonlocal", dofs.num_nonlocal},
                              {"interface_loops", curve.num_loops()},
                              {"interface_edges", curve.edges.size()},
                              {"interface_length", curve.total_length()},
                              {"min_angle_deg", q.min_angle_deg},
                              {"min_shape_ratio", q.min_shape_ratio},
                              {"remesh_recommended", q.remesh_recommended(c.opt.remesh_min_angle)},
                              {"interaction_pairs", interaction_pairs(m, c.delta).size()},
                              {"mesh_hash", m.hash()},
                              {"threads", num_threads()}};
    log << j.dump(2) << '\n';
    return Ok;
}

/// Entry point of the `ltn` tool; returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Local-to-nonlocal coupling: forward solves and interface identification", "ltn"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--mesh", o.mesh, "MSH 2.2 mesh of the current shape");
    app.add_option("--data-mesh", o.data_mesh, "MSH 2.2 mesh carrying the target interface");
    app.add_option("--data", o.data, "data field written by generate-data");
    app.add_option("-o,--output-dir", o.output_dir, "output directory");
    app.add_option("--kernel", o.kernel, "gamma1 or gamma2");
    app.add_option("--delta", o.delta, "kernel horizon");
    app.add_option("--nu", o.nu, "perimeter weight");
    app.add_option("--seed", o.seed, "seed of random test fields");
    app.add_option("--threads", o.threads, "worker threads (overrides LTN_NUM_THREADS)");

    auto* gen = app.add_subcommand("generate-data", "solve on the data mesh and store the data field");
    auto* solve = app.add_subcommand("solve", "forward (and optionally adjoint) solve");
    solve->add_option("--method", o.method, "monolithic, multiplicative or additive");
    solve->add_flag("--adjoint", o.adjoint, "also solve the adjoint problem (needs data)");
    auto* opt = app.add_subcommand("optimize", "interface identification");
    opt->add_option("--maxiter", o.maxiter, "iteration limit");
    opt->add_option("--tol", o.tol, "gradient norm tolerance");
    opt->add_option("--restart", o.restart, "continue from a checkpoint")->check(CLI::ExistingFile);
    auto* check = app.add_subcommand("check-derivative", "compare the shape derivative with difference quotients");
    auto* info = app.add_subcommand("info", "mesh and discretisation summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, log, err);
        return code == 0 ? Ok : BadConfig;
    }
    try {
        apply_thread_env();
        const RunConfig c = o.resolve();
        if (c.threads > 0) set_num_threads(c.threads);
        if (gen->parsed()) return cmd_generate_data(c, log);
        if (solve->parsed()) return cmd_solve(c, log);
        if (opt->parsed()) return cmd_optimize(c, o.restart, o.mesh.has_value() || !c.mesh.empty(), log);
        if (check->parsed()) return cmd_check_derivative(c, log);
        if (info->parsed()) return cmd_info(c, log);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return Internal;
    }
    return Internal;
}

}  // namespace ltn::app
