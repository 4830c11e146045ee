#pragma once

#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltn/shape_calculus.hpp"

namespace ltn {

struct OptConfig {
    double tol = 5e-5;        // stop when the L2 norm of the shape gradient drops below
    int maxiter = 25;
    double c = 1e-4;          // Armijo constant
    double tau = 0.5;         // backtracking factor
    double alpha_max = 1.0;   // first trial is min(alpha_max, step_fraction h_min / |U|_inf)
    double step_fraction = 0.5;
    double min_alpha = 1e-12;
    int memory = 5;           // L-BFGS pairs; 0 gives steepest descent
    double mu_min = 0.0, mu_max = 1.0;
    double remesh_min_angle = 10.0;  // degrees

    void validate() const {
        auto fail = [](const char* what) { throw Error(ErrorCode::ConfigError, what); };
        if (!(tol > 0.0)) fail("tol must be positive");
        if (maxiter < 0) fail("maxiter must be nonnegative");
        if (!(c > 0.0 && c < 1.0)) fail("c must lie in (0, 1)");
        if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
        if (!(alpha_max > 0.0) || !(step_fraction > 0.0) || !(min_alpha > 0.0)) fail("step sizes must be positive");
        if (memory < 0) fail("memory must be nonnegative");
        if (!(mu_max > 0.0) || mu_min < 0.0 || mu_min > mu_max) fail("need 0 <= mu_min <= mu_max, mu_max > 0");
    }
};

using InnerProduct = std::function<double(const VectorXd&, const VectorXd&)>;

inline InnerProduct euclidean_inner() {
    return [](const VectorXd& a, const VectorXd& b) { return a.dot(b); };
}

/// Limited-memory BFGS pairs. The curvature condition <s, y> > 0 is
/// enforced on insertion and again whenever the inner product changes.
class LbfgsMemory {
public:
    struct Pair {
        VectorXd s, y;
    };

    explicit LbfgsMemory(int capacity = 5) : capacity_(capacity) {}

    int capacity() const { return capacity_; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }
    const std::deque<Pair>& pairs() const { return pairs_; }
    void clear() { pairs_.clear(); }

    /// Returns false (and stores nothing) if the pair violates the curvature
    /// condition or the memory has zero capacity.
    bool push(VectorXd s, VectorXd y, const InnerProduct& ip) {
        if (capacity_ == 0 || !(ip(s, y) > 0.0)) return false;
        pairs_.push_back({std::move(s), std::move(y)});
        while (static_cast<int>(pairs_.size()) > capacity_) pairs_.pop_front();
        return true;
    }

    /// Drops pairs whose curvature is not positive in `ip`.
    void prune(const InnerProduct& ip) {
        std::erase_if(pairs_, [&](const Pair& p) { return !(ip(p.s, p.y) > 0.0); });
    }

private:
    int capacity_;
    std::deque<Pair> pairs_;
};

enum class DirectionKind { SteepestDescent, Lbfgs };

inline const char* to_string(DirectionKind d) { return d == DirectionKind::Lbfgs ? "lbfgs" : "steepest"; }

struct Direction {
    VectorXd field;
    DirectionKind kind = DirectionKind::SteepestDescent;
};

/// Two-loop recursion in the inner product `ip`; -gradient when the memory
/// is empty or the result is not a descent direction.
inline Direction lbfgs_direction(const LbfgsMemory& memory, const VectorXd& gradient, const InnerProduct& ip) {
    if (memory.empty()) return {-gradient, DirectionKind::SteepestDescent};
    const auto& pairs = memory.pairs();
    const std::size_t m = pairs.size();
    std::vector<double> rho(m), a(m);
    VectorXd q = gradient;
    for (std::size_t i = m; i-- > 0;) {
        rho[i] = 1.0 / ip(pairs[i].s, pairs[i].y);
        a[i] = rho[i] * ip(pairs[i].s, q);
        q -= a[i] * pairs[i].y;
    }
    const auto& last = pairs.back();
    const double yy = ip(last.y, last.y);
    VectorXd r = (yy > 0.0 ? ip(last.s, last.y) / yy : 1.0) * q;
    for (std::size_t i = 0; i < m; ++i) {
        const double b = rho[i] * ip(pairs[i].y, r);
        r += (a[i] - b) * pairs[i].s;
    }
    VectorXd d = -r;
    const double slope = ip(d, gradient);
    if (!(slope < 0.0) || !d.allFinite()) return {-gradient, DirectionKind::SteepestDescent};
    return {std::move(d), DirectionKind::Lbfgs};
}

struct BacktrackResult {
    double alpha = 0.0;
    double value = 0.0;
    int trials = 0;
};

/// Armijo backtracking: alpha = alpha0 tau^j until trial(alpha) is valid and
/// value <= j0 + c alpha slope. `trial` returns nullopt for invalid steps.
inline BacktrackResult armijo_backtracking(double alpha0, double j0, double slope, double c, double tau,
                                           const std::function<std::optional<double>(double)>& trial,
                                           double min_alpha = 1e-12) {
    if (!(slope < 0.0)) throw Error(ErrorCode::InvalidArgument, "line search needs a descent direction");
    BacktrackResult r;
    for (double alpha = alpha0; alpha >= min_alpha; alpha *= tau) {
        ++r.trials;
        const auto v = trial(alpha);
        if (v && *v <= j0 + c * alpha * slope) {
            r.alpha = alpha;
            r.value = *v;
            return r;
        }
    }
    throw Error(ErrorCode::StepFailure, "step size fell below the minimum; consider remeshing");
}

/// Largest nodal displacement length.
inline double max_displacement(const VectorField& u) {
    double m = 0.0;
    for (Eigen::Index i = 0; i + 1 < u.size(); i += 2) m = std::max(m, std::hypot(u[i], u[i + 1]));
    return m;
}

inline double initial_step(const LabeledMesh& mesh, const VectorField& u, const OptConfig& cfg) {
    const double n = max_displacement(u);
    if (n == 0.0) return cfg.alpha_max;
    return std::min(cfg.alpha_max, cfg.step_fraction * mesh.min_edge_length() / n);
}

struct LineSearchResult {
    double alpha = 0.0;
    int trials = 0;
    LabeledMesh mesh;
    Evaluation evaluation;
};

/// Backtracking on the mesh: a trial counts as invalid when the deformed
/// mesh has inverted or collapsed triangles. Each valid trial re-solves the
/// state problem on the trial mesh.
inline LineSearchResult line_search(const LabeledMesh& mesh, const VectorField& direction, double j0, double slope,
                                    const ShapeProblem& p, const DataField& data, const OptConfig& cfg) {
    const auto disp = to_points(direction);
    LineSearchResult out;
    auto trial = [&](double alpha) -> std::optional<double> {
        auto moved = deform(mesh, disp, alpha);
        if (!std::holds_alternative<LabeledMesh>(moved)) return std::nullopt;
        auto& m = std::get<LabeledMesh>(moved);
        Evaluation e;
        try {
            e = evaluate_shape(m, p, data);
        } catch (const Error& err) {
            // A trial shape that changes the interface topology is treated
            // like an invalid mesh.
            if (err.code() == ErrorCode::NotClosed || err.code() == ErrorCode::EmptyInterface ||
                err.code() == ErrorCode::EmptySubdomain)
                return std::nullopt;
            throw;
        }
        const double j = e.objective(p.nu);
        out.mesh = std::move(m);
        out.evaluation = std::move(e);
        return j;
    };
    const auto r = armijo_backtracking(initial_step(mesh, direction, cfg), j0, slope, cfg.c, cfg.tau, trial,
                                       cfg.min_alpha);
    // out holds the last valid trial, which is the accepted one.
    out.alpha = r.alpha;
    out.trials = r.trials;
    return out;
}

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double tracking = 0.0;
    double perimeter = 0.0;
    double gradient_norm = 0.0;
    double slope = 0.0;  // D[U]
    double alpha = 0.0;  // 0 on the final record
    int trials = 0;
    DirectionKind direction = DirectionKind::SteepestDescent;
    double min_angle_deg = 0.0;
    double min_shape_ratio = 0.0;
};

struct OptHistory {
    std::vector<IterationRecord> records;
    bool converged = false;
    bool step_failure = false;
    bool remesh_recommended = false;
    std::string stop_reason;
};

/// Everything needed to continue a run.
struct OptState {
    LabeledMesh mesh;
    int iteration = 0;
    OptHistory history;
    LbfgsMemory memory{5};
    std::optional<VectorField> last_step;      // s of the pending pair
    std::optional<VectorField> last_gradient;  // gradient the step was taken from
    std::uint64_t seed = 0;
};

/// Called after every record; may be used to write per-iteration output.
using IterationObserver = std::function<void(const OptState&, const Evaluation&, const VectorField& gradient)>;

/// One pass of the outer loop per iteration: state, adjoint, derivative,
/// mu, Riesz gradient, direction, line search, deformation.
inline OptState& optimize(OptState& st, const ShapeProblem& p, const DataField& data, const OptConfig& cfg,
                          const IterationObserver& observer = {}) {
    cfg.validate();
    if (st.memory.capacity() != cfg.memory) st.memory = LbfgsMemory(cfg.memory);
    std::optional<Evaluation> cached;
    while (true) {
        if (st.iteration >= cfg.maxiter) {
            st.history.stop_reason = "maxiter";
            break;
        }
        Evaluation e = cached ? std::move(*cached) : evaluate_shape(st.mesh, p, data);
        cached.reset();
        const VectorField d = shape_derivative(e, p, data).total;
        const RieszOperator riesz(st.mesh, solve_mu(st.mesh, cfg.mu_min, cfg.mu_max));
        const VectorField g = riesz.solve(d);
        const InnerProduct ip = [&riesz](const VectorXd& a, const VectorXd& b) { return riesz.inner(a, b); };

        if (st.last_step && st.last_gradient) st.memory.push(*st.last_step, g - *st.last_gradient, ip);
        st.memory.prune(ip);
        st.last_step.reset();
        st.last_gradient.reset();

        IterationRecord rec;
        rec.iteration = st.iteration;
        rec.objective = e.objective(p.nu);
        rec.tracking = e.tracking;
        rec.perimeter = e.perimeter;
        rec.gradient_norm = vector_l2_norm(st.mesh, g);
        const auto q = mesh_quality(st.mesh);
        rec.min_angle_deg = q.min_angle_deg;
        rec.min_shape_ratio = q.min_shape_ratio;
        if (q.remesh_recommended(cfg.remesh_min_angle)) st.history.remesh_recommended = true;

        auto finish = [&](const char* reason) {
            st.history.records.push_back(rec);
            st.history.stop_reason = reason;
            if (observer) observer(st, e, g);
        };
        if (rec.gradient_norm < cfg.tol) {
            st.history.converged = true;
            finish("converged");
            break;
        }

        Direction dir = lbfgs_direction(st.memory, g, ip);
        // D[U] = b(U, grad J) = U . D for fields vanishing on fixed vertices.
        double slope = dir.field.dot(d);
        if (!(slope < 0.0) && dir.kind == DirectionKind::Lbfgs) {
            dir = {-g, DirectionKind::SteepestDescent};
            slope = dir.field.dot(d);
        }
        if (!(slope < 0.0)) {
            finish("no descent direction");
            break;
        }
        rec.slope = slope;
        rec.direction = dir.kind;

        LineSearchResult ls;
        try {
            ls = line_search(st.mesh, dir.field, rec.objective, slope, p, data, cfg);
        } catch (const Error& err) {
            if (err.code() != ErrorCode::StepFailure) throw;
            st.history.step_failure = true;
            st.history.remesh_recommended = true;
            finish("step failure");
            break;
        }
        rec.alpha = ls.alpha;
        rec.trials = ls.trials;
        st.history.records.push_back(rec);
        if (observer) observer(st, e, g);

        st.last_step = ls.alpha * dir.field;
        st.last_gradient = g;
        st.mesh = std::move(ls.mesh);
        cached = std::move(ls.evaluation);
        ++st.iteration;
    }
    return st;
}

inline OptState optimize(const LabeledMesh& initial, const ShapeProblem& p, const DataField& data,
                         const OptConfig& cfg, const IterationObserver& observer = {}) {
    OptState st;
    st.mesh = initial;
    st.memory = LbfgsMemory(cfg.memory);
    optimize(st, p, data, cfg, observer);
    return st;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json mesh_to_json(const LabeledMesh& m) {
    nlohmann::json v = nlohmann::json::array(), t = nlohmann::json::array(), l = nlohmann::json::array();
    for (const auto& x : m.vertices()) v.push_back({x.x(), x.y()});
    for (const auto& tri : m.triangles()) t.push_back({tri[0], tri[1], tri[2]});
    for (Label lab : m.labels()) l.push_back(static_cast<int>(lab));
    return {{"vertices", v}, {"triangles", t}, {"labels", l}};
}

inline LabeledMesh mesh_from_json(const nlohmann::json& j) {
    std::vector<Vec2> verts;
    std::vector<Tri> tris;
    std::vector<Label> labels;
    for (const auto& x : j.at("vertices")) verts.emplace_back(x.at(0).get<double>(), x.at(1).get<double>());
    for (const auto& t : j.at("triangles")) tris.push_back({t.at(0).get<Index>(), t.at(1).get<Index>(), t.at(2).get<Index>()});
    for (const auto& l : j.at("labels")) {
        const int v = l.get<int>();
        if (v < 0 || v > 2) throw Error(ErrorCode::ParseFailure, "bad label in checkpoint");
        labels.push_back(static_cast<Label>(v));
    }
    return LabeledMesh(std::move(verts), std::move(tris), std::move(labels));
}

inline nlohmann::json vector_to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json to_json(const OptHistory& h) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : h.records)
        recs.push_back({{"iteration", r.iteration}, {"objective", r.objective}, {"tracking", r.tracking},
                        {"perimeter", r.perimeter}, {"gradient_norm", r.gradient_norm}, {"slope", r.slope},
                        {"alpha", r.alpha}, {"trials", r.trials}, {"direction", to_string(r.direction)},
                        {"min_angle_deg", r.min_angle_deg}, {"min_shape_ratio", r.min_shape_ratio}});
    return {{"records", recs}, {"converged", h.converged}, {"step_failure", h.step_failure},
            {"remesh_recommended", h.remesh_recommended}, {"stop_reason", h.stop_reason}};
}

inline OptHistory history_from_json(const nlohmann::json& j) {
    OptHistory h;
    for (const auto& r : j.at("records")) {
        IterationRecord x;
        x.iteration = r.at("iteration");
        x.objective = r.at("objective");
        x.tracking = r.at("tracking");
        x.perimeter = r.at("perimeter");
        x.gradient_norm = r.at("gradient_norm");
        x.slope = r.at("slope");
        x.alpha = r.at("alpha");
        x.trials = r.at("trials");
        x.direction = r.at("direction") == "lbfgs" ? DirectionKind::Lbfgs : DirectionKind::SteepestDescent;
        x.min_angle_deg = r.at("min_angle_deg");
        x.min_shape_ratio = r.at("min_shape_ratio");
        h.records.push_back(x);
    }
    h.converged = j.at("converged");
    h.step_failure = j.at("step_failure");
    h.remesh_recommended = j.at("remesh_recommended");
    h.stop_reason = j.at("stop_reason");
    return h;
}

inline nlohmann::json checkpoint_json(const OptState& st) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : st.memory.pairs()) pairs.push_back({{"s", vector_to_json(p.s)}, {"y", vector_to_json(p.y)}});
    nlohmann::json j = {{"version", kCheckpointVersion},
                        {"mesh", mesh_to_json(st.mesh)},
                        {"mesh_hash", st.mesh.hash()},
                        {"iteration", st.iteration},
                        {"history", to_json(st.history)},
                        {"memory", {{"capacity", st.memory.capacity()}, {"pairs", pairs}}},
                        {"seed", st.seed}};
    if (st.last_step) j["last_step"] = vector_to_json(*st.last_step);
    if (st.last_gradient) j["last_gradient"] = vector_to_json(*st.last_gradient);
    return j;
}

inline OptState state_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw Error(ErrorCode::ParseFailure, "unsupported checkpoint version");
        OptState st;
        st.mesh = mesh_from_json(j.at("mesh"));
        st.iteration = j.at("iteration");
        st.history = history_from_json(j.at("history"));
        st.memory = LbfgsMemory(j.at("memory").at("capacity").get<int>());
        for (const auto& p : j.at("memory").at("pairs"))
            st.memory.push(vector_from_json(p.at("s")), vector_from_json(p.at("y")),
                           [](const VectorXd&, const VectorXd&) { return 1.0; });
        if (j.contains("last_step")) st.last_step = vector_from_json(j["last_step"]);
        if (j.contains("last_gradient")) st.last_gradient = vector_from_json(j["last_gradient"]);
        st.seed = j.at("seed");
        return st;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, const OptState& st) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    out << checkpoint_json(st).dump(1) << '\n';
}

inline OptState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("checkpoint: ") + e.what());
    }
    return state_from_json(j);
}

/// Symmetric Hausdorff distance between two interface polylines, measured
/// from vertices and edge midpoints.
inline double interface_distance(const LabeledMesh& a, const InterfaceCurve& ca, const LabeledMesh& b,
                                 const InterfaceCurve& cb) {
    auto one_sided = [](const LabeledMesh& ma, const InterfaceCurve& xa, const LabeledMesh& mb,
                        const InterfaceCurve& xb) {
        double h = 0.0;
        for (const auto& e : xa.edges) {
            for (const Vec2& p : {ma.vertex(e.a), Vec2(0.5 * (ma.vertex(e.a) + ma.vertex(e.b)))}) {
                double d = std::numeric_limits<double>::infinity();
                for (const auto& f : xb.edges)
                    d = std::min(d, geom::point_segment_distance(p, mb.vertex(f.a), mb.vertex(f.b)));
                h = std::max(h, d);
            }
        }
        return h;
    };
    return std::max(one_sided(a, ca, b, cb), one_sided(b, cb, a, ca));
}

inline double max_interface_edge(const InterfaceCurve& c) {
    double h = 0.0;
    for (const auto& e : c.edges) h = std::max(h, e.length);
    return h;
}

/// Continues a checkpointed run on `mesh`. The interfaces must agree within
/// twice the longest interface edge; L-BFGS memory is kept only when the
/// mesh is the checkpointed one.
inline OptState restart(const OptState& checkpoint, const LabeledMesh& mesh) {
    const auto c0 = derive_interface(checkpoint.mesh);
    const auto c1 = derive_interface(mesh);
    const double dist = interface_distance(checkpoint.mesh, c0, mesh, c1);
    const double limit = 2.0 * std::max(max_interface_edge(c0), max_interface_edge(c1));
    if (!(dist <= limit))
        throw Error(ErrorCode::InterfaceMismatch, "interface moved by " + std::to_string(dist) +
                                                      " on restart, limit " + std::to_string(limit));
    OptState st = checkpoint;
    if (mesh.hash() != checkpoint.mesh.hash()) {
        st.mesh = mesh;
        st.memory.clear();
        st.last_step.reset();
        st.last_gradient.reset();
    }
    return st;
}

}  // namespace ltn
