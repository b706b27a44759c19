#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "dynamics.hpp"
#include "gains.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "sim.hpp"

namespace consensus_net {

using Json = nlohmann::ordered_json;

enum class Mode { matched, unmatched };

[[nodiscard]] inline const char* to_string(Mode m) {
    return m == Mode::matched ? "matched" : "unmatched";
}

struct LyapunovSettings {
    double q_scale = 1.0;  // Q = q_scale * I
    double alpha = 1.0;

    bool operator==(const LyapunovSettings&) const = default;
};

// Positions drawn uniformly from [x_low, x_high] with a fixed seed.
struct RandomInitial {
    std::uint64_t seed = 1;
    double x_low = -1.0;
    double x_high = 1.0;

    bool operator==(const RandomInitial&) const = default;
};

struct InitialSpec {
    Vec x0;
    Vec y0;
    Vec delta_hat0;
    std::optional<RandomInitial> random;

    bool operator==(const InitialSpec& o) const {
        return x0 == o.x0 && y0 == o.y0 && delta_hat0 == o.delta_hat0 && random == o.random;
    }
};

struct Scenario {
    std::string name;
    DirectedGraph graph{Mat::Zero(1, 1)};
    std::variant<MatchedGains, UnmatchedGains> gains;
    LyapunovSettings lyapunov;
    DisturbanceProfile disturbance;
    InitialSpec initial;
    SimParams sim;
    bool fig1_substitute = false;

    [[nodiscard]] Mode mode() const { return std::holds_alternative<MatchedGains>(gains) ? Mode::matched : Mode::unmatched; }
    [[nodiscard]] int n() const { return graph.n_agents(); }
};

// ============================================================================
// JSON reading with field paths
// ============================================================================

namespace detail {

class Field {
public:
    Field(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

    [[nodiscard]] const std::string& path() const { return path_; }
    [[nodiscard]] const Json& json() const { return j_; }

    [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(path_ + ": " + msg); }

    [[nodiscard]] bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    [[nodiscard]] Field operator[](const std::string& key) const {
        if (!j_.is_object()) {
            fail("expected an object");
        }
        const std::string p = path_.empty() ? key : path_ + "." + key;
        if (!j_.contains(key)) {
            throw ValidationError(p + ": missing required field");
        }
        return {j_.at(key), p};
    }

    [[nodiscard]] Field at(std::size_t k) const { return {j_.at(k), path_ + "[" + std::to_string(k) + "]"}; }

    [[nodiscard]] std::size_t array_size() const {
        if (!j_.is_array()) {
            fail("expected an array");
        }
        return j_.size();
    }

    [[nodiscard]] double number() const {
        if (!j_.is_number()) {
            fail("expected a number");
        }
        return j_.get<double>();
    }

    [[nodiscard]] double positive() const {
        const double v = number();
        if (!(v > 0.0)) {
            fail("must be > 0");
        }
        return v;
    }

    [[nodiscard]] int integer() const {
        if (!j_.is_number_integer()) {
            fail("expected an integer");
        }
        return j_.get<int>();
    }

    [[nodiscard]] std::string string() const {
        if (!j_.is_string()) {
            fail("expected a string");
        }
        return j_.get<std::string>();
    }

    [[nodiscard]] bool boolean() const {
        if (!j_.is_boolean()) {
            fail("expected a boolean");
        }
        return j_.get<bool>();
    }

    [[nodiscard]] Vec vector(Eigen::Index n) const {
        const std::size_t size = array_size();
        if (static_cast<Eigen::Index>(size) != n) {
            fail("expected " + std::to_string(n) + " entries, got " + std::to_string(size));
        }
        Vec v(n);
        for (std::size_t k = 0; k < size; ++k) {
            v(static_cast<Eigen::Index>(k)) = at(k).number();
        }
        return v;
    }

private:
    const Json& j_;
    std::string path_;
};

inline Json to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        a.push_back(v(k));
    }
    return a;
}

} // namespace detail

// ============================================================================
// Graph
// ============================================================================

// {"n": int, "edges": [{"from": j, "to": i, "w": a_ij}, ...]} with 1-based indices.
[[nodiscard]] inline DirectedGraph graph_from_json(const detail::Field& f) {
    const int n = f["n"].integer();
    if (n < 1) {
        f["n"].fail("must be >= 1");
    }
    const detail::Field edges = f["edges"];
    std::vector<Edge> list;
    for (std::size_t k = 0; k < edges.array_size(); ++k) {
        const detail::Field e = edges.at(k);
        const int from = e["from"].integer();
        const int to = e["to"].integer();
        const double w = e.has("w") ? e["w"].number() : 1.0;
        if (from < 1 || from > n) {
            e["from"].fail("agent index out of range 1.." + std::to_string(n));
        }
        if (to < 1 || to > n) {
            e["to"].fail("agent index out of range 1.." + std::to_string(n));
        }
        if (from == to) {
            e.fail("self connections are not allowed");
        }
        if (!(w >= 0.0)) {
            e["w"].fail("edge weight must be >= 0");
        }
        list.push_back({from - 1, to - 1, w});
    }
    return DirectedGraph::from_edges(n, list);
}

[[nodiscard]] inline DirectedGraph graph_from_json(const Json& j) {
    return graph_from_json(detail::Field(j, "graph"));
}

[[nodiscard]] inline Json graph_to_json(const DirectedGraph& g) {
    Json edges = Json::array();
    for (const Edge& e : g.edges()) {
        edges.push_back(Json{{"from", e.from + 1}, {"to", e.to + 1}, {"w", e.w}});
    }
    return Json{{"n", g.n_agents()}, {"edges", edges}};
}

// ============================================================================
// Gains, disturbance, initial state
// ============================================================================

[[nodiscard]] inline MatchedGains matched_gains_from_json(const detail::Field& f) {
    MatchedGains g;
    g.gamma1 = f["gamma1"].positive();
    g.gamma2 = f["gamma2"].positive();
    g.gamma3 = f["gamma3"].positive();
    g.mu = f.has("mu") ? f["mu"].positive() : 1.0;
    g.b = f["b"].positive();
    g.gamma4 = f.has("gamma4") ? f["gamma4"].positive() : 2.0 * g.gamma3 * (1.0 + g.mu / g.b) + g.gamma2;
    g.rho = f.has("rho") ? f["rho"].positive() : g.gamma2;
    g.epsilon = f.has("epsilon") ? f["epsilon"].positive() : g.rho / g.gamma2;
    return g;
}

[[nodiscard]] inline UnmatchedGains unmatched_gains_from_json(const detail::Field& f) {
    UnmatchedGains g;
    g.k_x = f["k_x"].positive();
    g.k_d = f["k_d"].positive();
    g.k_s = f["k_s"].positive();
    g.alpha1 = f["alpha1"].positive();
    g.nu = f["nu"].positive();
    g.alpha2 = f.has("alpha2") ? f["alpha2"].positive() : 1.0;
    return g;
}

[[nodiscard]] inline Json gains_to_json(const MatchedGains& g) {
    return Json{{"gamma1", g.gamma1}, {"gamma2", g.gamma2}, {"gamma3", g.gamma3}, {"gamma4", g.gamma4},
                {"mu", g.mu},         {"b", g.b},           {"rho", g.rho},       {"epsilon", g.epsilon}};
}

[[nodiscard]] inline Json gains_to_json(const UnmatchedGains& g) {
    return Json{{"k_x", g.k_x}, {"k_d", g.k_d}, {"k_s", g.k_s},
                {"alpha1", g.alpha1}, {"nu", g.nu}, {"alpha2", g.alpha2}};
}

[[nodiscard]] inline DisturbanceProfile disturbance_from_json(const detail::Field& f, int n) {
    const detail::Field segs = f["segments"];
    std::vector<DisturbanceSegment> out;
    for (std::size_t k = 0; k < segs.array_size(); ++k) {
        const detail::Field s = segs.at(k);
        DisturbanceSegment seg;
        seg.t_start = s["t_start"].number();
        seg.base = s["base"].vector(n);
        seg.hyperbolic_coeff = s.has("hyperbolic_coeff") ? s["hyperbolic_coeff"].number() : 0.0;
        seg.exp_coeff = s.has("exp_coeff") ? s["exp_coeff"].number() : 0.0;
        seg.exp_rate = s.has("exp_rate") ? s["exp_rate"].number() : 0.0;
        seg.offset = s.has("offset") ? s["offset"].positive() : 12.0;
        if (k == 0 && seg.t_start != 0.0) {
            s["t_start"].fail("first segment must start at 0");
        }
        if (k > 0 && !(seg.t_start > out.back().t_start)) {
            s["t_start"].fail("segment start times must increase strictly");
        }
        out.push_back(std::move(seg));
    }
    if (out.empty()) {
        segs.fail("at least one segment is required");
    }
    return DisturbanceProfile(std::move(out));
}

[[nodiscard]] inline Json disturbance_to_json(const DisturbanceProfile& p) {
    Json segs = Json::array();
    for (const auto& s : p.segments()) {
        segs.push_back(Json{{"t_start", s.t_start},
                            {"base", detail::to_json(s.base)},
                            {"hyperbolic_coeff", s.hyperbolic_coeff},
                            {"exp_coeff", s.exp_coeff},
                            {"exp_rate", s.exp_rate},
                            {"offset", s.offset}});
    }
    return Json{{"segments", segs}};
}

[[nodiscard]] inline InitialSpec initial_from_json(const detail::Field& f, int n) {
    InitialSpec init;
    init.x0 = f.has("x0") ? f["x0"].vector(n) : Vec::Zero(n);
    init.y0 = f.has("y0") ? f["y0"].vector(n) : Vec::Zero(n);
    init.delta_hat0 = f.has("delta_hat0") ? f["delta_hat0"].vector(n) : Vec::Zero(n);
    if (f.has("random")) {
        const detail::Field r = f["random"];
        RandomInitial spec;
        const double seed = r["seed"].number();
        if (seed < 0.0 || seed != std::floor(seed)) {
            r["seed"].fail("must be a non-negative integer");
        }
        spec.seed = static_cast<std::uint64_t>(seed);
        spec.x_low = r.has("x_low") ? r["x_low"].number() : -1.0;
        spec.x_high = r.has("x_high") ? r["x_high"].number() : 1.0;
        if (!(spec.x_high > spec.x_low)) {
            r["x_high"].fail("must exceed x_low");
        }
        init.random = spec;
    }
    return init;
}

[[nodiscard]] inline Json initial_to_json(const InitialSpec& init) {
    Json j{{"x0", detail::to_json(init.x0)},
           {"y0", detail::to_json(init.y0)},
           {"delta_hat0", detail::to_json(init.delta_hat0)}};
    if (init.random) {
        j["random"] = Json{{"seed", init.random->seed}, {"x_low", init.random->x_low}, {"x_high", init.random->x_high}};
    }
    return j;
}

// Initial state; with a random spec the positions replace x0.
[[nodiscard]] inline SimState initial_state(const Scenario& s) {
    SimState st{s.initial.x0, s.initial.y0, s.initial.delta_hat0, 0.0};
    if (s.initial.random) {
        std::mt19937_64 rng(s.initial.random->seed);
        std::uniform_real_distribution<double> dist(s.initial.random->x_low, s.initial.random->x_high);
        for (Eigen::Index i = 0; i < st.x.size(); ++i) {
            st.x(i) = dist(rng);
        }
    }
    return st;
}

// ============================================================================
// Scenario
// ============================================================================

[[nodiscard]] inline Scenario scenario_from_json(const Json& j) {
    const detail::Field root(j, "");
    if (!j.is_object()) {
        throw ValidationError("scenario: top level must be a JSON object");
    }
    Scenario s;
    s.name = root["name"].string();
    s.graph = graph_from_json(root["graph"]);
    const int n = s.graph.n_agents();

    const std::string mode = root["mode"].string();
    if (mode == "matched") {
        s.gains = matched_gains_from_json(root["gains"]);
    } else if (mode == "unmatched") {
        s.gains = unmatched_gains_from_json(root["gains"]);
    } else {
        root["mode"].fail("expected \"matched\" or \"unmatched\"");
    }

    if (root.has("lyapunov")) {
        const detail::Field l = root["lyapunov"];
        s.lyapunov.q_scale = l.has("q_scale") ? l["q_scale"].positive() : 1.0;
        s.lyapunov.alpha = l.has("alpha") ? l["alpha"].positive() : 1.0;
    }
    s.disturbance = disturbance_from_json(root["disturbance"], n);
    s.initial = root.has("initial") ? initial_from_json(root["initial"], n)
                                    : InitialSpec{Vec::Zero(n), Vec::Zero(n), Vec::Zero(n), RandomInitial{}};
    if (root.has("sim")) {
        const detail::Field p = root["sim"];
        s.sim.t_final = p.has("t_final") ? p["t_final"].positive() : s.sim.t_final;
        s.sim.dt = p.has("dt") ? p["dt"].positive() : s.sim.dt;
        s.sim.sample_every = p.has("sample_every") ? p["sample_every"].integer() : s.sim.sample_every;
        if (s.sim.sample_every < 1) {
            p["sample_every"].fail("must be >= 1");
        }
        if (s.sim.dt > s.sim.t_final) {
            p["dt"].fail("must not exceed t_final");
        }
    }
    s.fig1_substitute = root.has("fig1_substitute") ? root["fig1_substitute"].boolean() : false;
    return s;
}

[[nodiscard]] inline Json scenario_to_json(const Scenario& s) {
    Json j;
    j["name"] = s.name;
    j["mode"] = to_string(s.mode());
    j["fig1_substitute"] = s.fig1_substitute;
    j["graph"] = graph_to_json(s.graph);
    j["gains"] = std::visit([](const auto& g) { return gains_to_json(g); }, s.gains);
    j["lyapunov"] = Json{{"q_scale", s.lyapunov.q_scale}, {"alpha", s.lyapunov.alpha}};
    j["disturbance"] = disturbance_to_json(s.disturbance);
    j["initial"] = initial_to_json(s.initial);
    j["sim"] = Json{{"t_final", s.sim.t_final}, {"dt", s.sim.dt}, {"sample_every", s.sim.sample_every}};
    return j;
}

// ============================================================================
// Built-in reproductions of the two published simulation studies
// ============================================================================

// Five agents rooted at agent 1 with unit edges 1->2, 2->3, 3->4, 2->5. The
// published topology is only available as a figure; this is a stand-in.
[[nodiscard]] inline DirectedGraph default_graph() {
    return DirectedGraph::from_edges(5, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {1, 4, 1.0}});
}

// d = (0.1, -0.1, 0.2, -0.2, 0.1) + 1/(12+t) before the switch and
// d = (0.2, -0.2, -0.1, 0.2, -0.3) + exp(-0.2 t)/(12+t) after it.
[[nodiscard]] inline DisturbanceProfile switching_disturbance(double switch_time) {
    DisturbanceSegment first;
    first.t_start = 0.0;
    first.base = (Vec(5) << 0.1, -0.1, 0.2, -0.2, 0.1).finished();
    first.hyperbolic_coeff = 1.0;
    DisturbanceSegment second;
    second.t_start = switch_time;
    second.base = (Vec(5) << 0.2, -0.2, -0.1, 0.2, -0.3).finished();
    second.exp_coeff = 1.0;
    second.exp_rate = 0.2;
    return DisturbanceProfile({first, second});
}

[[nodiscard]] inline MatchedGains reference_matched_gains() {
    MatchedGains g;
    g.gamma1 = 6.0;
    g.gamma2 = 17.0;
    g.gamma3 = 4.0;
    g.b = 10.0;
    g.mu = 1.0;
    g.gamma4 = 2.0 * g.gamma3 * (1.0 + g.mu / g.b) + g.gamma2;  // 25.8
    g.rho = g.gamma2;
    g.epsilon = g.rho / g.gamma2;
    return g;
}

[[nodiscard]] inline UnmatchedGains reference_unmatched_gains() {
    return {.k_x = 3.4, .k_d = 7.5, .k_s = 5.0, .alpha1 = 7.5, .nu = 3.0, .alpha2 = 1.0};
}

[[nodiscard]] inline Scenario reference_matched() {
    Scenario s;
    s.name = "paper-matched";
    s.graph = default_graph();
    s.gains = reference_matched_gains();
    s.disturbance = switching_disturbance(50.0);
    s.initial = {(Vec(5) << 1.0, -0.5, 0.5, -1.0, 0.0).finished(), Vec::Zero(5), Vec::Zero(5), std::nullopt};
    s.sim = {100.0, 1e-3, 10};
    s.fig1_substitute = true;
    return s;
}

[[nodiscard]] inline Scenario reference_unmatched() {
    Scenario s;
    s.name = "paper-unmatched";
    s.graph = default_graph();
    s.gains = reference_unmatched_gains();
    s.disturbance = switching_disturbance(20.0);
    // Nonzero y0 on the root agent so that v^T ytilde starts away from zero.
    s.initial = {(Vec(5) << 1.0, -0.5, 0.5, -1.0, 0.0).finished(),
                 (Vec(5) << 0.5, -0.5, 0.25, -0.25, 0.0).finished(), Vec::Zero(5), std::nullopt};
    s.sim = {40.0, 1e-3, 10};
    s.fig1_substitute = true;
    return s;
}

[[nodiscard]] inline std::optional<Scenario> builtin_scenario(const std::string& name) {
    if (name == "paper-matched") {
        return reference_matched();
    }
    if (name == "paper-unmatched") {
        return reference_unmatched();
    }
    return std::nullopt;
}

// Accepts a built-in name or a path to a scenario JSON file.
[[nodiscard]] inline Scenario load_scenario(const std::string& path_or_name) {
    if (!std::filesystem::exists(path_or_name)) {
        if (auto s = builtin_scenario(path_or_name)) {
            return *s;
        }
        throw IoError("scenario '" + path_or_name + "' is neither a file nor a built-in (paper-matched, paper-unmatched)");
    }
    Json j;
    try {
        j = Json::parse(io::read_file(path_or_name));
    } catch (const Json::parse_error& e) {
        throw ValidationError(path_or_name + ": invalid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

inline void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    io::write_atomic(path, scenario_to_json(s).dump(2) + "\n");
}

} // namespace consensus_net
