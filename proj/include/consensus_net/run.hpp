#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "analysis.hpp"
#include "core.hpp"
#include "dynamics.hpp"
#include "gains.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "scenario.hpp"
#include "sim.hpp"
#include "spectral.hpp"

namespace consensus_net {

// ============================================================================
// JSON views of results
// ============================================================================

[[nodiscard]] inline Json matrix_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

[[nodiscard]] inline Json certificate_to_json(const LyapunovCertificate& c) {
    return Json{{"n", c.n()},
                {"alpha", c.alpha},
                {"P", matrix_to_json(c.P)},
                {"residual", c.residual},
                {"lambda_P", c.lambda_P},
                {"lambda_L", c.lambda_L},
                {"min_eig_P", c.min_eig_P},
                {"condition_number", c.condition_number}};
}

[[nodiscard]] inline Json report_to_json(const CertificationReport& r, Mode mode) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        checks.push_back(Json{{"name", c.name},
                              {"inequality", c.inequality},
                              {"lhs", c.lhs},
                              {"rhs", c.rhs},
                              {"margin", c.margin},
                              {"strict", c.strict},
                              {"satisfied", c.satisfied()}});
    }
    Json j{{"passed", r.passed}, {"checks", checks}};
    j[mode == Mode::matched ? "min_eig_N" : "min_eig_M"] = r.min_eig_N_or_M;
    if (r.has_D) {
        j["min_eig_D"] = r.min_eig_D;
    }
    return j;
}

// ============================================================================
// Execution
// ============================================================================

struct RunResult {
    Scenario scenario;
    LaplacianData laplacian;
    LyapunovCertificate certificate;
    CertificationReport report;
    Trajectory trajectory;
    std::vector<MetricsRow> metrics;
    Json summary;
};

[[nodiscard]] inline CertificationReport certify(const Scenario& s, const LaplacianData& lap,
                                                 const LyapunovCertificate& cert) {
    return std::visit(
        [&](const auto& g) {
            if constexpr (std::is_same_v<std::decay_t<decltype(g)>, MatchedGains>) {
                return certify_matched(g, lap, cert);
            } else {
                return certify_unmatched(g, lap, cert);
            }
        },
        s.gains);
}

namespace detail {

inline Json vec_json(const Vec& v) { return to_json(v); }

template <class F>
Json try_fit(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return Json{{"error", e.what()}};
    }
}

inline Window clamp_window(Window w, double t_final) {
    return {std::min(w.t0, t_final), std::min(w.t1, t_final)};
}

inline Json matched_summary(const RunResult& r, const MatchedGains& g) {
    const Trajectory& traj = r.trajectory;
    const auto& p = r.scenario.disturbance;
    Json j;

    std::vector<double> ex;
    for (const auto& row : r.metrics) {
        ex.push_back(row.norm_e_x);
    }
    const double t_end = traj.times.back();
    const auto switches = p.switch_times();
    const double first_regime_end = switches.empty() ? t_end : std::min(switches.front(), t_end);
    const Window w = clamp_window({0.5, 2.5}, t_end);
    j["decay_rate"] = try_fit([&] {
        return Json{{"signal", "norm_e_x"}, {"window", {w.t0, w.t1}}, {"rate", fit_exponential_decay(traj.times, ex, w)}};
    });

    Json limits = Json::array();
    auto add_limit = [&](double t, const std::string& label) {
        const auto lim = estimation_at(traj, p, g, t);
        limits.push_back(Json{{"label", label},
                              {"t", lim.t},
                              {"delta_hat", vec_json(lim.delta_hat)},
                              {"predicted", vec_json(lim.predicted)},
                              {"max_abs_error", (lim.delta_hat - lim.predicted).cwiseAbs().maxCoeff()}});
    };
    if (first_regime_end < t_end) {
        // Last sample strictly before the switch.
        const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), first_regime_end);
        if (it != traj.times.begin()) {
            add_limit(*std::prev(it), "before_switch");
        }
    }
    add_limit(t_end, "final");
    j["estimation_limits"] = limits;

    j["S_hurwitz"] = is_S_hurwitz(g);
    j["c1"] = r.metrics.back().mf.x_m - r.metrics.front().mf.x_m;
    j["settle_time_1e-3"] = Json{{"norm_e_x", nullptr}, {"norm_e_y", nullptr}, {"norm_e_d", nullptr}};
    std::vector<double> ey;
    std::vector<double> ed;
    for (const auto& row : r.metrics) {
        ey.push_back(row.norm_e_y);
        ed.push_back(row.norm_e_d);
    }
    const std::pair<const char*, const std::vector<double>*> series[] = {
        {"norm_e_x", &ex}, {"norm_e_y", &ey}, {"norm_e_d", &ed}};
    for (const auto& [name, values] : series) {
        const double ts = settle_time(traj.times, *values, 1e-3);
        if (ts >= 0.0) {
            j["settle_time_1e-3"][name] = ts;
        }
    }
    return j;
}

inline Json unmatched_summary(const RunResult& r, const UnmatchedGains& g) {
    const Trajectory& traj = r.trajectory;
    const auto& p = r.scenario.disturbance;
    const Vec& v = r.laplacian.v_left;
    const double t_end = traj.times.back();
    Json j;

    std::vector<double> ym;
    for (const auto& row : r.metrics) {
        ym.push_back(row.mf.y_m);
    }
    const Window decay_w = clamp_window({0.5, 2.5}, t_end);
    j["decay_rate"] = try_fit([&] {
        return Json{{"signal", "y_m"},
                    {"window", {decay_w.t0, decay_w.t1}},
                    {"rate", fit_exponential_decay(traj.times, ym, decay_w)},
                    {"predicted", g.k_d}};
    });

    const auto switches = p.switch_times();
    const double orbit_start = (!switches.empty() && switches.front() < t_end) ? switches.front() : 0.5 * t_end;
    const Window orbit_w{orbit_start, t_end};
    Json fits = Json::array();
    for (int i = 0; i < r.scenario.n(); ++i) {
        fits.push_back(try_fit([&] {
            const OrbitFit f = fit_orbit(traj.times, agent_series(traj, Component::x, i), orbit_w);
            return Json{{"agent", i + 1},
                        {"angular_frequency", f.angular_frequency},
                        {"amplitude", f.amplitude},
                        {"phase", f.phase},
                        {"offset", f.offset},
                        {"residual", f.residual}};
        }));
    }
    j["orbit_fit"] = Json{{"signal", "x_i"},
                          {"window", {orbit_w.t0, orbit_w.t1}},
                          {"predicted_frequency", unmatched_orbit_frequency(g)},
                          {"sqrt_alpha1", std::sqrt(g.alpha1)},
                          {"agents", fits}};

    const Window late{std::max(0.0, t_end - 2.0), t_end};
    j["output_orbit_error"] = Json{{"window", {late.t0, late.t1}},
                                   {"max_abs", output_orbit_error(traj, v, g, p, late)}};
    return j;
}

} // namespace detail

// Laplacian, certificate, certification, integration and analysis. Throws
// DivergenceError carrying the partial trajectory.
[[nodiscard]] inline RunResult execute(const Scenario& s) {
    RunResult r;
    r.scenario = s;
    r.laplacian = build_laplacian(s.graph);
    if (!r.laplacian.has_spanning_tree) {
        throw ValidationError("graph: no directed spanning tree");
    }
    r.certificate = solve_P(r.laplacian, s.lyapunov.q_scale, s.lyapunov.alpha);
    r.report = certify(s, r.laplacian, r.certificate);

    const SimState x0 = initial_state(s);
    const auto switches = s.disturbance.switch_times();
    std::visit(
        [&](const auto& g) {
            const ClosedLoop<std::decay_t<decltype(g)>> loop(g, r.laplacian, s.disturbance);
            r.trajectory = integrate(loop, x0, s.sim, switches);
        },
        s.gains);
    r.trajectory.scenario_id = s.name;
    r.trajectory.gain_report = r.report;

    std::visit(
        [&](const auto& g) {
            r.metrics = compute_metrics(r.trajectory, r.laplacian.v_left, g, s.disturbance, r.certificate.P);
        },
        s.gains);

    double projector = 0.0;
    for (const auto& row : r.metrics) {
        projector = std::max(projector, row.projector_residual);
    }
    r.summary = Json{{"scenario", s.name},
                     {"mode", to_string(s.mode())},
                     {"t_final", r.trajectory.times.back()},
                     {"samples", r.trajectory.size()},
                     {"certification_passed", r.report.passed},
                     {"v_left", detail::vec_json(r.laplacian.v_left)},
                     {"max_projector_residual", projector}};
    const Json specific = std::visit(
        [&](const auto& g) {
            if constexpr (std::is_same_v<std::decay_t<decltype(g)>, MatchedGains>) {
                return detail::matched_summary(r, g);
            } else {
                return detail::unmatched_summary(r, g);
            }
        },
        s.gains);
    for (const auto& [key, value] : specific.items()) {
        r.summary[key] = value;
    }
    return r;
}

// ============================================================================
// Artifacts
// ============================================================================

struct RunArtifacts {
    std::filesystem::path trajectory_csv;
    std::filesystem::path trajectory_meta;
    std::filesystem::path metrics_csv;
    std::filesystem::path summary_json;
    std::filesystem::path certification_json;
};

[[nodiscard]] inline RunArtifacts artifact_paths(const std::filesystem::path& dir) {
    return {dir / "trajectory.csv", dir / "trajectory.meta.json", dir / "metrics.csv", dir / "summary.json",
            dir / "certification.json"};
}

[[nodiscard]] inline std::string trajectory_csv(const Trajectory& traj, int n) {
    std::string out = "t";
    for (const char* prefix : {"x_", "y_", "dhat_"}) {
        for (int i = 1; i <= n; ++i) {
            out += ",";
            out += prefix;
            out += std::to_string(i);
        }
    }
    out += "\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out += io::format_number(traj.times[k]);
        const Vec z = traj.states[k].stacked();
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            out += ",";
            out += io::format_number(z(i));
        }
        out += "\n";
    }
    return out;
}

[[nodiscard]] inline std::string metrics_csv(const std::vector<MetricsRow>& rows, Mode mode) {
    std::string out = "t,norm_e_x,norm_e_y,norm_e_d,x_m,y_m,delta_m,";
    out += mode == Mode::matched ? "H\n" : "W\n";
    for (const auto& r : rows) {
        for (double v : {r.t, r.norm_e_x, r.norm_e_y, r.norm_e_d, r.mf.x_m, r.mf.y_m, r.mf.delta_m}) {
            out += io::format_number(v);
            out += ",";
        }
        out += io::format_number(r.lyapunov);
        out += "\n";
    }
    return out;
}

[[nodiscard]] inline Json trajectory_meta(const Scenario& s, const std::optional<CertificationReport>& report,
                                          std::size_t samples, std::optional<double> diverged_after) {
    Json j{{"scenario", scenario_to_json(s)}, {"samples", samples}};
    j["gains"] = std::visit([](const auto& g) { return gains_to_json(g); }, s.gains);
    j["certification"] = report ? report_to_json(*report, s.mode()) : Json(nullptr);
    if (diverged_after) {
        j["diverged_after"] = *diverged_after;
    }
    return j;
}

// Runs the scenario and writes all artifacts into out_dir. On divergence
// the partial trajectory and its metadata are written before rethrowing.
inline RunArtifacts run(const Scenario& s, const std::filesystem::path& out_dir, RunResult* result = nullptr) {
    io::ensure_directory(out_dir);
    const RunArtifacts paths = artifact_paths(out_dir);
    RunResult r;
    try {
        r = execute(s);
    } catch (const DivergenceError& e) {
        // Certification is cheap and already succeeded if integration started.
        const LaplacianData lap = build_laplacian(s.graph);
        const auto report = certify(s, lap, solve_P(lap, s.lyapunov.q_scale, s.lyapunov.alpha));
        io::write_atomic(paths.trajectory_csv, trajectory_csv(e.partial(), s.n()));
        io::write_atomic(paths.trajectory_meta,
                         trajectory_meta(s, report, e.partial().size(), e.last_finite_time()).dump(2) + "\n");
        throw;
    }
    io::write_atomic(paths.trajectory_csv, trajectory_csv(r.trajectory, s.n()));
    io::write_atomic(paths.trajectory_meta,
                     trajectory_meta(s, r.report, r.trajectory.size(), std::nullopt).dump(2) + "\n");
    io::write_atomic(paths.metrics_csv, metrics_csv(r.metrics, s.mode()));
    io::write_atomic(paths.summary_json, r.summary.dump(2) + "\n");
    Json cert = certificate_to_json(r.certificate);
    cert["report"] = report_to_json(r.report, s.mode());
    io::write_atomic(paths.certification_json, cert.dump(2) + "\n");
    if (result) {
        *result = std::move(r);
    }
    return paths;
}

} // namespace consensus_net
