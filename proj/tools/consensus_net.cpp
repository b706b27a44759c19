#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include <consensus_net/consensus_net.hpp>

namespace cn = consensus_net;
namespace fs = std::filesystem;

namespace {

enum Exit : int { ok = 0, failure = 1, validation = 2, divergence = 3, io_failure = 4 };

int exit_code(const std::exception_ptr& ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const cn::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return divergence;
    } catch (const cn::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return io_failure;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return io_failure;
    } catch (const cn::Error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}

fs::path default_out(const std::string& name) {
    if (const char* env = std::getenv("CONSENSUS_NET_OUT"); env && *env) {
        return fs::path(env) / name;
    }
    return fs::path("out") / name;
}

std::string vec_str(const cn::Vec& v) {
    std::vector<std::string> parts;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        parts.push_back(fmt::format("{:.6g}", v(i)));
    }
    return fmt::format("({})", fmt::join(parts, ", "));
}

void print_report(const cn::CertificationReport& r, cn::Mode mode) {
    fmt::print("{:<22} {:>14} {:>14} {:>14}  {}\n", "check", "lhs", "rhs", "margin", "status");
    for (const auto& c : r.checks) {
        fmt::print("{:<22} {:>14.6g} {:>14.6g} {:>14.6g}  {}\n", c.name, c.lhs, c.rhs, c.margin,
                   c.satisfied() ? "ok" : "FAILED");
    }
    fmt::print("min eig {:<14} {:.6g}\n", mode == cn::Mode::matched ? "N" : "M", r.min_eig_N_or_M);
    fmt::print("certification: {}\n", r.passed ? "PASSED" : "FAILED");
}

cn::DirectedGraph load_graph_file(const std::string& path) {
    cn::Json j;
    try {
        j = cn::Json::parse(cn::io::read_file(path));
    } catch (const cn::Json::parse_error& e) {
        throw cn::ValidationError(path + ": invalid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("graph")) {
        return cn::graph_from_json(j["graph"]);
    }
    return cn::graph_from_json(j);
}

int graph_analyze(const std::string& path, bool json) {
    const auto g = load_graph_file(path);
    const auto lap = cn::build_laplacian(g);
    cn::Json out{{"n", g.n_agents()},
                 {"has_spanning_tree", lap.has_spanning_tree},
                 {"lambda_L", lap.lambda_L},
                 {"nonzero_eigenvalue_real_parts_positive", lap.nonzero_eigenvalue_real_parts_positive},
                 {"laplacian", cn::matrix_to_json(lap.L)}};
    std::optional<cn::LyapunovCertificate> cert;
    if (lap.has_spanning_tree) {
        out["v_left"] = cn::detail::to_json(lap.v_left);
        cert = cn::solve_P(lap);
        out["certificate"] = cn::certificate_to_json(*cert);
    }
    if (json) {
        std::cout << out.dump(2) << "\n";
        return ok;
    }
    fmt::print("agents               {}\n", g.n_agents());
    fmt::print("spanning tree        {}\n", lap.has_spanning_tree ? "yes" : "no");
    fmt::print("lambda_L = ||L||_2   {:.6g}\n", lap.lambda_L);
    fmt::print("Re(lambda) > 0       {}\n", lap.nonzero_eigenvalue_real_parts_positive ? "yes" : "no");
    fmt::print("eigenvalues of L    ");
    for (const auto& z : cn::eigenvalues_by_modulus(lap.L)) {
        fmt::print(" {:.6g}{:+.6g}i", z.real(), z.imag());
    }
    fmt::print("\n");
    if (cert) {
        fmt::print("v_left               {}\n", vec_str(lap.v_left));
        fmt::print("lambda_P = ||P||_2   {:.6g}\n", cert->lambda_P);
        fmt::print("min eig P            {:.6g}\n", cert->min_eig_P);
        fmt::print("cond(P)              {:.6g}\n", cert->condition_number);
        fmt::print("residual             {:.3g}\n", cert->residual);
    }
    return ok;
}

int gains_certify(const std::string& name, bool json) {
    const auto s = cn::load_scenario(name);
    const auto lap = cn::build_laplacian(s.graph);
    const auto cert = cn::solve_P(lap, s.lyapunov.q_scale, s.lyapunov.alpha);
    const auto report = cn::certify(s, lap, cert);
    if (json) {
        cn::Json out = cn::certificate_to_json(cert);
        out["report"] = cn::report_to_json(report, s.mode());
        std::cout << out.dump(2) << "\n";
    } else {
        fmt::print("scenario {} ({})\n", s.name, cn::to_string(s.mode()));
        print_report(report, s.mode());
    }
    return ok;
}

int gains_suggest(const std::string& name) {
    const auto s = cn::load_scenario(name);
    const auto lap = cn::build_laplacian(s.graph);
    const auto cert = cn::solve_P(lap, s.lyapunov.q_scale, s.lyapunov.alpha);
    const cn::Json out = std::visit(
        [&](const auto& g) {
            if constexpr (std::is_same_v<std::decay_t<decltype(g)>, cn::MatchedGains>) {
                return cn::gains_to_json(cn::suggest_matched(g.gamma1, g.gamma3, g.mu, g.b, lap, cert));
            } else {
                return cn::gains_to_json(cn::suggest_unmatched(g.k_x, g.k_s, g.alpha2, lap, cert));
            }
        },
        s.gains);
    std::cout << out.dump(2) << "\n";
    return ok;
}

struct SimulateOptions {
    std::string scenario;
    std::string out;
    std::optional<double> t_final;
    std::optional<double> dt;
    bool align = false;
};

cn::Scenario prepare(const SimulateOptions& o) {
    cn::Scenario s = cn::load_scenario(o.scenario);
    if (o.t_final) {
        s.sim.t_final = *o.t_final;
    }
    if (o.dt) {
        s.sim.dt = *o.dt;
    }
    if (o.align) {
        auto times = s.disturbance.switch_times();
        times.push_back(s.sim.t_final);
        s.sim.dt = cn::align_dt(s.sim.dt, s.sim.t_final, times);
    }
    return s;
}

int simulate(const SimulateOptions& o) {
    const cn::Scenario s = prepare(o);
    const fs::path dir = o.out.empty() ? default_out(s.name) : fs::path(o.out);
    cn::RunResult r;
    const auto paths = cn::run(s, dir, &r);
    fmt::print("scenario      {} ({}), dt = {:.6g}, t_final = {:.6g}\n", s.name, cn::to_string(s.mode()), s.sim.dt,
               s.sim.t_final);
    fmt::print("certification {}\n", r.report.passed ? "PASSED" : "FAILED (simulated anyway)");
    fmt::print("samples       {}\n", r.trajectory.size());
    fmt::print("artifacts     {}\n", dir.string());
    for (const auto& p : {paths.trajectory_csv, paths.trajectory_meta, paths.metrics_csv, paths.summary_json,
                          paths.certification_json}) {
        fmt::print("  {}\n", p.filename().string());
    }
    return ok;
}

int batch(const std::vector<std::string>& scenarios, const std::string& out, unsigned jobs) {
    const fs::path root = out.empty() ? default_out("batch") : fs::path(out);
    std::atomic<std::size_t> next{0};
    std::vector<int> codes(scenarios.size(), ok);
    std::mutex print_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < scenarios.size(); k = next++) {
            try {
                const cn::Scenario s = cn::load_scenario(scenarios[k]);
                cn::run(s, root / s.name);
                const std::lock_guard lock(print_mutex);
                fmt::print("{:<30} ok\n", scenarios[k]);
            } catch (...) {
                const std::lock_guard lock(print_mutex);
                codes[k] = exit_code(std::current_exception());
                fmt::print("{:<30} failed (exit {})\n", scenarios[k], codes[k]);
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(scenarios.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    int worst = ok;
    for (int c : codes) {
        worst = std::max(worst, c);
    }
    return worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consensus control toolkit for disturbed double-integrator networks"};
    app.require_subcommand(1);

    auto* graph = app.add_subcommand("graph", "Graph utilities");
    graph->require_subcommand(1);
    auto* analyze = graph->add_subcommand("analyze", "Laplacian, spanning tree, left eigenvector and P");
    std::string graph_file;
    bool graph_json = false;
    analyze->add_option("file", graph_file, "graph JSON (or scenario JSON)")->required();
    analyze->add_flag("--json", graph_json, "print JSON");

    auto* gains = app.add_subcommand("gains", "Gain certification");
    gains->require_subcommand(1);
    auto* certify = gains->add_subcommand("certify", "Check every gain condition");
    std::string certify_scenario;
    bool certify_json = false;
    certify->add_option("scenario", certify_scenario, "scenario file or built-in name")->required();
    certify->add_flag("--json", certify_json, "print JSON");
    auto* suggest = gains->add_subcommand("suggest", "Certified gains from the scenario's free parameters");
    std::string suggest_scenario;
    suggest->add_option("scenario", suggest_scenario, "scenario file or built-in name")->required();

    auto* sim = app.add_subcommand("simulate", "Run a scenario and write artifacts");
    SimulateOptions sim_opts;
    double t_final = 0.0;
    double dt = 0.0;
    sim->add_option("scenario", sim_opts.scenario, "scenario file or built-in name")->required();
    sim->add_option("--out", sim_opts.out, "output directory");
    auto* t_opt = sim->add_option("--t-final", t_final, "final time [s]")->check(CLI::PositiveNumber);
    auto* dt_opt = sim->add_option("--dt", dt, "step size [s]")->check(CLI::PositiveNumber);
    sim->add_flag("--align-dt", sim_opts.align, "shrink dt so switch times and t_final lie on the grid");

    auto* plot_cmd = app.add_subcommand("plot", "Render an SVG chart from run artifacts");
    std::string plot_dir;
    std::string series;
    plot_cmd->add_option("dir", plot_dir, "artifact directory")->required();
    plot_cmd->add_option("--series", series, "x | y | dhat | errors | lyapunov")->required();

    auto* batch_cmd = app.add_subcommand("batch", "Run several scenarios in parallel");
    std::vector<std::string> batch_scenarios;
    std::string batch_out;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    batch_cmd->add_option("scenarios", batch_scenarios, "scenario files or built-in names")->required();
    batch_cmd->add_option("--out", batch_out, "root output directory");
    batch_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : validation;
    }

    try {
        if (analyze->parsed()) {
            return graph_analyze(graph_file, graph_json);
        }
        if (certify->parsed()) {
            return gains_certify(certify_scenario, certify_json);
        }
        if (suggest->parsed()) {
            return gains_suggest(suggest_scenario);
        }
        if (sim->parsed()) {
            if (*t_opt) {
                sim_opts.t_final = t_final;
            }
            if (*dt_opt) {
                sim_opts.dt = dt;
            }
            return simulate(sim_opts);
        }
        if (plot_cmd->parsed()) {
            fmt::print("{}\n", cn::plot(plot_dir, series).string());
            return ok;
        }
        if (batch_cmd->parsed()) {
            return batch(batch_scenarios, batch_out, jobs);
        }
    } catch (...) {
        return exit_code(std::current_exception());
    }
    return failure;
}
