#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "dynamics.hpp"
#include "gains.hpp"

namespace consensus_net {

struct SimParams {
    double t_final = 100.0;
    double dt = 1e-3;
    int sample_every = 10;

    bool operator==(const SimParams&) const = default;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<SimState> states;
    std::string scenario_id;
    std::optional<CertificationReport> gain_report;

    [[nodiscard]] std::size_t size() const { return times.size(); }
    [[nodiscard]] bool empty() const { return times.empty(); }

    // Sample whose time is within half a sample spacing of t.
    [[nodiscard]] const SimState& at(double t) const {
        if (times.empty()) {
            throw ValidationError("trajectory: empty");
        }
        const double spacing = times.size() > 1 ? times[1] - times[0] : 1.0;
        const auto k = static_cast<long long>(std::llround(t / spacing));
        if (k < 0 || static_cast<std::size_t>(k) >= times.size() || std::abs(times[static_cast<std::size_t>(k)] - t) > 1e-6 * spacing) {
            throw ValidationError("trajectory: no sample at t = " + std::to_string(t));
        }
        return states[static_cast<std::size_t>(k)];
    }
};

// Thrown when the state leaves the finite range. Carries the samples
// recorded so far, all finite.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double last_finite_time, std::shared_ptr<Trajectory> partial)
        : Error(what), last_finite_time_(last_finite_time), partial_(std::move(partial)) {}

    [[nodiscard]] double last_finite_time() const { return last_finite_time_; }
    [[nodiscard]] const Trajectory& partial() const { return *partial_; }

private:
    double last_finite_time_;
    std::shared_ptr<Trajectory> partial_;
};

template <class F>
concept SwitchedField = requires(const F& f, double t, const Vec& z, std::size_t seg) {
    { f(t, z, seg) } -> std::convertible_to<Vec>;
};

template <class F>
concept SmoothField = requires(const F& f, double t, const Vec& z) {
    { f(t, z) } -> std::convertible_to<Vec>;
};

namespace detail {

// Number of dt steps that make up `t`, or nullopt when t is off the grid.
inline std::optional<std::int64_t> grid_steps(double t, double dt) {
    const double k = t / dt;
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-9 * std::max(1.0, std::abs(r))) {
        return std::nullopt;
    }
    return static_cast<std::int64_t>(r);
}

inline std::int64_t validate_grid(const SimParams& p, const std::vector<double>& switch_times) {
    if (!(p.t_final > 0.0) || !std::isfinite(p.t_final)) {
        throw ValidationError("sim: t_final must be positive");
    }
    if (!(p.dt > 0.0) || p.dt > p.t_final) {
        throw ValidationError("sim: dt must satisfy 0 < dt <= t_final");
    }
    if (p.sample_every < 1) {
        throw ValidationError("sim: sample_every must be >= 1");
    }
    const auto steps = grid_steps(p.t_final, p.dt);
    if (!steps) {
        throw ValidationError("sim: t_final = " + std::to_string(p.t_final) +
                              " is not an integer multiple of dt = " + std::to_string(p.dt));
    }
    for (double ts : switch_times) {
        if (ts < p.t_final && !grid_steps(ts, p.dt)) {
            throw ValidationError("sim: disturbance switch at t = " + std::to_string(ts) +
                                  " is not an integer multiple of dt = " + std::to_string(p.dt) +
                                  " (use --align-dt)");
        }
    }
    return *steps;
}

} // namespace detail

// Largest dt <= requested such that t_final and every switch time are
// integer multiples of it. Candidates are t_final / m for increasing m.
[[nodiscard]] inline double align_dt(double requested, double t_final, const std::vector<double>& switch_times) {
    if (!(requested > 0.0) || !(t_final > 0.0)) {
        throw ValidationError("align_dt: dt and t_final must be positive");
    }
    const auto m0 = static_cast<std::int64_t>(std::ceil(t_final / requested - 1e-9));
    for (std::int64_t m = std::max<std::int64_t>(m0, 1); m < m0 + 10'000'000; ++m) {
        const double dt = t_final / static_cast<double>(m);
        bool ok = true;
        for (double ts : switch_times) {
            if (ts < t_final && !detail::grid_steps(ts, dt)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            return dt;
        }
    }
    throw ValidationError("align_dt: no step size divides all switch times");
}

// Classical fixed-step RK4. Step k covers [k dt, (k+1) dt] and evaluates
// every stage in the disturbance segment active at its left endpoint, so a
// switch at a grid point takes effect exactly from that step on.
template <SwitchedField F>
[[nodiscard]] Trajectory integrate(const F& field, const SimState& x0, const SimParams& params,
                                   const std::vector<double>& switch_times = {}) {
    x0.validate();
    const std::int64_t steps = detail::validate_grid(params, switch_times);

    std::vector<std::int64_t> switch_steps;
    for (double ts : switch_times) {
        switch_steps.push_back(*detail::grid_steps(ts, params.dt));
    }

    // Horizons shorter than one sampling interval still record their end.
    const std::int64_t every = std::min<std::int64_t>(params.sample_every, steps);
    auto traj = std::make_shared<Trajectory>();
    const auto n_samples = static_cast<std::size_t>(steps / every + 1);
    traj->times.reserve(n_samples);
    traj->states.reserve(n_samples);

    Vec z = x0.stacked();
    if (!z.allFinite()) {
        throw ValidationError("sim: initial state is not finite");
    }
    const double h = params.dt;
    traj->times.push_back(0.0);
    traj->states.push_back(SimState::from_stacked(z, 0.0));

    std::size_t segment = 0;
    for (std::int64_t k = 0; k < steps; ++k) {
        while (segment < switch_steps.size() && switch_steps[segment] <= k) {
            ++segment;
        }
        const double t = static_cast<double>(k) * h;
        const Vec k1 = field(t, z, segment);
        const Vec k2 = field(t + 0.5 * h, z + 0.5 * h * k1, segment);
        const Vec k3 = field(t + 0.5 * h, z + 0.5 * h * k2, segment);
        const Vec k4 = field(t + h, z + h * k3, segment);
        Vec next = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if (!next.allFinite()) {
            throw DivergenceError("sim: state became non-finite after t = " + std::to_string(t), t,
                                  std::move(traj));
        }
        z = std::move(next);
        if ((k + 1) % every == 0) {
            const double tk = static_cast<double>(k + 1) * h;
            traj->times.push_back(tk);
            traj->states.push_back(SimState::from_stacked(z, tk));
        }
    }
    return std::move(*traj);
}

template <SmoothField F>
[[nodiscard]] Trajectory integrate(const F& field, const SimState& x0, const SimParams& params) {
    return integrate([&field](double t, const Vec& z, std::size_t) { return Vec(field(t, z)); }, x0, params);
}

// Final-time state of an RK4 run with the given step.
template <class F>
[[nodiscard]] Vec final_state(const F& field, const SimState& x0, double t_final, double dt) {
    SimParams p{t_final, dt, 1};
    p.sample_every = static_cast<int>(*detail::grid_steps(t_final, dt));
    return integrate(field, x0, p).states.back().stacked();
}

struct ConvergenceOrder {
    double order = 0.0;
    bool exact = false;  // both step sizes reproduce the reference to rounding
    double error_dt = 0.0;
    double error_half = 0.0;
};

// Observed order log2(e(dt) / e(dt/2)) against a dt/100 reference at t_final.
template <class F>
[[nodiscard]] ConvergenceOrder convergence_order(const F& field, const SimState& x0, const SimParams& params) {
    const Vec ref = final_state(field, x0, params.t_final, params.dt / 100.0);
    const Vec coarse = final_state(field, x0, params.t_final, params.dt);
    const Vec fine = final_state(field, x0, params.t_final, params.dt / 2.0);

    ConvergenceOrder out;
    out.error_dt = (coarse - ref).cwiseAbs().maxCoeff();
    out.error_half = (fine - ref).cwiseAbs().maxCoeff();
    const double floor = 1e-14 * std::max(1.0, ref.cwiseAbs().maxCoeff());
    if (out.error_dt <= floor && out.error_half <= floor) {
        out.exact = true;
        return out;
    }
    out.order = std::log2(out.error_dt / out.error_half);
    return out;
}

} // namespace consensus_net
