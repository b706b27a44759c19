#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "core.hpp"
#include "dynamics.hpp"
#include "gains.hpp"
#include "graph.hpp"
#include "sim.hpp"

namespace consensus_net {

// Projector-applied errors (I - 1 v^T) applied to x, the velocity-like
// coordinate and the disturbance-estimate error.
struct ErrorTriple {
    Vec e_x;
    Vec e_y;
    Vec e_d;
};

// Weighted averages v^T(.) of the same three coordinates.
struct MeanField {
    double x_m = 0.0;
    double y_m = 0.0;
    double delta_m = 0.0;
};

// A sin(omega t + phase) + offset over a window, t measured from the
// window start.
struct OrbitFit {
    double angular_frequency = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
    double offset = 0.0;
    double residual = 0.0;  // RMS of the fit residual divided by signal RMS
};

class FitError : public Error {
public:
    using Error::Error;
};

// ============================================================================
// Transformed coordinates
// ============================================================================
// These are the only places where the true disturbance d enters.

// Matched: delta_tilde = delta_hat - d / gamma3.
[[nodiscard]] inline Vec transformed_delta(const SimState& s, const MatchedGains& g, const Vec& d) {
    return s.delta_hat - d / g.gamma3;
}

// Unmatched: delta_tilde = k_s delta_hat + d.
[[nodiscard]] inline Vec transformed_delta(const SimState& s, const UnmatchedGains& g, const Vec& d) {
    return g.k_s * s.delta_hat + d;
}

[[nodiscard]] inline Vec velocity_coordinate(const SimState& s, const MatchedGains&) {
    return s.y;
}

// Unmatched: ytilde = y - k_s delta_hat.
[[nodiscard]] inline Vec velocity_coordinate(const SimState& s, const UnmatchedGains& g) {
    return s.y - g.k_s * s.delta_hat;
}

[[nodiscard]] inline Vec project(const Vec& v_left, const Vec& w) {
    return w.array() - v_left.dot(w);
}

template <class Gains>
[[nodiscard]] ErrorTriple consensus_errors(const SimState& s, const Vec& v_left, const Gains& g, const Vec& d) {
    s.validate();
    detail::require_same_size(v_left.size(), s.x.size(), "consensus_errors: v_left");
    detail::require_same_size(d.size(), s.x.size(), "consensus_errors: d");
    return {project(v_left, s.x), project(v_left, velocity_coordinate(s, g)),
            project(v_left, transformed_delta(s, g, d))};
}

template <class Gains>
[[nodiscard]] MeanField mean_field(const SimState& s, const Vec& v_left, const Gains& g, const Vec& d) {
    s.validate();
    detail::require_same_size(v_left.size(), s.x.size(), "mean_field: v_left");
    return {v_left.dot(s.x), v_left.dot(velocity_coordinate(s, g)), v_left.dot(transformed_delta(s, g, d))};
}

// ============================================================================
// Lyapunov functions
// ============================================================================

struct LyapunovValue {
    double value = 0.0;
    bool positivity_condition = false;  // the parameter condition making it positive definite
};

// H = H_s + H_d with
//   H_s = 1/2 [e_x; e_y]^T [[rho P, eps P], [eps P, 2 mu I]] [e_x; e_y]
//   H_d = b/2 [e_y; e_d]^T [[2 I, I], [I, I]] [e_y; e_d]
[[nodiscard]] inline LyapunovValue lyapunov_H(const ErrorTriple& e, const MatchedGains& g, const Mat& P) {
    const Vec pex = P * e.e_x;
    const double hs = 0.5 * (g.rho * e.e_x.dot(pex) + 2.0 * g.epsilon * e.e_y.dot(pex) +
                             2.0 * g.mu * e.e_y.squaredNorm());
    const double hd = 0.5 * g.b * (2.0 * e.e_y.squaredNorm() + 2.0 * e.e_y.dot(e.e_d) + e.e_d.squaredNorm());
    return {hs + hd, std::sqrt(2.0 * g.rho * g.mu / spectral_norm(P)) > g.epsilon};
}

// W = 1/2 [e_x; e_y]^T [[alpha1 P, nu P], [nu P, alpha2 I]] [e_x; e_y] + 1/2 e_d^T P e_d
[[nodiscard]] inline LyapunovValue lyapunov_W(const ErrorTriple& e, const UnmatchedGains& g, const Mat& P) {
    const Vec pex = P * e.e_x;
    const double w = 0.5 * (g.alpha1 * e.e_x.dot(pex) + 2.0 * g.nu * e.e_y.dot(pex) +
                            g.alpha2 * e.e_y.squaredNorm()) +
                     0.5 * e.e_d.dot(P * e.e_d);
    return {w, std::sqrt(g.alpha1 * g.alpha2 / spectral_norm(P)) > g.nu};
}

// ============================================================================
// Signal fits
// ============================================================================

struct Window {
    double t0 = 0.0;
    double t1 = 0.0;
};

namespace detail {

inline std::vector<std::size_t> window_indices(const std::vector<double>& times, Window w) {
    std::vector<std::size_t> idx;
    const double tol = 1e-9 * std::max(1.0, std::abs(w.t1));
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] >= w.t0 - tol && times[k] <= w.t1 + tol) {
            idx.push_back(k);
        }
    }
    return idx;
}

} // namespace detail

// Least-squares slope of log|signal| over the window, negated.
[[nodiscard]] inline double fit_exponential_decay(const std::vector<double>& times, const std::vector<double>& values,
                                                  Window w) {
    detail::require_same_size(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(times.size()),
                              "fit_exponential_decay: values");
    const auto idx = detail::window_indices(times, w);
    if (idx.size() < 2) {
        throw FitError("fit_exponential_decay: fewer than two samples in window");
    }
    const double sign = values[idx.front()] > 0.0 ? 1.0 : -1.0;
    double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
    for (std::size_t k : idx) {
        if (!(sign * values[k] > 0.0)) {
            throw FitError("fit_exponential_decay: signal reaches zero at t = " + std::to_string(times[k]) +
                           "; use a shorter window");
        }
        const double t = times[k] - w.t0;
        const double l = std::log(std::abs(values[k]));
        st += t;
        sl += l;
        stt += t * t;
        stl += t * l;
    }
    const auto m = static_cast<double>(idx.size());
    const double slope = (m * stl - st * sl) / (m * stt - st * st);
    return -slope;
}

// Sinusoid fit: zero-crossing estimate of omega, then Gauss-Newton on
// a sin(omega t) + c cos(omega t) + offset.
[[nodiscard]] inline OrbitFit fit_orbit(const std::vector<double>& times, const std::vector<double>& values, Window w) {
    detail::require_same_size(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(times.size()),
                              "fit_orbit: values");
    const auto idx = detail::window_indices(times, w);
    const auto m = static_cast<Eigen::Index>(idx.size());
    if (m < 8) {
        throw FitError("fit_orbit: too few samples in window");
    }
    Vec t(m), s(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        t(k) = times[idx[static_cast<std::size_t>(k)]] - w.t0;
        s(k) = values[idx[static_cast<std::size_t>(k)]];
    }
    const double mean = s.mean();
    const double rms = std::sqrt(s.squaredNorm() / static_cast<double>(m));
    const double spread = std::sqrt((s.array() - mean).square().mean());
    if (!(spread > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw FitError("fit_orbit: no orbit (signal is constant over the window)");
    }

    std::vector<double> crossings;
    for (Eigen::Index k = 0; k + 1 < m; ++k) {
        const double a = s(k) - mean;
        const double b = s(k + 1) - mean;
        if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) {
            crossings.push_back(t(k) + (t(k + 1) - t(k)) * a / (a - b));
        }
    }
    if (crossings.size() < 3) {
        throw FitError("fit_orbit: no orbit (fewer than three mean crossings in window)");
    }
    double omega = std::numbers::pi * static_cast<double>(crossings.size() - 1) / (crossings.back() - crossings.front());

    // Linear least squares for (a, c, offset) at fixed omega.
    Eigen::Vector4d p;
    {
        Mat basis(m, 3);
        basis.col(0) = (omega * t).array().sin();
        basis.col(1) = (omega * t).array().cos();
        basis.col(2).setOnes();
        const Eigen::Vector3d lin = basis.colPivHouseholderQr().solve(s);
        p << lin(0), lin(1), lin(2), omega;
    }

    for (int iter = 0; iter < 50; ++iter) {
        const Eigen::ArrayXd wt = p(3) * t.array();
        const Eigen::ArrayXd sn = wt.sin();
        const Eigen::ArrayXd cs = wt.cos();
        const Vec r = s.array() - (p(0) * sn + p(1) * cs + p(2));
        Mat jac(m, 4);
        jac.col(0) = sn;
        jac.col(1) = cs;
        jac.col(2).setOnes();
        jac.col(3) = t.array() * (p(0) * cs - p(1) * sn);
        const Eigen::Vector4d step = jac.colPivHouseholderQr().solve(r);
        p += step;
        if (step.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, p.cwiseAbs().maxCoeff())) {
            break;
        }
    }

    if (p(3) < 0.0) {
        p(3) = -p(3);
        p(0) = -p(0);
    }
    OrbitFit fit;
    fit.angular_frequency = p(3);
    fit.amplitude = std::hypot(p(0), p(1));
    fit.phase = std::atan2(p(1), p(0));
    fit.offset = p(2);
    const Vec r = s.array() - (p(0) * (p(3) * t.array()).sin() + p(1) * (p(3) * t.array()).cos() + p(2));
    fit.residual = std::sqrt(r.squaredNorm() / static_cast<double>(m)) / rms;
    if (fit.residual > 0.5 || !(fit.angular_frequency > 0.0)) {
        throw FitError("fit_orbit: no orbit (relative residual " + std::to_string(fit.residual) + ")");
    }
    return fit;
}

// ============================================================================
// Averaged (mean-field) models
// ============================================================================

namespace detail {

// exp(A t) for a real 2x2 matrix, from its trace and determinant.
inline Eigen::Matrix2d expm2(const Eigen::Matrix2d& a, double t) {
    const double half_trace = 0.5 * a.trace();
    const double disc = half_trace * half_trace - a.determinant();
    const Eigen::Matrix2d shifted = a - half_trace * Eigen::Matrix2d::Identity();
    const double scale = std::exp(half_trace * t);
    double c = 1.0, s = t;  // exp(shifted t) = c I + s shifted
    if (disc > 0.0) {
        const double q = std::sqrt(disc);
        c = std::cosh(q * t);
        s = std::sinh(q * t) / q;
    } else if (disc < 0.0) {
        const double q = std::sqrt(-disc);
        c = std::cos(q * t);
        s = std::sin(q * t) / q;
    }
    return scale * (c * Eigen::Matrix2d::Identity() + s * shifted);
}

} // namespace detail

// Flow of x_m' = y_m, (y_m, delta_m)' = S (y_m, delta_m) for constant d.
[[nodiscard]] inline MeanField averaged_model_matched(const MeanField& mf0, const MatchedGains& g, double t) {
    const Eigen::Matrix2d S = matched_S(g);
    const Eigen::Vector2d w0(mf0.y_m, mf0.delta_m);
    const Eigen::Matrix2d e = detail::expm2(S, t);
    const Eigen::Vector2d w = e * w0;
    // int_0^t exp(S s) ds = S^{-1} (exp(S t) - I); det S = gamma3 gamma4 > 0.
    const Eigen::Vector2d integral = S.inverse() * ((e - Eigen::Matrix2d::Identity()) * w0);
    return {mf0.x_m + integral(0), w(0), w(1)};
}

// Exact mean-field flow of the unmatched loop:
//   xbar_m' = ybar_m + deltabar_m
//   ybar_m' = -k_d ybar_m
//   deltabar_m' = -k_s alpha1 xbar_m - k_s nu ybar_m
// The (xbar_m, deltabar_m) pair is a harmonic oscillator of angular
// frequency sqrt(k_s alpha1) forced by the decaying ybar_m.
[[nodiscard]] inline MeanField averaged_model_unmatched(const MeanField& mf0, const UnmatchedGains& g, double t) {
    const double kd = g.k_d;
    const double stiffness = g.k_s * g.alpha1;
    const double omega = std::sqrt(stiffness);

    Eigen::Matrix2d a;
    a << 0.0, 1.0, -stiffness, 0.0;
    const Eigen::Vector2d forcing(1.0, -g.k_s * g.nu);

    // Particular solution w exp(-k_d t) with (A + k_d I) w = -forcing ybar_m(0).
    const Eigen::Vector2d w = -(a + kd * Eigen::Matrix2d::Identity()).inverse() * forcing * mf0.y_m;
    const Eigen::Vector2d z0(mf0.x_m, mf0.delta_m);

    Eigen::Matrix2d rot;
    const double c = std::cos(omega * t);
    const double s = std::sin(omega * t);
    rot << c, s / omega, -omega * s, c;
    const double decay = std::exp(-kd * t);
    const Eigen::Vector2d z = rot * (z0 - w) + w * decay;
    return {z(0), mf0.y_m * decay, z(1)};
}

[[nodiscard]] inline double unmatched_orbit_frequency(const UnmatchedGains& g) {
    return std::sqrt(g.k_s * g.alpha1);
}

// ============================================================================
// Trajectory post-processing
// ============================================================================

struct EstimationLimits {
    double t = 0.0;
    Vec delta_hat;  // simulated
    Vec predicted;  // d(t) / gamma3
};

[[nodiscard]] inline EstimationLimits estimation_at(const Trajectory& traj, const DisturbanceProfile& p,
                                                    const MatchedGains& g, double t) {
    const SimState& s = traj.at(t);
    return {s.t, s.delta_hat, p.eval(s.t) / g.gamma3};
}

// Final-time delta_hat next to the predicted limit d(t_final) / gamma3.
[[nodiscard]] inline EstimationLimits estimation_limits(const Trajectory& traj, const DisturbanceProfile& p,
                                                        const MatchedGains& g) {
    if (traj.empty()) {
        throw ValidationError("estimation_limits: empty trajectory");
    }
    return estimation_at(traj, p, g, traj.times.back());
}

// One row of the metrics table.
struct MetricsRow {
    double t = 0.0;
    double norm_e_x = 0.0;
    double norm_e_y = 0.0;
    double norm_e_d = 0.0;
    MeanField mf;
    double lyapunov = 0.0;
    // max_i |v^T e_*| over the three errors (projector check).
    double projector_residual = 0.0;
};

template <class Gains>
[[nodiscard]] std::vector<MetricsRow> compute_metrics(const Trajectory& traj, const Vec& v_left, const Gains& g,
                                                      const DisturbanceProfile& p, const Mat& P) {
    std::vector<MetricsRow> rows;
    rows.reserve(traj.size());
    for (const auto& s : traj.states) {
        const Vec d = p.eval(s.t);
        const ErrorTriple e = consensus_errors(s, v_left, g, d);
        MetricsRow row;
        row.t = s.t;
        row.norm_e_x = e.e_x.norm();
        row.norm_e_y = e.e_y.norm();
        row.norm_e_d = e.e_d.norm();
        row.mf = mean_field(s, v_left, g, d);
        if constexpr (std::is_same_v<Gains, MatchedGains>) {
            row.lyapunov = lyapunov_H(e, g, P).value;
        } else {
            row.lyapunov = lyapunov_W(e, g, P).value;
        }
        row.projector_residual = std::max({std::abs(v_left.dot(e.e_x)), std::abs(v_left.dot(e.e_y)),
                                           std::abs(v_left.dot(e.e_d))});
        rows.push_back(row);
    }
    return rows;
}

// First time from which `values` stays below `threshold` for at least
// `hold` seconds and until the end of the series; negative if never.
[[nodiscard]] inline double settle_time(const std::vector<double>& times, const std::vector<double>& values,
                                        double threshold, double hold = 10.0) {
    double start = -1.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (values[k] < threshold) {
            if (start < 0.0) {
                start = times[k];
            }
        } else {
            start = -1.0;
        }
    }
    if (start < 0.0 || times.back() - start < hold) {
        return -1.0;
    }
    return start;
}

// max_i |ybar_i - deltabar_m| over the window, with ybar_i = y_i + d_i
// (unmatched loop; the limit in which every output velocity tracks the
// common oscillation).
[[nodiscard]] inline double output_orbit_error(const Trajectory& traj, const Vec& v_left, const UnmatchedGains& g,
                                               const DisturbanceProfile& p, Window w) {
    double worst = 0.0;
    for (std::size_t k : detail::window_indices(traj.times, w)) {
        const SimState& s = traj.states[k];
        const Vec d = p.eval(s.t);
        const double delta_m = v_left.dot(transformed_delta(s, g, d));
        worst = std::max(worst, ((s.y + d).array() - delta_m).abs().maxCoeff());
    }
    return worst;
}

// Component series of one state coordinate for agent i.
enum class Component { x, y, delta_hat };

[[nodiscard]] inline std::vector<double> agent_series(const Trajectory& traj, Component c, int agent) {
    std::vector<double> out;
    out.reserve(traj.size());
    for (const auto& s : traj.states) {
        const Vec& v = c == Component::x ? s.x : (c == Component::y ? s.y : s.delta_hat);
        out.push_back(v(agent));
    }
    return out;
}

} // namespace consensus_net
