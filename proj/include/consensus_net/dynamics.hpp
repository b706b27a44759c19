#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "core.hpp"
#include "gains.hpp"
#include "graph.hpp"

namespace consensus_net {

// ============================================================================
// Disturbances
// ============================================================================

// One piece of d(t) active from t_start on:
//   d(t) = base + (hyperbolic_coeff + exp_coeff * exp(-exp_rate * t)) / (offset + t)
// The scalar terms are broadcast to every agent.
struct DisturbanceSegment {
    double t_start = 0.0;
    Vec base;
    double hyperbolic_coeff = 0.0;
    double exp_coeff = 0.0;
    double exp_rate = 0.0;
    double offset = 12.0;

    [[nodiscard]] Vec eval(double t) const {
        const double scalar = (hyperbolic_coeff + exp_coeff * std::exp(-exp_rate * t)) / (offset + t);
        return base.array() + scalar;
    }

    [[nodiscard]] bool is_constant() const { return hyperbolic_coeff == 0.0 && exp_coeff == 0.0; }

    bool operator==(const DisturbanceSegment& o) const {
        return t_start == o.t_start && base == o.base && hyperbolic_coeff == o.hyperbolic_coeff &&
               exp_coeff == o.exp_coeff && exp_rate == o.exp_rate && offset == o.offset;
    }
};

class DisturbanceProfile {
public:
    DisturbanceProfile() = default;

    explicit DisturbanceProfile(std::vector<DisturbanceSegment> segments) : segments_(std::move(segments)) {
        if (segments_.empty()) {
            throw ValidationError("disturbance: at least one segment is required");
        }
        if (segments_.front().t_start != 0.0) {
            throw ValidationError("disturbance: segments[0].t_start must be 0");
        }
        const Eigen::Index n = segments_.front().base.size();
        for (std::size_t k = 0; k < segments_.size(); ++k) {
            const auto& s = segments_[k];
            const std::string where = "segments[" + std::to_string(k) + "]";
            if (k > 0 && !(s.t_start > segments_[k - 1].t_start)) {
                throw ValidationError("disturbance: " + where + ".t_start must increase strictly");
            }
            if (s.base.size() != n || n < 1) {
                throw ValidationError("disturbance: " + where + ".base has inconsistent length");
            }
            if (!s.base.allFinite() || !std::isfinite(s.hyperbolic_coeff) || !std::isfinite(s.exp_coeff) ||
                !std::isfinite(s.exp_rate) || !(s.offset > 0.0)) {
                throw ValidationError("disturbance: " + where + " has non-finite terms or offset <= 0");
            }
        }
    }

    static DisturbanceProfile constant(Vec d) {
        DisturbanceSegment s;
        s.base = std::move(d);
        return DisturbanceProfile({s});
    }

    [[nodiscard]] int n() const { return segments_.empty() ? 0 : static_cast<int>(segments_.front().base.size()); }
    [[nodiscard]] const std::vector<DisturbanceSegment>& segments() const { return segments_; }

    // Index of the segment active at t (right-continuous at switches).
    [[nodiscard]] std::size_t segment_index(double t) const {
        std::size_t k = 0;
        while (k + 1 < segments_.size() && segments_[k + 1].t_start <= t) {
            ++k;
        }
        return k;
    }

    [[nodiscard]] Vec eval(double t) const { return segments_[segment_index(t)].eval(t); }

    // Evaluates a fixed segment, used by the integrator to keep one regime
    // across all stages of a step.
    [[nodiscard]] Vec eval(double t, std::size_t segment) const { return segments_.at(segment).eval(t); }

    [[nodiscard]] std::vector<double> switch_times() const {
        std::vector<double> out;
        for (std::size_t k = 1; k < segments_.size(); ++k) {
            out.push_back(segments_[k].t_start);
        }
        return out;
    }

    [[nodiscard]] bool is_constant() const { return segments_.size() == 1 && segments_.front().is_constant(); }

    bool operator==(const DisturbanceProfile&) const = default;

private:
    std::vector<DisturbanceSegment> segments_;
};

[[nodiscard]] inline Vec eval_disturbance(const DisturbanceProfile& p, double t) {
    return p.eval(t);
}

// ============================================================================
// State
// ============================================================================

struct SimState {
    Vec x;
    Vec y;
    Vec delta_hat;
    double t = 0.0;

    [[nodiscard]] int n() const { return static_cast<int>(x.size()); }

    // Stacked (x, y, delta_hat).
    [[nodiscard]] Vec stacked() const {
        Vec z(3 * x.size());
        z << x, y, delta_hat;
        return z;
    }

    static SimState from_stacked(const Vec& z, double t) {
        const Eigen::Index n = z.size() / 3;
        return {z.head(n), z.segment(n, n), z.tail(n), t};
    }

    void validate() const {
        if (x.size() < 1 || y.size() != x.size() || delta_hat.size() != x.size()) {
            throw DimensionError("state: x, y, delta_hat must share one length >= 1");
        }
    }
};

struct StateRate {
    Vec dx;
    Vec dy;
    Vec ddelta_hat;

    [[nodiscard]] Vec stacked() const {
        Vec z(3 * dx.size());
        z << dx, dy, ddelta_hat;
        return z;
    }
};

namespace detail {

inline void require_agents(const SimState& s, const LaplacianData& lap) {
    s.validate();
    require_same_size(s.x.size(), lap.L.rows(), "state vs Laplacian");
}

} // namespace detail

// ============================================================================
// Matched loop
// ============================================================================

// u = -gamma1 L x - gamma2 y - gamma3 delta_hat
[[nodiscard]] inline Vec matched_control(const SimState& s, const MatchedGains& g, const LaplacianData& lap) {
    detail::require_agents(s, lap);
    return -g.gamma1 * (lap.L * s.x) - g.gamma2 * s.y - g.gamma3 * s.delta_hat;
}

[[nodiscard]] inline StateRate matched_rate(const SimState& s, const MatchedGains& g, const LaplacianData& lap,
                                            const Vec& d) {
    detail::require_same_size(d.size(), lap.L.rows(), "disturbance vs Laplacian");
    const Vec lx = lap.L * s.x;
    return {s.y, -g.gamma1 * lx - g.gamma2 * s.y - g.gamma3 * s.delta_hat + d, g.gamma1 * lx + g.gamma4 * s.y};
}

[[nodiscard]] inline StateRate matched_field(const SimState& s, const MatchedGains& g, const LaplacianData& lap,
                                             const DisturbanceProfile& p) {
    detail::require_agents(s, lap);
    return matched_rate(s, g, lap, p.eval(s.t));
}

// ============================================================================
// Unmatched loop
// ============================================================================

// With ytilde = y - k_s delta_hat:
// u = -k_x L x - k_d ytilde - k_s (alpha1 x + nu ytilde)
[[nodiscard]] inline Vec unmatched_control(const SimState& s, const UnmatchedGains& g, const LaplacianData& lap) {
    detail::require_agents(s, lap);
    const Vec yt = s.y - g.k_s * s.delta_hat;
    return -g.k_x * (lap.L * s.x) - g.k_d * yt - g.k_s * (g.alpha1 * s.x + g.nu * yt);
}

[[nodiscard]] inline StateRate unmatched_rate(const SimState& s, const UnmatchedGains& g, const LaplacianData& lap,
                                              const Vec& d) {
    detail::require_same_size(d.size(), lap.L.rows(), "disturbance vs Laplacian");
    const Vec yt = s.y - g.k_s * s.delta_hat;
    const Vec integral = g.alpha1 * s.x + g.nu * yt;
    return {s.y + d, -g.k_x * (lap.L * s.x) - g.k_d * yt - g.k_s * integral, -integral};
}

[[nodiscard]] inline StateRate unmatched_field(const SimState& s, const UnmatchedGains& g, const LaplacianData& lap,
                                               const DisturbanceProfile& p) {
    detail::require_agents(s, lap);
    return unmatched_rate(s, g, lap, p.eval(s.t));
}

// ============================================================================
// Stacked closed loops for the integrator
// ============================================================================
// Callable as f(t, z, segment) with z = (x, y, delta_hat).

template <class Gains>
class ClosedLoop {
public:
    ClosedLoop(Gains gains, LaplacianData lap, DisturbanceProfile profile)
        : gains_(std::move(gains)), lap_(std::move(lap)), profile_(std::move(profile)) {
        detail::require_same_size(profile_.n(), lap_.L.rows(), "disturbance vs Laplacian");
    }

    [[nodiscard]] Vec operator()(double t, const Vec& z, std::size_t segment) const {
        const Eigen::Index n = lap_.L.rows();
        const SimState s{z.head(n), z.segment(n, n), z.tail(n), t};
        const Vec d = profile_.eval(t, segment);
        if constexpr (std::is_same_v<Gains, MatchedGains>) {
            return matched_rate(s, gains_, lap_, d).stacked();
        } else {
            return unmatched_rate(s, gains_, lap_, d).stacked();
        }
    }

    [[nodiscard]] const Gains& gains() const { return gains_; }
    [[nodiscard]] const LaplacianData& laplacian() const { return lap_; }
    [[nodiscard]] const DisturbanceProfile& profile() const { return profile_; }

private:
    Gains gains_;
    LaplacianData lap_;
    DisturbanceProfile profile_;
};

using MatchedLoop = ClosedLoop<MatchedGains>;
using UnmatchedLoop = ClosedLoop<UnmatchedGains>;

} // namespace consensus_net
