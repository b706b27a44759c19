#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <consensus_net/dynamics.hpp>
#include <consensus_net/scenario.hpp>
#include <consensus_net/sim.hpp>

#include "support/oracles.hpp"

namespace cn = consensus_net;
using cn::Mat;
using cn::Vec;

namespace {

// Scalar systems are carried in the x slot of a one-agent state.
cn::SimState scalar(double x, double y = 0.0) {
    return {Vec::Constant(1, x), Vec::Constant(1, y), Vec::Zero(1), 0.0};
}

Vec decay(double, const Vec& z) {
    Vec r = Vec::Zero(z.size());
    r(0) = -z(0);
    return r;
}

Vec oscillator(double, const Vec& z) {
    Vec r = Vec::Zero(z.size());
    r(0) = z(1);
    r(1) = -z(0);
    return r;
}

} // namespace

TEST(Integrate, LinearDecay) {
    const auto traj = cn::integrate(decay, scalar(1.0), {1.0, 0.1, 1});
    ASSERT_EQ(traj.size(), 11U);
    // RK4 on x' = -x multiplies by the degree-4 Taylor polynomial of exp(-h).
    const double h = 0.1;
    const double factor = 1.0 - h + h * h / 2.0 - h * h * h / 6.0 + h * h * h * h / 24.0;
    EXPECT_NEAR(traj.states.back().x(0), std::pow(factor, 10), 1e-15);
    EXPECT_NEAR(traj.states.back().x(0), std::exp(-1.0), 5e-7);
    EXPECT_EQ(traj.times.front(), 0.0);
    EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
}

TEST(Integrate, HarmonicOscillatorPeriod) {
    const double period = 2.0 * std::numbers::pi;
    const double dt = period / 628.0;  // about 0.01, landing exactly on 2 pi
    const auto traj = cn::integrate(oscillator, scalar(1.0, 0.0), {period, dt, 628});
    EXPECT_NEAR(traj.states.back().x(0), 1.0, 1e-8);
    EXPECT_NEAR(traj.states.back().y(0), 0.0, 1e-8);
}

TEST(Integrate, ZeroFieldIsConstant) {
    const cn::SimState x0{(Vec(2) << 1, -2).finished(), (Vec(2) << 3, 4).finished(), (Vec(2) << 5, 6).finished(), 0.0};
    const auto traj = cn::integrate([](double, const Vec& z) { return Vec(Vec::Zero(z.size())); }, x0, {1.0, 0.01, 7});
    for (const auto& s : traj.states) {
        EXPECT_EQ(s.stacked(), x0.stacked());
    }
}

TEST(Integrate, SamplingGrid) {
    const auto traj = cn::integrate(decay, scalar(1.0), {1.0, 0.01, 10});
    ASSERT_EQ(traj.size(), 11U);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        EXPECT_NEAR(traj.times[k], 0.1 * static_cast<double>(k), 1e-12);
        EXPECT_EQ(traj.states[k].t, traj.times[k]);
    }
    EXPECT_NO_THROW((void)traj.at(0.5));
    EXPECT_THROW((void)traj.at(0.55), cn::ValidationError);
    EXPECT_THROW((void)traj.at(2.0), cn::ValidationError);
}

TEST(Integrate, SingleStepHorizon) {
    const auto traj = cn::integrate(decay, scalar(1.0), {0.001, 0.001, 10});
    ASSERT_EQ(traj.size(), 2U);
    EXPECT_DOUBLE_EQ(traj.times.back(), 0.001);
    const auto every = cn::integrate(decay, scalar(1.0), {0.001, 0.001, 1});
    EXPECT_EQ(every.states.back().stacked(), traj.states.back().stacked());
    // A stride longer than the horizon collapses to the horizon.
    EXPECT_EQ(cn::integrate(decay, scalar(1.0), {0.05, 0.01, 10}).size(), 2U);
}

TEST(Integrate, RejectsInvalidParams) {
    EXPECT_THROW((void)cn::integrate(decay, scalar(1.0), {0.0, 0.1, 1}), cn::ValidationError);
    EXPECT_THROW((void)cn::integrate(decay, scalar(1.0), {1.0, 0.0, 1}), cn::ValidationError);
    EXPECT_THROW((void)cn::integrate(decay, scalar(1.0), {1.0, 2.0, 1}), cn::ValidationError);
    EXPECT_THROW((void)cn::integrate(decay, scalar(1.0), {1.0, 0.3, 1}), cn::ValidationError);
    EXPECT_THROW((void)cn::integrate(decay, scalar(1.0), {1.0, 0.1, 0}), cn::ValidationError);
    const cn::SimState nan_state = scalar(std::nan(""));
    EXPECT_THROW((void)cn::integrate(decay, nan_state, {1.0, 0.1, 1}), cn::ValidationError);
}

TEST(Integrate, MisalignedSwitchRejected) {
    auto field = [](double, const Vec& z, std::size_t) { return Vec(Vec::Zero(z.size())); };
    EXPECT_THROW((void)cn::integrate(field, scalar(0.0), {1.0, 0.1, 1}, {0.25}), cn::ValidationError);
    EXPECT_NO_THROW((void)cn::integrate(field, scalar(0.0), {1.0, 0.1, 1}, {0.3}));
    // Switches at or past the horizon are irrelevant.
    EXPECT_NO_THROW((void)cn::integrate(field, scalar(0.0), {1.0, 0.1, 1}, {5.05}));
}

TEST(Integrate, SwitchAppliesFromItsStep) {
    // x' = segment index: x(1) = 1 * (1 - 0.3) when the switch is at 0.3.
    auto field = [](double, const Vec& z, std::size_t seg) {
        Vec r = Vec::Zero(z.size());
        r(0) = static_cast<double>(seg);
        return r;
    };
    const auto traj = cn::integrate(field, scalar(0.0), {1.0, 0.1, 1}, {0.3});
    EXPECT_NEAR(traj.at(0.3).x(0), 0.0, 1e-15);
    EXPECT_NEAR(traj.at(0.4).x(0), 0.1, 1e-15);
    EXPECT_NEAR(traj.states.back().x(0), 0.7, 1e-14);
}

TEST(Integrate, DivergenceKeepsPartialTrajectory) {
    auto blowup = [](double, const Vec& z) {
        Vec r = Vec::Zero(z.size());
        r(0) = z(0) * z(0);
        return r;
    };
    try {
        (void)cn::integrate(blowup, scalar(1.0), {2.0, 0.01, 1});
        FAIL() << "expected DivergenceError";
    } catch (const cn::DivergenceError& e) {
        EXPECT_GT(e.last_finite_time(), 0.5);
        EXPECT_LT(e.last_finite_time(), 1.5);
        ASSERT_FALSE(e.partial().empty());
        for (const auto& s : e.partial().states) {
            EXPECT_TRUE(s.stacked().allFinite());
        }
    }
}

TEST(Integrate, Deterministic) {
    const auto lap = cn::build_laplacian(cn::default_graph());
    const auto p = cn::switching_disturbance(5.0);
    const cn::MatchedLoop loop(cn::reference_matched_gains(), lap, p);
    const cn::SimState x0{(Vec(5) << 1, -0.5, 0.5, -1, 0).finished(), Vec::Zero(5), Vec::Zero(5), 0.0};
    const auto a = cn::integrate(loop, x0, {10.0, 1e-3, 10}, p.switch_times());
    const auto b = cn::integrate(loop, x0, {10.0, 1e-3, 10}, p.switch_times());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        ASSERT_EQ(a.states[k].stacked(), b.states[k].stacked());
    }
}

TEST(AlignDt, PicksLargestDivisor) {
    EXPECT_DOUBLE_EQ(cn::align_dt(0.1, 1.0, {}), 0.1);
    const double dt = cn::align_dt(0.3, 1.0, {0.5});
    EXPECT_LE(dt, 0.3);
    EXPECT_DOUBLE_EQ(dt, 0.25);
    const double odd = cn::align_dt(1e-3, 40.0, {20.0, 33.3});
    EXPECT_LE(odd, 1e-3);
    EXPECT_TRUE(cn::detail::grid_steps(33.3, odd).has_value());
    EXPECT_TRUE(cn::detail::grid_steps(40.0, odd).has_value());
    EXPECT_THROW((void)cn::align_dt(0.0, 1.0, {}), cn::ValidationError);
}

TEST(ConvergenceOrder, LinearDecay) {
    const auto o = cn::convergence_order(decay, scalar(1.0), {1.0, 0.1, 1});
    EXPECT_FALSE(o.exact);
    EXPECT_GE(o.order, 3.8);
    EXPECT_LE(o.order, 4.2);
}

TEST(ConvergenceOrder, MatchedLoopTwoAgents) {
    const auto lap = cn::build_laplacian(cn::DirectedGraph::from_edges(2, {{0, 1, 1.0}}));
    const cn::MatchedLoop loop(cn::reference_matched_gains(), lap, cn::DisturbanceProfile::constant(Vec::Zero(2)));
    const cn::SimState x0{(Vec(2) << 1, -1).finished(), Vec::Zero(2), Vec::Zero(2), 0.0};
    const auto o = cn::convergence_order(loop, x0, {1.0, 0.01, 1});
    EXPECT_GE(o.order, 3.8);
    EXPECT_LE(o.order, 4.2);
}

TEST(ConvergenceOrder, ConstantFieldIsExact) {
    auto constant = [](double, const Vec& z) {
        Vec r = Vec::Zero(z.size());
        r(0) = 2.0;
        return r;
    };
    const auto o = cn::convergence_order(constant, scalar(0.0), {1.0, 0.1, 1});
    EXPECT_TRUE(o.exact);
}

// Matched loop with constant d is affine in z = (x, y, delta_hat):
// z' = A z + c. Compare with exp of the augmented matrix.
TEST(Integrate, MatchedLoopAgainstMatrixExponential) {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g;
    for (int n = 1; n <= 3; ++n) {
        for (int trial = 0; trial < 3; ++trial) {
            const Mat a = oracle::random_spanning_tree_weights(n, rng);
            const auto lap = cn::build_laplacian(cn::DirectedGraph(a));
            const auto gains = cn::reference_matched_gains();
            Vec d(n);
            Vec z0(3 * n);
            for (int i = 0; i < n; ++i) {
                d(i) = g(rng);
            }
            for (int i = 0; i < 3 * n; ++i) {
                z0(i) = g(rng);
            }
            const Mat L = oracle::laplacian(a);
            const Mat I = Mat::Identity(n, n);
            Mat aug = Mat::Zero(3 * n + 1, 3 * n + 1);
            aug.block(0, n, n, n) = I;
            aug.block(n, 0, n, n) = -gains.gamma1 * L;
            aug.block(n, n, n, n) = -gains.gamma2 * I;
            aug.block(n, 2 * n, n, n) = -gains.gamma3 * I;
            aug.block(2 * n, 0, n, n) = gains.gamma1 * L;
            aug.block(2 * n, n, n, n) = gains.gamma4 * I;
            aug.block(n, 3 * n, n, 1) = d;

            const cn::MatchedLoop loop(gains, lap, cn::DisturbanceProfile::constant(d));
            const auto traj = cn::integrate(loop, cn::SimState::from_stacked(z0, 0.0), {10.0, 1e-3, 100});
            double worst = 0.0;
            for (std::size_t k = 0; k < traj.size(); ++k) {
                Vec w(3 * n + 1);
                w << z0, 1.0;
                const Vec exact = oracle::expm(aug * traj.times[k]) * w;
                worst = std::max(worst, (traj.states[k].stacked() - exact.head(3 * n)).cwiseAbs().maxCoeff());
            }
            EXPECT_LT(worst, 1e-6) << "n=" << n;
        }
    }
}
