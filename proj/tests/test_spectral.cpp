#include <chrono>
#include <random>

#include <gtest/gtest.h>

#include <consensus_net/spectral.hpp>

#include "support/oracles.hpp"

namespace cn = consensus_net;
using cn::Mat;
using cn::Vec;

namespace {

cn::LaplacianData lap_of(const Mat& a) { return cn::build_laplacian(cn::DirectedGraph(a)); }

cn::LaplacianData default5() {
    return cn::build_laplacian(
        cn::DirectedGraph::from_edges(5, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {1, 4, 1.0}}));
}

} // namespace

TEST(SolveP, SingleAgent) {
    const auto cert = cn::solve_P(lap_of(Mat::Zero(1, 1)), 1.0, 1.0);
    EXPECT_NEAR(cert.P(0, 0), 0.5, 1e-15);
    const auto cert2 = cn::solve_P(lap_of(Mat::Zero(1, 1)), 3.0, 2.0);
    EXPECT_NEAR(cert2.P(0, 0), 3.0 / 4.0, 1e-15);
}

TEST(SolveP, TwoAgentChainByHand) {
    Mat a = Mat::Zero(2, 2);
    a(1, 0) = 1.0;
    const auto lap = lap_of(a);
    const auto cert = cn::solve_P(lap, 1.0, 1.0);
    EXPECT_LT((cert.P - 0.5 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-14);

    // Original form: P L + L^T P = Q - alpha (P 1 v^T + v 1^T P) = [[0, -1/2], [-1/2, 1]].
    Mat lhs = cert.P * lap.L + lap.L.transpose() * cert.P;
    Mat expected(2, 2);
    expected << 0, -0.5, -0.5, 1;
    EXPECT_LT((lhs - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(cert.residual, 1e-14);
}

TEST(SolveP, DefaultGraphMatchesKroneckerOracle) {
    const auto lap = default5();
    const auto cert = cn::solve_P(lap);
    const Mat oracle_P = oracle::shifted_lyapunov_kron_solve(lap.L, Mat::Identity(5, 5), lap.v_left, 1.0);
    EXPECT_LT((cert.P - oracle_P).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(cert.residual, 1e-8);
    EXPECT_GT(cert.min_eig_P, 0.0);
    EXPECT_LT((cert.P - cert.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(cert.lambda_P, cert.P.jacobiSvd().singularValues()(0), 1e-12);
    EXPECT_NEAR(cert.lambda_L, lap.L.jacobiSvd().singularValues()(0), 1e-12);
    EXPECT_GE(cert.condition_number, 1.0);
}

TEST(SolveP, RejectsInvalidInputs) {
    const auto lap = default5();
    EXPECT_THROW((void)cn::solve_P(lap, Mat::Identity(5, 5), 0.0), cn::ValidationError);
    EXPECT_THROW((void)cn::solve_P(lap, Mat::Identity(5, 5), -1.0), cn::ValidationError);
    EXPECT_THROW((void)cn::solve_P(lap, Mat::Identity(4, 4), 1.0), cn::DimensionError);
    Mat asym = Mat::Identity(5, 5);
    asym(0, 1) = 0.3;
    EXPECT_THROW((void)cn::solve_P(lap, asym, 1.0), cn::ValidationError);
    EXPECT_THROW((void)cn::solve_P(lap, -Mat::Identity(5, 5), 1.0), cn::ValidationError);
    EXPECT_THROW((void)cn::solve_P(lap_of(Mat::Zero(3, 3))), cn::ValidationError);
}

TEST(SolveP, DegenerateShiftRejected) {
    // alpha below the rounding floor leaves an (almost) zero eigenvalue.
    EXPECT_THROW((void)cn::solve_P(default5(), 1.0, 1e-12), cn::DegeneracyError);
}

TEST(SolveP, NonIdentityQ) {
    const auto lap = default5();
    Mat q = Mat::Identity(5, 5);
    q(0, 1) = q(1, 0) = 0.2;
    q(3, 3) = 4.0;
    const auto cert = cn::solve_P(lap, q, 0.7);
    EXPECT_LT((cert.P - oracle::shifted_lyapunov_kron_solve(lap.L, q, lap.v_left, 0.7)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(cert.residual, 1e-8 * std::max(1.0, cn::spectral_norm(q)));
}

TEST(SolveP, RandomGraphsResidualAndOracle) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 80; ++trial) {
        const int n = 1 + trial % 8;
        const auto lap = lap_of(oracle::random_spanning_tree_weights(n, rng));
        for (double alpha : {0.3, 1.0, 4.0}) {
            const auto cert = cn::solve_P(lap, 1.0, alpha);
            EXPECT_LT(cert.residual, 1e-8);
            EXPECT_GT(cert.min_eig_P, 0.0);
            const Mat ref = oracle::shifted_lyapunov_kron_solve(lap.L, Mat::Identity(n, n), lap.v_left, alpha);
            EXPECT_LT((cert.P - ref).cwiseAbs().maxCoeff(), 1e-8) << "n=" << n << " alpha=" << alpha;
        }
    }
}

TEST(SolveP, LinearInQ) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 6;
        const auto lap = lap_of(oracle::random_spanning_tree_weights(n, rng));
        const double c = 0.1 + 0.3 * trial;
        const auto base = cn::solve_P(lap, 1.0, 1.0);
        const auto scaled = cn::solve_P(lap, c, 1.0);
        EXPECT_LT((scaled.P - c * base.P).cwiseAbs().maxCoeff(), 1e-9 * c);
    }
}

TEST(SolveP, Deterministic) {
    const auto a = cn::solve_P(default5());
    const auto b = cn::solve_P(default5());
    EXPECT_EQ(a.P, b.P);
    EXPECT_EQ(a.residual, b.residual);
}

TEST(SolveShiftedLyapunov, HurwitzMirror) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Mat a(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) {
        a(i) = g(rng);
    }
    a += 5.0 * Mat::Identity(4, 4);
    const Mat c = Mat::Identity(4, 4);
    const Mat x = cn::solve_shifted_lyapunov(a, c);
    EXPECT_LT((x * a + a.transpose() * x - c).cwiseAbs().maxCoeff(), 1e-12);
}
