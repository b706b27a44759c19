#pragma once

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Eigenvalues>

#include "core.hpp"
#include "graph.hpp"

namespace consensus_net {

// Certificate for the shifted Lyapunov identity
//
//     P L + L^T P = Q - alpha (P 1 v^T + v 1^T P),
//
// together with the spectral bounds consumed by the gain conditions.
struct LyapunovCertificate {
    Mat P;
    Mat Q;
    double alpha = 1.0;
    double residual = 0.0;  // max-norm of the identity above
    double lambda_P = 0.0;  // ||P||_2
    double lambda_L = 0.0;  // ||L||_2
    double min_eig_P = 0.0;
    double condition_number = 0.0;  // max eig / min eig of P

    [[nodiscard]] int n() const { return static_cast<int>(P.rows()); }
};

// Max-norm of P L + L^T P - Q + alpha (P 1 v^T + v 1^T P).
[[nodiscard]] inline double lyapunov_residual(const Mat& P, const Mat& L, const Mat& Q, const Vec& v,
                                              double alpha) {
    const Vec ones = Vec::Ones(L.rows());
    const Mat shift = P * ones * v.transpose() + v * ones.transpose() * P;
    return (P * L + L.transpose() * P - Q + alpha * shift).cwiseAbs().maxCoeff();
}

// Solves X A + A^T X = C for symmetric C when every eigenvalue of A has a
// strictly positive real part. Complex Schur form A = U T U^H reduces the
// problem to a triangular recurrence on Y = U^H X U.
[[nodiscard]] inline Mat solve_shifted_lyapunov(const Mat& A, const Mat& C) {
    using Cplx = std::complex<double>;
    const Eigen::Index n = A.rows();
    Eigen::ComplexSchur<Mat> schur(A);
    const Eigen::MatrixXcd& T = schur.matrixT();
    const Eigen::MatrixXcd& U = schur.matrixU();

    const Eigen::MatrixXcd F = U.adjoint() * C.cast<Cplx>() * U;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    // (Y T)_ij + (T^H Y)_ij = F_ij, with T upper triangular.
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            Cplx rhs = F(i, j);
            for (Eigen::Index k = 0; k < j; ++k) {
                rhs -= Y(i, k) * T(k, j);
            }
            for (Eigen::Index k = 0; k < i; ++k) {
                rhs -= std::conj(T(k, i)) * Y(k, j);
            }
            Y(i, j) = rhs / (T(j, j) + std::conj(T(i, i)));
        }
    }
    const Mat X = (U * Y * U.adjoint()).real();
    return 0.5 * (X + X.transpose());
}

// Finds P > 0 for the Laplacian in `lap` by solving P Lbar + Lbar^T P = Q with
// Lbar = L + alpha 1 v^T, whose spectrum is that of L with the zero
// eigenvalue moved to alpha.
[[nodiscard]] inline LyapunovCertificate solve_P(const LaplacianData& lap, const Mat& Q, double alpha) {
    const Eigen::Index n = lap.L.rows();
    if (!lap.has_spanning_tree || lap.v_left.size() != n) {
        throw ValidationError("solve_P: graph has no directed spanning tree");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw ValidationError("solve_P: alpha must be a positive finite number");
    }
    detail::require_same_size(Q.rows(), n, "solve_P: Q rows");
    detail::require_same_size(Q.cols(), n, "solve_P: Q cols");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
        throw ValidationError("solve_P: Q is not symmetric");
    }
    if (Eigen::LLT<Mat>(Q).info() != Eigen::Success) {
        throw ValidationError("solve_P: Q is not positive definite");
    }

    const Mat shifted = lap.L + alpha * Vec::Ones(n) * lap.v_left.transpose();
    Eigen::EigenSolver<Mat> es(shifted, false);
    const double min_real = es.eigenvalues().real().minCoeff();
    if (min_real < 1e-9) {
        throw DegeneracyError("solve_P: shifted Laplacian has an eigenvalue with real part " +
                              std::to_string(min_real));
    }

    LyapunovCertificate cert;
    cert.Q = Q;
    cert.alpha = alpha;
    cert.P = solve_shifted_lyapunov(shifted, Q);
    cert.residual = lyapunov_residual(cert.P, lap.L, Q, lap.v_left, alpha);
    cert.lambda_P = spectral_norm(cert.P);
    cert.lambda_L = spectral_norm(lap.L);

    Eigen::SelfAdjointEigenSolver<Mat> sym(cert.P, Eigen::EigenvaluesOnly);
    cert.min_eig_P = sym.eigenvalues()(0);
    if (!(cert.min_eig_P > 0.0)) {
        throw DegeneracyError("solve_P: computed P is not positive definite (min eig " +
                              std::to_string(cert.min_eig_P) + ")");
    }
    cert.condition_number = sym.eigenvalues()(n - 1) / cert.min_eig_P;
    return cert;
}

[[nodiscard]] inline LyapunovCertificate solve_P(const LaplacianData& lap, double q_scale = 1.0,
                                                 double alpha = 1.0) {
    return solve_P(lap, q_scale * Mat::Identity(lap.n(), lap.n()), alpha);
}

} // namespace consensus_net
