#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "core.hpp"
#include "graph.hpp"
#include "spectral.hpp"

namespace consensus_net {

// Controller gains for the matched loop together with the Lyapunov
// parameters (mu, b, rho, epsilon) of H = H_s + H_d.
struct MatchedGains {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double gamma3 = 0.0;
    double gamma4 = 0.0;
    double mu = 1.0;
    double b = 0.0;
    double rho = 0.0;
    double epsilon = 0.0;

    bool operator==(const MatchedGains&) const = default;
};

// Controller gains for the unmatched loop; alpha2 weighs e_y in W.
struct UnmatchedGains {
    double k_x = 0.0;
    double k_d = 0.0;
    double k_s = 0.0;
    double alpha1 = 0.0;
    double nu = 0.0;
    double alpha2 = 1.0;

    bool operator==(const UnmatchedGains&) const = default;
};

struct CertificationCheck {
    std::string name;
    std::string inequality;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool strict = true;

    [[nodiscard]] bool satisfied() const { return strict ? margin > 0.0 : margin >= 0.0; }
};

struct CertificationReport {
    bool passed = false;
    std::vector<CertificationCheck> checks;
    double min_eig_N_or_M = 0.0;
    // Only for the unmatched loop: smallest eigenvalue of the Schur matrix D.
    double min_eig_D = 0.0;
    bool has_D = false;

    [[nodiscard]] const CertificationCheck* find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }
};

class InfeasibleGainError : public ValidationError {
public:
    InfeasibleGainError(const std::string& what, double minimal_b)
        : ValidationError(what), minimal_b_(minimal_b) {}
    [[nodiscard]] double minimal_b() const { return minimal_b_; }

private:
    double minimal_b_;
};

namespace detail {

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string("gains: ") + name + " must be positive and finite");
    }
}

inline void validate(const MatchedGains& g) {
    require_positive(g.gamma1, "gamma1");
    require_positive(g.gamma2, "gamma2");
    require_positive(g.gamma3, "gamma3");
    require_positive(g.gamma4, "gamma4");
    require_positive(g.mu, "mu");
    require_positive(g.b, "b");
    require_positive(g.rho, "rho");
    require_positive(g.epsilon, "epsilon");
}

inline void validate(const UnmatchedGains& g) {
    require_positive(g.k_x, "k_x");
    require_positive(g.k_d, "k_d");
    require_positive(g.k_s, "k_s");
    require_positive(g.alpha1, "alpha1");
    require_positive(g.nu, "nu");
    require_positive(g.alpha2, "alpha2");
}

inline CertificationCheck equality_check(std::string name, std::string text, double lhs, double rhs) {
    const double tol = 1e-12 * std::max(1.0, std::abs(rhs));
    return {std::move(name), std::move(text), lhs, rhs, tol - std::abs(lhs - rhs), false};
}

inline double min_sym_eig(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline void require_matching(const LaplacianData& lap, const LyapunovCertificate& cert) {
    if (lap.L.rows() != cert.P.rows()) {
        throw DimensionError("certify: Laplacian is " + std::to_string(lap.L.rows()) + "x" +
                             std::to_string(lap.L.rows()) + " but P is " + std::to_string(cert.P.rows()) +
                             "x" + std::to_string(cert.P.rows()));
    }
}

} // namespace detail

// ============================================================================
// Matched loop
// ============================================================================

// Lower bound on gamma2 that makes the (e_x, e_y) Schur block positive.
[[nodiscard]] inline double matched_gamma2_bound(double gamma1, double gamma3, double mu, double b,
                                                 const LyapunovCertificate& cert) {
    const double s = 2.0 * mu + b;
    return (cert.lambda_P + 2.0 * gamma3 * (mu + b)) / s + 0.5 * gamma1 * s * cert.lambda_L * cert.lambda_L;
}

[[nodiscard]] inline double matched_min_b(double gamma1, double gamma3, const LyapunovCertificate& cert) {
    return gamma3 / gamma1 * cert.lambda_P * cert.lambda_P;
}

// The 3n x 3n matrix N with dH/dt = -1/2 e^T N e, e = (e_x, e_y, e_d).
[[nodiscard]] inline Mat assemble_N(const MatchedGains& g, const Mat& L, const Mat& P) {
    const Eigen::Index n = L.rows();
    const Mat I = Mat::Identity(n, n);
    const Mat n12 = g.gamma1 * (2.0 * g.mu + g.b) * L.transpose() - (g.rho - g.epsilon * g.gamma2) * P;
    const Mat n13 = g.gamma3 * g.epsilon * P;
    const Mat n22 = 2.0 * (2.0 * g.b * g.gamma2 - g.b * g.gamma4 + 2.0 * g.mu * g.gamma2) * I - 2.0 * g.epsilon * P;
    const Mat n23 =
        (2.0 * g.mu * g.gamma3 + 2.0 * g.b * g.gamma3 + g.b * g.gamma2 - g.b * g.gamma4) * I;
    const Mat n33 = 2.0 * g.gamma3 * g.b * I;

    Mat N(3 * n, 3 * n);
    N << g.gamma1 * g.epsilon * I, n12, n13,
         n12.transpose(), n22, n23,
         n13.transpose(), n23.transpose(), n33;
    return N;
}

[[nodiscard]] inline CertificationReport certify_matched(const MatchedGains& g, const LaplacianData& lap,
                                                         const LyapunovCertificate& cert) {
    detail::validate(g);
    detail::require_matching(lap, cert);

    CertificationReport r;
    {
        const double lhs = std::sqrt(2.0 * g.rho * g.mu / cert.lambda_P);
        r.checks.push_back({"H_positivity", "sqrt(2*rho*mu/||P||) > epsilon", lhs, g.epsilon,
                            lhs - g.epsilon, true});
    }
    r.checks.push_back(detail::equality_check("gamma4_substitution", "gamma4 = 2*gamma3*(1 + mu/b) + gamma2",
                                              g.gamma4, 2.0 * g.gamma3 * (1.0 + g.mu / g.b) + g.gamma2));
    r.checks.push_back(
        detail::equality_check("epsilon_substitution", "epsilon = rho/gamma2", g.epsilon, g.rho / g.gamma2));
    r.checks.push_back(detail::equality_check("rho_substitution", "rho = gamma2", g.rho, g.gamma2));
    {
        const double bound = matched_gamma2_bound(g.gamma1, g.gamma3, g.mu, g.b, cert);
        r.checks.push_back({"gamma2_bound",
                            "gamma2 > (lambda_P + 2*gamma3*(mu+b))/(2*mu+b) + gamma1*(2*mu+b)*lambda_L^2/2",
                            g.gamma2, bound, g.gamma2 - bound, true});
    }
    {
        const double bound = matched_min_b(g.gamma1, g.gamma3, cert);
        r.checks.push_back({"b_bound", "b >= (gamma3/gamma1)*lambda_P^2", g.b, bound, g.b - bound, false});
    }

    r.min_eig_N_or_M = detail::min_sym_eig(assemble_N(g, lap.L, cert.P));
    r.passed = r.min_eig_N_or_M > 0.0;
    for (const auto& c : r.checks) {
        r.passed = r.passed && c.satisfied();
    }
    return r;
}

// Picks gamma2 just above its lower bound and fills gamma4, rho and epsilon
// from the substitutions. The margin starts at 5% and doubles while N is
// not positive definite (the e_x/e_d coupling gamma3*epsilon*P is not
// covered by the gamma2 bound alone).
[[nodiscard]] inline MatchedGains suggest_matched(double gamma1, double gamma3, double mu, double b,
                                                  const LaplacianData& lap, const LyapunovCertificate& cert) {
    detail::require_positive(gamma1, "gamma1");
    detail::require_positive(gamma3, "gamma3");
    detail::require_positive(mu, "mu");
    detail::require_positive(b, "b");
    detail::require_matching(lap, cert);

    const double b_min = matched_min_b(gamma1, gamma3, cert);
    if (b < b_min) {
        throw InfeasibleGainError("suggest_matched: b = " + std::to_string(b) +
                                      " is below the minimal admissible b = " + std::to_string(b_min),
                                  b_min);
    }

    const double bound = matched_gamma2_bound(gamma1, gamma3, mu, b, cert);
    MatchedGains g;
    g.gamma1 = gamma1;
    g.gamma3 = gamma3;
    g.mu = mu;
    g.b = b;
    double slack = 0.05;
    for (int attempt = 0; attempt < 64; ++attempt, slack *= 2.0) {
        g.gamma2 = (1.0 + slack) * bound;
        g.rho = g.gamma2;
        g.epsilon = g.rho / g.gamma2;
        g.gamma4 = 2.0 * gamma3 * (1.0 + mu / b) + g.gamma2;
        if (certify_matched(g, lap, cert).passed) {
            return g;
        }
    }
    throw DegeneracyError("suggest_matched: no gamma2 makes N positive definite");
}

[[nodiscard]] inline Eigen::Matrix2d matched_S(const MatchedGains& g) {
    Eigen::Matrix2d s;
    s << -g.gamma2, -g.gamma3, g.gamma4, 0.0;
    return s;
}

// S is Hurwitz iff trace < 0 and det > 0.
[[nodiscard]] inline bool is_S_hurwitz(const MatchedGains& g) {
    return -g.gamma2 < 0.0 && g.gamma3 * g.gamma4 > 0.0;
}

// ============================================================================
// Unmatched loop
// ============================================================================

[[nodiscard]] inline double unmatched_kd_bound(double k_x, double alpha2, const LyapunovCertificate& cert) {
    return 0.5 * alpha2 * k_x * cert.lambda_L * cert.lambda_L + cert.lambda_P / alpha2;
}

// 2n x 2n matrix M with dW/dt = -1/2 e_xy^T M e_xy once nu = alpha1/k_d.
[[nodiscard]] inline Mat assemble_M(const UnmatchedGains& g, const Mat& L, const Mat& P) {
    const Eigen::Index n = L.rows();
    const Mat I = Mat::Identity(n, n);
    Mat M(2 * n, 2 * n);
    M << g.alpha1 / g.k_d * g.k_x * I, g.alpha2 * g.k_x * L.transpose(),
         g.alpha2 * g.k_x * L, 2.0 * (g.alpha2 * g.k_d * I - g.alpha1 / g.k_d * P);
    return M;
}

// Schur complement of M for alpha1 = k_d.
[[nodiscard]] inline Mat assemble_D(const UnmatchedGains& g, const Mat& L, const Mat& P) {
    const Eigen::Index n = L.rows();
    return 2.0 * (g.alpha2 * g.k_d * Mat::Identity(n, n) - P) - g.alpha2 * g.alpha2 * g.k_x * L * L.transpose();
}

[[nodiscard]] inline CertificationReport certify_unmatched(const UnmatchedGains& g, const LaplacianData& lap,
                                                           const LyapunovCertificate& cert) {
    detail::validate(g);
    detail::require_matching(lap, cert);

    CertificationReport r;
    {
        const double lhs = std::sqrt(g.alpha1 * g.alpha2 / cert.lambda_P);
        r.checks.push_back({"W_positivity", "sqrt(alpha1*alpha2/||P||) > nu", lhs, g.nu, lhs - g.nu, true});
    }
    r.checks.push_back(detail::equality_check("nu_substitution", "nu = alpha1/k_d", g.nu, g.alpha1 / g.k_d));
    r.checks.push_back(detail::equality_check("alpha1_substitution", "alpha1 = k_d", g.alpha1, g.k_d));
    {
        const double bound = unmatched_kd_bound(g.k_x, g.alpha2, cert);
        r.checks.push_back({"k_d_bound", "k_d > alpha2*k_x*lambda_L^2/2 + lambda_P/alpha2", g.k_d, bound,
                            g.k_d - bound, true});
    }

    r.min_eig_N_or_M = detail::min_sym_eig(assemble_M(g, lap.L, cert.P));
    r.min_eig_D = detail::min_sym_eig(assemble_D(g, lap.L, cert.P));
    r.has_D = true;
    r.checks.push_back({"D_psd", "min eig(2*(alpha2*k_d*I - P) - alpha2^2*k_x*L*L^T) >= 0", r.min_eig_D, 0.0,
                        r.min_eig_D, false});

    r.passed = r.min_eig_N_or_M > 0.0;
    for (const auto& c : r.checks) {
        r.passed = r.passed && c.satisfied();
    }
    return r;
}

// Certified unmatched gains for given k_x, k_s, alpha2: k_d 5% above its
// bound, alpha1 = k_d and nu = alpha1/k_d = 1.
[[nodiscard]] inline UnmatchedGains suggest_unmatched(double k_x, double k_s, double alpha2,
                                                      const LaplacianData& lap, const LyapunovCertificate& cert) {
    detail::require_positive(k_x, "k_x");
    detail::require_positive(k_s, "k_s");
    detail::require_positive(alpha2, "alpha2");
    detail::require_matching(lap, cert);
    UnmatchedGains g;
    g.k_x = k_x;
    g.k_s = k_s;
    g.alpha2 = alpha2;
    g.k_d = 1.05 * unmatched_kd_bound(k_x, alpha2, cert);
    g.alpha1 = g.k_d;
    g.nu = g.alpha1 / g.k_d;
    return g;
}

} // namespace consensus_net
