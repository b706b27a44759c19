#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Weight matrix a(i, j) > 0 means j -> i. Tries every root with a BFS.
inline bool brute_force_spanning_tree(const Mat& a) {
    const auto n = a.rows();
    for (Eigen::Index root = 0; root < n; ++root) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<Eigen::Index> queue{root};
        seen[static_cast<std::size_t>(root)] = 1;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const auto j = queue[head];
            for (Eigen::Index i = 0; i < n; ++i) {
                if (a(i, j) > 0.0 && !seen[static_cast<std::size_t>(i)]) {
                    seen[static_cast<std::size_t>(i)] = 1;
                    queue.push_back(i);
                }
            }
        }
        if (static_cast<Eigen::Index>(queue.size()) == n) {
            return true;
        }
    }
    return false;
}

inline Mat laplacian(const Mat& a) {
    Mat l = -a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        l(i, i) = a.row(i).sum() - a(i, i);
    }
    return l;
}

// Solves P L + L^T P + alpha (P 1 v^T + v 1^T P) = Q for all n^2 entries of P
// by assembling the linear operator column by column.
inline Mat shifted_lyapunov_kron_solve(const Mat& L, const Mat& Q, const Vec& v, double alpha) {
    const auto n = L.rows();
    const Vec ones = Vec::Ones(n);
    auto op = [&](const Mat& P) -> Mat {
        return P * L + L.transpose() * P + alpha * (P * ones * v.transpose() + v * ones.transpose() * P);
    };
    Mat A(n * n, n * n);
    for (Eigen::Index k = 0; k < n * n; ++k) {
        Mat E = Mat::Zero(n, n);
        E(k % n, k / n) = 1.0;
        A.col(k) = op(E).reshaped();
    }
    const Vec p = A.fullPivLu().solve(Q.reshaped());
    return p.reshaped(n, n);
}

// Scaling and squaring with a 30-term Taylor series.
inline Mat expm(const Mat& a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (std::ldexp(norm, -s) > 0.5) {
        ++s;
    }
    const Mat b = a / std::ldexp(1.0, s);
    Mat term = Mat::Identity(a.rows(), a.cols());
    Mat sum = term;
    for (int k = 1; k <= 30; ++k) {
        term = term * b / static_cast<double>(k);
        sum += term;
    }
    for (int k = 0; k < s; ++k) {
        sum = sum * sum;
    }
    return sum;
}

// Eigenvalues of a real symmetric 3x3 matrix by the trigonometric formula,
// ascending.
inline std::array<double, 3> sym3_eigenvalues(const Eigen::Matrix3d& m) {
    const double p1 = m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2);
    const double q = m.trace() / 3.0;
    if (p1 == 0.0) {
        std::array<double, 3> d{m(0, 0), m(1, 1), m(2, 2)};
        std::sort(d.begin(), d.end());
        return d;
    }
    const double p2 = (m(0, 0) - q) * (m(0, 0) - q) + (m(1, 1) - q) * (m(1, 1) - q) + (m(2, 2) - q) * (m(2, 2) - q) +
                      2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const Eigen::Matrix3d b = (m - q * Eigen::Matrix3d::Identity()) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    return {e3, e2, e1};
}

// Classical RK4 on z' = f(t, z), written out separately from the library.
template <class F>
Vec rk4(const F& f, Vec z, double t_final, int steps) {
    const double h = t_final / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const Vec a = f(t, z);
        const Vec b = f(t + h / 2, z + h / 2 * a);
        const Vec c = f(t + h / 2, z + h / 2 * b);
        const Vec d = f(t + h, z + h * c);
        z += h / 6 * (a + 2 * b + 2 * c + d);
    }
    return z;
}

// Weight matrix of a random digraph containing a spanning tree: a random
// arborescence from a random root plus extra random edges.
inline Mat random_spanning_tree_weights(int n, std::mt19937_64& rng, double extra_edge_prob = 0.2) {
    std::uniform_real_distribution<double> w(0.5, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Mat a = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        std::uniform_int_distribution<int> parent(0, k - 1);
        a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(parent(rng))]) = w(rng);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && a(i, j) == 0.0 && u(rng) < extra_edge_prob) {
                a(i, j) = w(rng);
            }
        }
    }
    return a;
}

// Weight matrix of an arbitrary random digraph (may lack a spanning tree).
inline Mat random_weights(int n, std::mt19937_64& rng, double edge_prob) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && u(rng) < edge_prob) {
                a(i, j) = 0.5 + u(rng);
            }
        }
    }
    return a;
}

// Null vector of L^T normalized to sum 1: the first equation of L^T v = 0
// is replaced by sum(v) = 1.
inline Vec left_null_vector(const Mat& L) {
    const auto n = L.rows();
    Mat A = L.transpose();
    Vec rhs = Vec::Zero(n);
    A.row(0).setOnes();
    rhs(0) = 1.0;
    return A.fullPivLu().solve(rhs);
}

} // namespace oracle
