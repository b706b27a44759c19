#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace consensus_net {

// ============================================================================
// Directed interconnection graph
// ============================================================================
// weights(i, j) = a_ij is the weight with which agent i receives agent j's
// state, i.e. the edge j -> i. Indices are 0-based in code and 1-based in
// every file format.

struct Edge {
    int from = 0;  // transmitting agent j
    int to = 0;    // receiving agent i
    double w = 1.0;
};

class DirectedGraph {
public:
    // Validates the adjacency matrix. Throws ValidationError naming the
    // offending entry on a negative weight, non-finite weight or a self loop.
    explicit DirectedGraph(Mat weights) : weights_(std::move(weights)) {
        if (weights_.rows() < 1 || weights_.rows() != weights_.cols()) {
            throw ValidationError("graph: weight matrix must be square with n >= 1");
        }
        for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
            for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
                const double a = weights_(i, j);
                const std::string where =
                    "weights(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")";
                if (!std::isfinite(a)) {
                    throw ValidationError("graph: non-finite weight at " + where);
                }
                if (a < 0.0) {
                    throw ValidationError("graph: negative weight at " + where);
                }
                if (i == j && a != 0.0) {
                    throw ValidationError("graph: self connection at " + where);
                }
            }
        }
    }

    // Edges use 0-based agent indices. Parallel edges accumulate.
    static DirectedGraph from_edges(int n, const std::vector<Edge>& edges) {
        if (n < 1) {
            throw ValidationError("graph: n must be >= 1");
        }
        Mat a = Mat::Zero(n, n);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const Edge& e = edges[k];
            const std::string where = "edges[" + std::to_string(k) + "]";
            if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
                throw ValidationError("graph: agent index out of range at " + where);
            }
            if (!std::isfinite(e.w) || e.w < 0.0) {
                throw ValidationError("graph: negative or non-finite weight at " + where + ".w");
            }
            if (e.from == e.to) {
                throw ValidationError("graph: self connection at " + where);
            }
            a(e.to, e.from) += e.w;
        }
        return DirectedGraph(std::move(a));
    }

    [[nodiscard]] int n_agents() const { return static_cast<int>(weights_.rows()); }
    [[nodiscard]] const Mat& weights() const { return weights_; }

    // Nonzero entries in row-major order (receiver, then transmitter).
    [[nodiscard]] std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (int i = 0; i < n_agents(); ++i) {
            for (int j = 0; j < n_agents(); ++j) {
                if (weights_(i, j) > 0.0) {
                    out.push_back({j, i, weights_(i, j)});
                }
            }
        }
        return out;
    }

private:
    Mat weights_;
};

// L_ij = -a_ij (i != j), L_ii = sum_k a_ik. Rows sum to zero.
[[nodiscard]] inline Mat laplacian_matrix(const DirectedGraph& g) {
    const Mat& a = g.weights();
    Mat l = -a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            row += a(i, j);
        }
        l(i, i) = row;
    }
    return l;
}

namespace detail {

// Out-neighbours along the transmit direction: j -> i whenever a_ij > 0.
inline std::vector<std::vector<int>> transmit_lists(const DirectedGraph& g) {
    const int n = g.n_agents();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (g.weights()(i, j) > 0.0) {
                out[static_cast<std::size_t>(j)].push_back(i);
            }
        }
    }
    return out;
}

inline void mark_reachable(const std::vector<std::vector<int>>& adj, int root, std::vector<char>& seen) {
    std::vector<int> stack{root};
    seen[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
        }
    }
}

} // namespace detail

// True iff some agent reaches every other agent along transmit direction.
// The vertex finishing last in a full DFS is the only possible root: if any
// root exists, the last-finished vertex lies in the root's source component.
[[nodiscard]] inline bool has_spanning_tree(const DirectedGraph& g) {
    const auto adj = detail::transmit_lists(g);
    const auto n = static_cast<std::size_t>(g.n_agents());

    std::vector<char> visited(n, 0);
    int last_finished = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (visited[s]) {
            continue;
        }
        // Iterative post-order DFS.
        std::vector<std::pair<int, std::size_t>> stack{{static_cast<int>(s), 0}};
        visited[s] = 1;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            const auto& nbrs = adj[static_cast<std::size_t>(u)];
            if (next < nbrs.size()) {
                const int w = nbrs[next++];
                if (!visited[static_cast<std::size_t>(w)]) {
                    visited[static_cast<std::size_t>(w)] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                last_finished = u;
                stack.pop_back();
            }
        }
    }

    std::vector<char> seen(n, 0);
    detail::mark_reachable(adj, last_finished, seen);
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

// Eigenvalues of a general real matrix, sorted by modulus (ascending).
[[nodiscard]] inline std::vector<std::complex<double>> eigenvalues_by_modulus(const Mat& m) {
    Eigen::EigenSolver<Mat> es(m, /*computeEigenvectors=*/false);
    std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
    std::sort(ev.begin(), ev.end(),
              [](const auto& a, const auto& b) { return std::abs(a) < std::abs(b); });
    return ev;
}

// Left eigenvector of the simple zero eigenvalue: v^T L = 0, v >= 0, sum v = 1.
// Computed as the null space of L^T from a full SVD (rank revealing).
[[nodiscard]] inline Vec left_eigenvector(const Mat& l) {
    const Eigen::Index n = l.rows();
    if (n != l.cols() || n < 1) {
        throw DimensionError("left_eigenvector: Laplacian must be square and non-empty");
    }
    if (n == 1) {
        return Vec::Ones(1);
    }
    const auto ev = eigenvalues_by_modulus(l);
    if (std::abs(ev[1]) < 1e-8) {
        throw DegeneracyError("left_eigenvector: zero eigenvalue is not simple (second smallest |lambda| = " +
                              std::to_string(std::abs(ev[1])) + ")");
    }

    Eigen::JacobiSVD<Mat> svd(l.transpose(), Eigen::ComputeFullV);
    Vec v = svd.matrixV().col(n - 1);
    if (v.sum() < 0.0) {
        v = -v;
    }
    v /= v.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (v(i) < 0.0 && v(i) >= -1e-12) {
            v(i) = 0.0;
        }
    }
    if ((v.array() < 0.0).any()) {
        throw DegeneracyError("left_eigenvector: null vector of L^T has mixed signs");
    }
    v /= v.sum();
    return v;
}

// ============================================================================
// Laplacian bundle
// ============================================================================

struct LaplacianData {
    Mat L;
    bool has_spanning_tree = false;
    Vec v_left;  // empty when has_spanning_tree is false
    double lambda_L = 0.0;
    bool nonzero_eigenvalue_real_parts_positive = false;

    [[nodiscard]] int n() const { return static_cast<int>(L.rows()); }
};

[[nodiscard]] inline LaplacianData build_laplacian(const DirectedGraph& g) {
    LaplacianData out;
    out.L = laplacian_matrix(g);
    out.has_spanning_tree = has_spanning_tree(g);
    out.lambda_L = spectral_norm(out.L);

    const auto ev = eigenvalues_by_modulus(out.L);
    out.nonzero_eigenvalue_real_parts_positive =
        std::all_of(ev.begin() + 1, ev.end(), [](const auto& z) { return z.real() > 0.0; });

    if (out.has_spanning_tree) {
        out.v_left = left_eigenvector(out.L);
    }
    return out;
}

} // namespace consensus_net
