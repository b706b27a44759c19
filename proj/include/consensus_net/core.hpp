#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace consensus_net {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ============================================================================
// Errors
// ============================================================================
// Every failure the library reports derives from Error. The CLI maps the
// concrete type onto an exit status (see tools/consensus_net.cpp).

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: bad graph weights, schema violations, misaligned grids.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Numerically degenerate input (non-simple zero eigenvalue, singular shift).
class DegeneracyError : public Error {
public:
    using Error::Error;
};

// Mismatched matrix/vector sizes between otherwise valid objects.
class DimensionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Largest singular value.
[[nodiscard]] inline double spectral_norm(const Mat& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

namespace detail {

inline void require_same_size(Eigen::Index got, Eigen::Index expected, const std::string& what) {
    if (got != expected) {
        throw DimensionError(what + ": expected size " + std::to_string(expected) + ", got " +
                             std::to_string(got));
    }
}

[[nodiscard]] inline bool all_finite(const Vec& v) {
    return v.allFinite();
}

} // namespace detail

} // namespace consensus_net
