#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ginv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a numerical guarantee cannot be met (failed factorization,
/// violated invariance/closure check, unmet stability premise).
/// Precondition violations on arguments use std::invalid_argument instead.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest absolute entry of a matrix expression.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m)
{
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

} // namespace ginv
