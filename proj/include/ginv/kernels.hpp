#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "ginv/common.hpp"
#include "ginv/group_algebra.hpp"

namespace ginv {

namespace kernel {
struct Linear {};
/// exp(-|x - y|^2 / (2 sigma^2))
struct Rbf {
    double sigma = 1.0;
};
/// (<x, y> + offset)^degree
struct Polynomial {
    int degree = 2;
    double offset = 1.0;
};
} // namespace kernel

/**
 * A positive semi-definite base kernel. Every shipped kind depends on its
 * arguments only through inner products and distances, so each is unitary:
 * k(gx, gy) = k(x, y) for every orthogonal g.
 *
 * Text grammar: `linear`, `rbf:σ=<float>` (also `rbf:sigma=`),
 * `poly:d=<int>,c=<float>`.
 */
class KernelSpec {
public:
    using Kind = std::variant<kernel::Linear, kernel::Rbf, kernel::Polynomial>;

    static KernelSpec linear();
    static KernelSpec rbf(double sigma = 1.0);
    static KernelSpec polynomial(int degree = 2, double offset = 1.0);
    static KernelSpec parse(std::string_view text);

    const Kind& kind() const { return kind_; }
    bool claims_unitary() const { return true; }
    /// k(x, x) = 1 for every x.
    bool is_normalized() const { return std::holds_alternative<kernel::Rbf>(kind_); }
    std::string to_string() const;

    /// Unchecked evaluation; callers guarantee equal lengths and finite input.
    template <typename A, typename B>
    double evaluate(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const
    {
        switch (kind_.index()) {
        case 0:
            return x.dot(y);
        case 1:
            return std::exp(-(x - y).squaredNorm() * rbf_scale_);
        default: {
            const auto& p = std::get<kernel::Polynomial>(kind_);
            return integer_power(x.dot(y) + p.offset, p.degree);
        }
        }
    }

    bool operator==(const KernelSpec& other) const { return to_string() == other.to_string(); }

private:
    explicit KernelSpec(Kind kind);
    static double integer_power(double base, int exponent);

    Kind kind_;
    double rbf_scale_ = 0.0; // 1 / (2 sigma^2)
};

/// kernel_eval with validation: equal lengths and finite entries.
double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& y);

/// Entry (i, j) = k(X.row(i), Y.row(j)). Rows are samples.
Matrix gram_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Y);

/// Max over sampled (x, y, g) of |k(gx, gy) - k(x, y)|. Samples are
/// Gaussian vectors scaled to unit expected norm.
double verify_unitarity(const KernelSpec& spec, const OrthogonalSet& set, std::size_t trials, std::uint64_t seed);

/// Smallest eigenvalue of the symmetric part of a square matrix.
double min_eigenvalue(const Matrix& m);

/// PSD acceptance threshold for an n x n Gram: -1e-8 * n.
inline double psd_floor(Eigen::Index n) { return -1e-8 * static_cast<double>(n); }

} // namespace ginv
