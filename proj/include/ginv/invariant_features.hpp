#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ginv/common.hpp"
#include "ginv/group_algebra.hpp"
#include "ginv/invariant_kernel.hpp"
#include "ginv/kernels.hpp"

namespace ginv {

inline constexpr double kUnitNormTolerance = 1e-8;
inline constexpr double kStabilitySlack = 1e-9;

/**
 * Pooling nonlinearities eta_n applied to the projections of one sample onto
 * the transformed copies of one template, then averaged (or maxed) over the
 * set.
 *
 *   mean         eta(a) = a                                   1 output
 *   max          max over the set of a                        1 output
 *   moment(n)    eta_j(a) = a^j, j = 1..n                     n outputs
 *   cdf(B, s)    eta_j(a) = sigmoid((a - b_j) / s)            B outputs
 *                with b_j = -1 + (2j - 1)/B bin centres on [-1, 1]
 *
 * Every eta is multiplied by `scale`, which is how a pooling is brought
 * under the stability premise outputs * L <= 1/sqrt(2).
 */
struct PoolingSpec {
    enum class Mode { mean, max, moment, cdf };

    Mode mode = Mode::mean;
    int order = 1;
    int bins = 1;
    double smoothing = 1.0;
    double scale = 1.0;

    static PoolingSpec mean(double scale = 1.0);
    static PoolingSpec max(double scale = 1.0);
    static PoolingSpec moment(int order, double scale = 1.0);
    static PoolingSpec cdf(int bins, double smoothing, double scale = 1.0);
    /// `mean`, `max`, `moment:n=<k>`, `cdf:bins=<B>,s=<smoothing>`, each with
    /// an optional `scale=<f>` parameter.
    static PoolingSpec parse(std::string_view text);

    std::size_t outputs() const;
    /// max_n L_{eta_n} for inputs in [-1, 1], including `scale`.
    double lipschitz() const;
    /// outputs() * lipschitz() <= 1/sqrt(2).
    bool stability_compliant() const;
    /// Largest per-eta Lipschitz constant that would satisfy the premise.
    double required_lipschitz() const;
    std::string to_string() const;

    void validate() const;
    /// Pools one projection list into `out` (length outputs()).
    void pool(std::span<const double> projections, std::span<double> out) const;
};

/// K x outputs pooled projections.
struct PooledSignature {
    Matrix values;
    PoolingSpec config;
    std::size_t template_count = 0;
    bool normalized = false;

    /// Row-major flattening: t1_eta1, t1_eta2, ..., tK_etaN.
    Vector flatten() const;
};

/// mu(x): pooled <x, g t^k> over the set. x and every template must have unit
/// norm; the set is applied to the templates only.
PooledSignature linear_signature(const Vector& x, const OrthogonalSet& set, const Matrix& templates,
                                 const PoolingSpec& pooling);

/// Upsilon(x): pooled k(x, g t^k) over the bank's set. Kernels that are not
/// normalized have each projection divided by sqrt(k(x,x) k(gt,gt)).
PooledSignature kernel_signature(const Vector& x, const TemplateBank& bank, const PoolingSpec& pooling);

/// Same computation as kernel_signature over a partially observed set G0.
/// Invariance is only guaranteed when the projections of x vanish outside G0.
PooledSignature partial_signature(const Vector& x, const TemplateBank& bank, const PoolingSpec& pooling);

// Batch extraction: one flattened signature per row of X.
Matrix linear_signatures(const Matrix& X, const OrthogonalSet& set, const Matrix& templates,
                         const PoolingSpec& pooling);
Matrix kernel_signatures(const Matrix& X, const TemplateBank& bank, const PoolingSpec& pooling);

std::vector<std::string> signature_column_names(std::size_t template_count, const PoolingSpec& pooling);
/// CSV with a header row of "t<k>_eta<n>" names, one row per sample.
void write_signature_csv(std::ostream& out, const Matrix& signatures, std::size_t template_count,
                         const PoolingSpec& pooling);

struct StabilityTerms {
    double distance_sq = 0.0;   ///< (1/K) sum_k |Y^k(x) - Y^k(x')|^2
    double kernel_value = 0.0;  ///< k(x, x')
    double hausdorff = 0.0;     ///< max_{g, g'} k(gx, g'x')
    double bound_hausdorff() const { return 1.0 - hausdorff; }
    double bound_plain() const { return 1.0 - kernel_value; }
};

StabilityTerms stability_terms(const TemplateBank& bank, const PoolingSpec& pooling, const Vector& x,
                               const Vector& x_prime);

struct StabilityReport {
    bool certified = false;
    std::string reason;            ///< why certification was refused, if it was
    double required_lipschitz = 0.0;
    std::size_t pairs = 0;
    /// Pairs breaking the governing bound: 1 - k_H (strict) for |G0| > 1,
    /// 1 - k(x, x') for |G0| = 1, beyond kStabilitySlack.
    std::size_t violations = 0;
    /// Pairs breaking the looser 1 - k(x, x') bound.
    std::size_t plain_violations = 0;
    /// max over pairs of (distance_sq - governing bound); negative when every
    /// pair sits strictly inside its bound.
    double max_slack = -std::numeric_limits<double>::infinity();
};

/// Samples unit-norm pairs and compares the signature distance with the
/// kernel bounds. Refuses to certify non-compliant pooling, max pooling, or a
/// kernel with k(x, x) != 1.
StabilityReport check_stability(const TemplateBank& bank, const PoolingSpec& pooling, std::size_t pair_count,
                                std::uint64_t seed);

} // namespace ginv
