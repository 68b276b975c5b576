#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ginv/common.hpp"

namespace ginv {

inline constexpr double kOrthogonalityTolerance = 1e-10;
inline constexpr double kClosureTolerance = 1e-10;
inline constexpr double kDistinctTolerance = 1e-8;
inline constexpr std::size_t kMaxGroupCardinality = 10'000;

/**
 * A finite, ordered set of d x d real orthogonal matrices.
 *
 * Construction validates orthogonality and pairwise distinctness. When the
 * set is declared an exact group, closure under composition and inverse and
 * membership of the identity are verified by exhaustive multiplication.
 * Instances are immutable once built.
 */
class OrthogonalSet {
public:
    OrthogonalSet(std::vector<Matrix> elements, bool is_exact_group, std::string descriptor);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return elements_.size(); }
    bool is_exact_group() const { return exact_; }
    const std::string& descriptor() const { return descriptor_; }

    const std::vector<Matrix>& elements() const { return elements_; }
    const Matrix& element(std::size_t index) const;

    /// g_index * x. Throws std::invalid_argument on a bad index or length.
    Vector apply(std::size_t index, const Vector& x) const;

    /// Block-diagonal extension diag(g, I) into a larger ambient dimension.
    /// Group structure is preserved.
    OrthogonalSet embedded(std::size_t ambient_dim) const;

    /// Elements at the given positions, as a (generally non-closed) set.
    OrthogonalSet subset(const std::vector<std::size_t>& indices) const;

    /// Position of the element within kClosureTolerance of m, if present.
    std::ptrdiff_t find(const Matrix& m, double tol = kClosureTolerance) const;

private:
    void build_index();
    void validate() const;
    void validate_group() const;

    std::size_t dim_ = 0;
    std::vector<Matrix> elements_;
    bool exact_ = false;
    std::string descriptor_;
    // Elements sorted by a fixed random linear functional of their entries,
    // used to locate near-equal matrices in O(log m).
    std::vector<std::pair<double, std::size_t>> keyed_;
    Matrix key_weights_;
};

struct SampleOptions {
    /// Replace the first draw by the identity.
    bool include_identity = false;
};

/// Haar-distributed orthogonal matrices: QR of a seeded standard Gaussian
/// matrix with the signs of R's diagonal folded into Q. Deterministic for a
/// fixed (dim, count, seed).
OrthogonalSet sample_orthogonal_set(std::size_t dim, std::size_t count, std::uint64_t seed,
                                    SampleOptions options = {});

namespace groups {
/// Rotations by multiples of 2*pi/order in the (axis_a, axis_b) plane.
struct CyclicRotation {
    std::size_t dim = 2;
    std::size_t axis_a = 0;
    std::size_t axis_b = 1;
    std::size_t order = 1;
};
/// All d! coordinate permutation matrices.
struct Permutations {
    std::size_t dim = 2;
};
/// All 2^d * d! signed permutation matrices (the hyperoctahedral group).
struct SignedPermutations {
    std::size_t dim = 2;
};
/// {I, I - 2 e_axis e_axis^T}.
struct Reflection {
    std::size_t dim = 2;
    std::size_t axis = 1;
};
/// Cyclic coordinate shifts x_i -> x_{(i+k) mod d}, k = 0..d-1.
struct CyclicShift {
    std::size_t dim = 2;
};
} // namespace groups

using GroupKind = std::variant<groups::CyclicRotation, groups::Permutations,
                               groups::SignedPermutations, groups::Reflection, groups::CyclicShift>;

/// Builds and verifies an exact finite group. Rejects cardinalities above
/// kMaxGroupCardinality.
OrthogonalSet make_exact_group(const GroupKind& kind);

/**
 * Parses a group descriptor for the given ambient dimension:
 *   cyclic:order=<n>[,plane=<a>-<b>]   perm   signed-perm
 *   reflection[:axis=<i>]   shift
 */
GroupKind parse_group_kind(std::string_view text, std::size_t dim);

/// Psi = (1/|G|) sum_g g over a finite set.
class GroupAverageOperator {
public:
    explicit GroupAverageOperator(std::shared_ptr<const OrthogonalSet> source);

    std::size_t dim() const { return matrix_.rows(); }
    const Matrix& matrix() const { return matrix_; }
    const OrthogonalSet& source() const { return *source_; }

private:
    std::shared_ptr<const OrthogonalSet> source_;
    Matrix matrix_;
};

GroupAverageOperator group_average(const OrthogonalSet& set);

/// apply_group_element: g_index * x with a norm-preservation check.
Vector apply_group_element(const OrthogonalSet& set, std::size_t index, const Vector& x);

// Plain-text interchange: a "d m is_exact_group" header line followed by m
// blocks of d rows with d shortest-round-trip decimals each. Lines starting
// with '#' are ignored on input.
void write_orthogonal_set(std::ostream& out, const OrthogonalSet& set);
OrthogonalSet read_orthogonal_set(std::istream& in);
void save_orthogonal_set(const std::string& path, const OrthogonalSet& set);
OrthogonalSet load_orthogonal_set(const std::string& path);

// Shared helpers for the text formats.
std::string format_double(double v);
void write_matrix_rows(std::ostream& out, const Matrix& m);
Matrix read_matrix_rows(std::istream& in, std::size_t rows, std::size_t cols);

} // namespace ginv
