#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ginv/common.hpp"
#include "ginv/group_algebra.hpp"
#include "ginv/kernels.hpp"

namespace ginv {

inline constexpr double kProjectionResidualTolerance = 1e-8;

/**
 * Unlabelled templates T (d x M, one template per column) together with
 * their transformed copies gT for every g in the observed set, the Gram
 * K(T, T), and a Cholesky factorization of K(T, T) + ridge * I.
 *
 * The group is only ever applied to templates. The set-averaged cross Gram
 * (1/|G0|) sum_g K(gT, T) is assembled once at construction.
 */
class TemplateBank {
public:
    /// ridge defaults to 1e-8 * trace(K(T,T)) / M.
    TemplateBank(Matrix templates, std::shared_ptr<const OrthogonalSet> set, KernelSpec kernel,
                 std::optional<double> ridge = std::nullopt);

    std::size_t dim() const { return static_cast<std::size_t>(templates_.rows()); }
    std::size_t template_count() const { return static_cast<std::size_t>(templates_.cols()); }
    const Matrix& templates() const { return templates_; }
    const Matrix& transformed(std::size_t g) const { return transformed_.at(g); }
    const std::vector<Matrix>& transformed() const { return transformed_; }
    const OrthogonalSet& set() const { return *set_; }
    std::shared_ptr<const OrthogonalSet> set_ptr() const { return set_; }
    const KernelSpec& kernel() const { return kernel_; }
    double ridge() const { return ridge_; }
    const Matrix& gram_tt() const { return gram_tt_; }
    /// (1/|G0|) sum_g K(gT, T), entry (i, j) = mean_g k(g t_i, t_j).
    const Matrix& averaged_cross_gram() const { return averaged_cross_; }

    /// u_x solving (K(T,T) + ridge I) u = k(T, x).
    Vector project(const Vector& x) const;
    /// Row i holds u for X.row(i).
    Matrix project_rows(const Matrix& X) const;

private:
    Vector solve_checked(const Vector& rhs) const;

    Matrix templates_;
    std::shared_ptr<const OrthogonalSet> set_;
    KernelSpec kernel_;
    double ridge_ = 0.0;
    std::vector<Matrix> transformed_;
    Matrix gram_tt_;
    Matrix averaged_cross_;
    Eigen::LLT<Matrix> factor_;
};

/// Seeded templates: standard Gaussian columns normalized to unit norm.
Matrix random_templates(std::size_t dim, std::size_t count, std::uint64_t seed);

/// [g_1 T, g_2 T, ...]: the union of all template orbits under the set.
Matrix orbit_closed_templates(const Matrix& templates, const OrthogonalSet& set);

Vector project_onto_templates(const TemplateBank& bank, const Vector& x);

// Bank file: the orthogonal-set block, then a "d M" line and d rows of M
// template coordinates. Kernel and ridge are supplied when loading.
void write_template_bank(std::ostream& out, const TemplateBank& bank);
TemplateBank read_template_bank(std::istream& in, const KernelSpec& kernel,
                                std::optional<double> ridge = std::nullopt);
void save_template_bank(const std::string& path, const TemplateBank& bank);
TemplateBank load_template_bank(const std::string& path, const KernelSpec& kernel,
                                std::optional<double> ridge = std::nullopt);

enum class InvariantMode { direct, one_sided, template_bank };

std::string to_string(InvariantMode mode);
InvariantMode parse_invariant_mode(std::string_view text);

/**
 * The G-invariant kernel k_Psi(x, y) = <Psi_H phi(x), Psi_H phi(y)> realized
 * as a double average over the set (direct), a one-sided average valid for
 * exact groups, or through a template bank without transforming x or y.
 */
class InvariantKernel {
public:
    static InvariantKernel direct(KernelSpec base, std::shared_ptr<const OrthogonalSet> set);
    static InvariantKernel one_sided(KernelSpec base, std::shared_ptr<const OrthogonalSet> set);
    static InvariantKernel from_bank(std::shared_ptr<const TemplateBank> bank);

    InvariantMode mode() const { return mode_; }
    const KernelSpec& base() const { return base_; }
    const OrthogonalSet* group_set() const { return set_.get(); }
    const TemplateBank* bank() const { return bank_.get(); }
    std::string describe() const;

    /// Mode-dispatched evaluation. In template mode this is the symmetric
    /// part u_x^T A_s u_y with A_s = (A + A^T)/2, A the averaged cross Gram;
    /// for sets closed under inverse A is already symmetric.
    double operator()(const Vector& x, const Vector& y) const;

private:
    InvariantKernel(InvariantMode mode, KernelSpec base, std::shared_ptr<const OrthogonalSet> set,
                    std::shared_ptr<const TemplateBank> bank);

    InvariantMode mode_;
    KernelSpec base_;
    std::shared_ptr<const OrthogonalSet> set_;
    std::shared_ptr<const TemplateBank> bank_;
    Matrix symmetric_cross_;
};

/// (1/|G0|^2) sum_{g, g'} k(g x, g' y).
double invariant_eval_direct(const InvariantKernel& handle, const Vector& x, const Vector& y);
/// (1/|G0|) sum_g k(x, g y). Throws NumericalError on a non-exact set.
double invariant_eval_one_sided(const InvariantKernel& handle, const Vector& x, const Vector& y);
/// (1/|G0|) sum_g u_x^T K(gT, T) u_y. Only template copies are transformed.
double invariant_eval_template(const InvariantKernel& handle, const Vector& x, const Vector& y);

/// Entrywise kernel matrix (rows are samples) using the handle's mode.
Matrix invariant_gram(const InvariantKernel& handle, const Matrix& X, const Matrix& Y);

} // namespace ginv
