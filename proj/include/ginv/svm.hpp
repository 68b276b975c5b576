#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ginv/common.hpp"
#include "ginv/invariant_kernel.hpp"
#include "ginv/kernels.hpp"

namespace ginv {

/// Dual problem: minimize -sum(alpha) + 1/2 sum_ij y_i y_j alpha_i alpha_j K_ij
/// subject to sum(alpha_i y_i) = 0 and 0 <= alpha_i <= C / N.
struct TrainingProblem {
    Matrix gram;
    Vector labels;
    double C = 1.0;

    double box() const { return C / static_cast<double>(labels.size()); }
    void validate() const;
};

struct SolverOptions {
    double tol = 1e-6;
    /// Cap on pair updates.
    std::size_t max_passes = 1'000'000;
    /// Seeds the scan order used to break ties between equally violating indices.
    std::uint64_t seed = 0;
};

struct DualSolution {
    Vector alpha;
    double bias = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    /// max(0, max_{I_up} -y G - min_{I_low} -y G) at termination.
    double kkt_residual = 0.0;
    double objective = 0.0;
    std::vector<std::size_t> support_indices;
};

/// Pairwise (SMO) coordinate descent with maximal-violating-pair selection.
DualSolution solve_dual(const TrainingProblem& problem, const SolverOptions& options = {});

/// Objective of the dual at alpha.
double dual_objective(const Matrix& gram, const Vector& labels, const Vector& alpha);

/// Kernel used at prediction time: gram(A, B) has entry (i, j) = k(A_i, B_j).
struct KernelFunction {
    std::string description;
    std::function<Matrix(const Matrix&, const Matrix&)> gram;
};

KernelFunction base_kernel_function(const KernelSpec& spec);
KernelFunction invariant_kernel_function(std::shared_ptr<const InvariantKernel> handle);

class SvmModel {
public:
    SvmModel(KernelFunction kernel, Matrix support_vectors, Vector alpha, Vector labels, double bias,
             std::vector<std::size_t> support_indices, bool converged, double kkt_residual);

    double decision_value(const Vector& x) const;
    Vector decision_values(const Matrix& X) const;
    int predict(const Vector& x) const;
    Eigen::VectorXi predict(const Matrix& X) const;

    /// |w| with |w|^2 = sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j) over support vectors.
    double weight_norm() const;

    const KernelFunction& kernel() const { return kernel_; }
    const Matrix& support_vectors() const { return support_vectors_; }
    const Vector& alpha() const { return alpha_; }
    const Vector& labels() const { return labels_; }
    double bias() const { return bias_; }
    const std::vector<std::size_t>& support_indices() const { return support_indices_; }
    bool converged() const { return converged_; }
    double kkt_residual() const { return kkt_residual_; }

private:
    KernelFunction kernel_;
    Matrix support_vectors_;
    Vector alpha_;
    Vector labels_;
    Vector coef_; // alpha_i * y_i
    double bias_;
    std::vector<std::size_t> support_indices_;
    bool converged_;
    double kkt_residual_;
};

/// Builds the Gram with `kernel`, solves the dual and keeps the support vectors.
SvmModel train_svm(const Matrix& X, const Vector& labels, const KernelFunction& kernel, double C = 1.0,
                   const SolverOptions& options = {});

/// min_i y_i f(x_i) / |w|. Non-positive when some point is misclassified.
double margin_of(const SvmModel& model, const Matrix& X, const Vector& labels);

/// What a model file records about the kernel so it can be rebuilt.
struct KernelReference {
    std::string kernel_spec = "linear";
    std::string mode = "none"; // none | direct | one_sided | template
    std::string group_file;    // direct / one_sided
    std::string bank_file;     // template
};

/// Plain-text model: kernel reference, bias, convergence flag, then one line
/// per support vector "index alpha label x_1 ... x_d".
void write_model(std::ostream& out, const SvmModel& model, const KernelReference& ref);

struct ModelRecord {
    KernelReference ref;
    Matrix support_vectors;
    Vector alpha;
    Vector labels;
    double bias = 0.0;
    std::vector<std::size_t> support_indices;
    bool converged = false;
    double kkt_residual = 0.0;

    SvmModel bind(KernelFunction kernel) const;
};

ModelRecord read_model(std::istream& in);

} // namespace ginv
