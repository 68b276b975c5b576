#include "ginv/svm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace ginv {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

void TrainingProblem::validate() const
{
    const auto n = labels.size();
    if (n < 2)
        throw std::invalid_argument("training problem needs at least two samples");
    if (gram.rows() != n || gram.cols() != n)
        throw std::invalid_argument("gram must be N x N with N = number of labels");
    if (!gram.allFinite())
        throw std::invalid_argument("gram has non-finite entries");
    if (max_abs(gram - gram.transpose()) > 1e-10)
        throw std::invalid_argument("gram is not symmetric within 1e-10");
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] == 1.0)
            pos = true;
        else if (labels[i] == -1.0)
            neg = true;
        else
            throw std::invalid_argument("labels must be +1 or -1");
    }
    if (!pos || !neg)
        throw std::invalid_argument("labels must contain both classes");
    if (!(C > 0.0) || !std::isfinite(C))
        throw std::invalid_argument("C must be positive and finite");
}

double dual_objective(const Matrix& gram, const Vector& labels, const Vector& alpha)
{
    const Vector ya = labels.cwiseProduct(alpha);
    return 0.5 * ya.dot(gram * ya) - alpha.sum();
}

DualSolution solve_dual(const TrainingProblem& problem, const SolverOptions& options)
{
    problem.validate();
    const Matrix& K = problem.gram;
    const Vector& y = problem.labels;
    const auto n = y.size();
    const double upper = problem.box();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (options.seed != 0) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    Vector alpha = Vector::Zero(n);
    // Gradient of the dual objective: G = Q alpha - 1, Q = (y y^T) .* K.
    Vector grad = Vector::Constant(n, -1.0);

    auto in_up = [&](Eigen::Index t) { return y[t] > 0 ? alpha[t] < upper : alpha[t] > 0; };
    auto in_low = [&](Eigen::Index t) { return y[t] > 0 ? alpha[t] > 0 : alpha[t] < upper; };

    DualSolution sol;
    double gap = 0.0;
    for (;;) {
        Eigen::Index i = -1, j = -1;
        double up_max = -kInf, low_min = kInf;
        for (Eigen::Index t : order) {
            const double v = -y[t] * grad[t];
            if (in_up(t) && v > up_max) {
                up_max = v;
                i = t;
            }
            if (in_low(t) && v < low_min) {
                low_min = v;
                j = t;
            }
        }
        gap = (i < 0 || j < 0) ? 0.0 : up_max - low_min;
        if (gap <= options.tol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= options.max_passes)
            break;
        ++sol.iterations;

        // Move alpha_i by +y_i t and alpha_j by -y_j t; sum(y alpha) is unchanged.
        const double quad = std::max(K(i, i) + K(j, j) - 2.0 * K(i, j), kTau);
        const double room_i = y[i] > 0 ? upper - alpha[i] : alpha[i];
        const double room_j = y[j] > 0 ? alpha[j] : upper - alpha[j];
        const double step = std::min({gap / quad, room_i, room_j});
        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        // Land exactly on the box when the step was clipped.
        if (step == room_i)
            alpha[i] = y[i] > 0 ? upper : 0.0;
        if (step == room_j)
            alpha[j] = y[j] > 0 ? 0.0 : upper;
        grad.array() += step * y.array() * (K.col(i) - K.col(j)).array();
    }

    // Bias: mean of -y G over free vectors, else midpoint of the bound interval.
    double free_sum = 0.0;
    std::size_t free_count = 0;
    double lower_b = -kInf, upper_b = kInf;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double v = -y[t] * grad[t];
        if (alpha[t] > 0.0 && alpha[t] < upper) {
            free_sum += v;
            ++free_count;
        } else if ((alpha[t] == 0.0) == (y[t] > 0)) {
            lower_b = std::max(lower_b, v);
        } else {
            upper_b = std::min(upper_b, v);
        }
    }
    if (free_count > 0)
        sol.bias = free_sum / static_cast<double>(free_count);
    else if (std::isfinite(lower_b) && std::isfinite(upper_b))
        sol.bias = 0.5 * (lower_b + upper_b);
    else
        sol.bias = std::isfinite(lower_b) ? lower_b : upper_b;

    sol.kkt_residual = std::max(0.0, gap);
    sol.objective = dual_objective(K, y, alpha);
    for (Eigen::Index t = 0; t < n; ++t)
        if (alpha[t] > 0.0)
            sol.support_indices.push_back(static_cast<std::size_t>(t));
    sol.alpha = std::move(alpha);
    return sol;
}

KernelFunction base_kernel_function(const KernelSpec& spec)
{
    return {spec.to_string(), [spec](const Matrix& a, const Matrix& b) { return gram_matrix(spec, a, b); }};
}

KernelFunction invariant_kernel_function(std::shared_ptr<const InvariantKernel> handle)
{
    if (!handle)
        throw std::invalid_argument("invariant kernel function requires a handle");
    std::string desc = handle->describe();
    return {std::move(desc),
            [handle](const Matrix& a, const Matrix& b) { return invariant_gram(*handle, a, b); }};
}

SvmModel::SvmModel(KernelFunction kernel, Matrix support_vectors, Vector alpha, Vector labels, double bias,
                   std::vector<std::size_t> support_indices, bool converged, double kkt_residual)
    : kernel_(std::move(kernel)), support_vectors_(std::move(support_vectors)), alpha_(std::move(alpha)),
      labels_(std::move(labels)), bias_(bias), support_indices_(std::move(support_indices)),
      converged_(converged), kkt_residual_(kkt_residual)
{
    if (alpha_.size() != labels_.size() || alpha_.size() != support_vectors_.rows() ||
        support_indices_.size() != static_cast<std::size_t>(alpha_.size()))
        throw std::invalid_argument("support vector, alpha, label and index counts must agree");
    if (!kernel_.gram)
        throw std::invalid_argument("model requires a kernel function");
    coef_ = alpha_.cwiseProduct(labels_);
}

Vector SvmModel::decision_values(const Matrix& X) const
{
    if (support_vectors_.rows() == 0)
        return Vector::Constant(X.rows(), bias_);
    if (X.cols() != support_vectors_.cols())
        throw std::invalid_argument("decision_value: expected dimension " + std::to_string(support_vectors_.cols()) +
                                    ", got " + std::to_string(X.cols()));
    return (kernel_.gram(X, support_vectors_) * coef_).array() + bias_;
}

double SvmModel::decision_value(const Vector& x) const
{
    const Matrix row = x.transpose();
    return decision_values(row)[0];
}

int SvmModel::predict(const Vector& x) const
{
    return decision_value(x) >= 0.0 ? 1 : -1;
}

Eigen::VectorXi SvmModel::predict(const Matrix& X) const
{
    const Vector f = decision_values(X);
    Eigen::VectorXi out(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i)
        out[i] = f[i] >= 0.0 ? 1 : -1;
    return out;
}

double SvmModel::weight_norm() const
{
    if (support_vectors_.rows() == 0)
        return 0.0;
    const Matrix k = kernel_.gram(support_vectors_, support_vectors_);
    return std::sqrt(std::max(0.0, coef_.dot(k * coef_)));
}

SvmModel train_svm(const Matrix& X, const Vector& labels, const KernelFunction& kernel, double C,
                   const SolverOptions& options)
{
    if (X.rows() != labels.size())
        throw std::invalid_argument("train_svm: sample and label counts differ");
    TrainingProblem problem{kernel.gram(X, X), labels, C};
    // Remove round-off asymmetry from the Gram assembly.
    problem.gram = 0.5 * (problem.gram + problem.gram.transpose()).eval();
    DualSolution sol = solve_dual(problem, options);

    const auto s = static_cast<Eigen::Index>(sol.support_indices.size());
    Matrix sv(s, X.cols());
    Vector a(s), y(s);
    for (Eigen::Index k = 0; k < s; ++k) {
        const auto idx = static_cast<Eigen::Index>(sol.support_indices[static_cast<std::size_t>(k)]);
        sv.row(k) = X.row(idx);
        a[k] = sol.alpha[idx];
        y[k] = labels[idx];
    }
    return SvmModel(kernel, std::move(sv), std::move(a), std::move(y), sol.bias, std::move(sol.support_indices),
                    sol.converged, sol.kkt_residual);
}

double margin_of(const SvmModel& model, const Matrix& X, const Vector& labels)
{
    if (X.rows() != labels.size())
        throw std::invalid_argument("margin_of: sample and label counts differ");
    const Vector f = model.decision_values(X);
    const double functional = (labels.array() * f.array()).minCoeff();
    const double norm = model.weight_norm();
    if (norm == 0.0)
        return functional > 0 ? kInf : functional;
    return functional / norm;
}

void write_model(std::ostream& out, const SvmModel& model, const KernelReference& ref)
{
    out << "ginv-svm-model 1\n";
    out << "kernel " << ref.kernel_spec << '\n';
    out << "mode " << ref.mode << '\n';
    out << "group " << (ref.group_file.empty() ? "-" : ref.group_file) << '\n';
    out << "bank " << (ref.bank_file.empty() ? "-" : ref.bank_file) << '\n';
    out << "bias " << format_double(model.bias()) << '\n';
    out << "converged " << (model.converged() ? 1 : 0) << '\n';
    out << "kkt_residual " << format_double(model.kkt_residual()) << '\n';
    out << "support " << model.support_vectors().rows() << ' ' << model.support_vectors().cols() << '\n';
    for (Eigen::Index k = 0; k < model.support_vectors().rows(); ++k) {
        out << model.support_indices()[static_cast<std::size_t>(k)] << ' ' << format_double(model.alpha()[k]) << ' '
            << (model.labels()[k] > 0 ? "1" : "-1");
        for (Eigen::Index j = 0; j < model.support_vectors().cols(); ++j)
            out << ' ' << format_double(model.support_vectors()(k, j));
        out << '\n';
    }
}

ModelRecord read_model(std::istream& in)
{
    ModelRecord rec;
    std::string line;
    auto expect = [&](const std::string& key) {
        if (!std::getline(in, line))
            throw std::invalid_argument("model file ended before '" + key + "'");
        if (line.rfind(key + ' ', 0) != 0)
            throw std::invalid_argument("model file: expected '" + key + "' line, got '" + line + "'");
        return line.substr(key.size() + 1);
    };
    if (!std::getline(in, line) || line != "ginv-svm-model 1")
        throw std::invalid_argument("not a model file (missing 'ginv-svm-model 1' header)");
    rec.ref.kernel_spec = expect("kernel");
    rec.ref.mode = expect("mode");
    rec.ref.group_file = expect("group");
    rec.ref.bank_file = expect("bank");
    if (rec.ref.group_file == "-")
        rec.ref.group_file.clear();
    if (rec.ref.bank_file == "-")
        rec.ref.bank_file.clear();
    rec.bias = std::stod(expect("bias"));
    rec.converged = expect("converged") == "1";
    rec.kkt_residual = std::stod(expect("kkt_residual"));
    std::istringstream dims(expect("support"));
    Eigen::Index s = 0, d = 0;
    if (!(dims >> s >> d) || s < 0 || d < 1)
        throw std::invalid_argument("model file: malformed 'support' line");
    rec.support_vectors.resize(s, d);
    rec.alpha.resize(s);
    rec.labels.resize(s);
    for (Eigen::Index k = 0; k < s; ++k) {
        if (!std::getline(in, line))
            throw std::invalid_argument("model file: missing support vector row " + std::to_string(k));
        std::istringstream row(line);
        std::size_t idx = 0;
        double a = 0, lab = 0;
        if (!(row >> idx >> a >> lab))
            throw std::invalid_argument("model file: malformed support vector row " + std::to_string(k));
        rec.support_indices.push_back(idx);
        rec.alpha[k] = a;
        rec.labels[k] = lab;
        for (Eigen::Index j = 0; j < d; ++j) {
            std::string tok;
            if (!(row >> tok))
                throw std::invalid_argument("model file: short support vector row " + std::to_string(k));
            rec.support_vectors(k, j) = std::stod(tok);
        }
    }
    return rec;
}

SvmModel ModelRecord::bind(KernelFunction kernel) const
{
    return SvmModel(std::move(kernel), support_vectors, alpha, labels, bias, support_indices, converged,
                    kkt_residual);
}

} // namespace ginv
