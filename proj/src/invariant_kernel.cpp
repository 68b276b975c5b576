#include "ginv/invariant_kernel.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "ginv/instrumentation.hpp"

namespace ginv {

namespace {

void require_dim(std::size_t expected, Eigen::Index got, const char* what)
{
    if (static_cast<std::size_t>(got) != expected)
        throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(expected) +
                                    ", got " + std::to_string(got));
}

/// Rows of X mapped by g: row i becomes (g x_i)^T.
Matrix transform_rows(const Matrix& X, const Matrix& g)
{
    return X * g.transpose();
}

} // namespace

TemplateBank::TemplateBank(Matrix templates, std::shared_ptr<const OrthogonalSet> set, KernelSpec kernel,
                           std::optional<double> ridge)
    : templates_(std::move(templates)), set_(std::move(set)), kernel_(std::move(kernel))
{
    if (!set_)
        throw std::invalid_argument("template bank requires an orthogonal set");
    if (templates_.cols() < 1)
        throw std::invalid_argument("template bank requires at least one template");
    require_dim(set_->dim(), templates_.rows(), "template bank");
    if (!templates_.allFinite())
        throw std::invalid_argument("templates must be finite");
    if (!kernel_.claims_unitary())
        throw std::invalid_argument("template bank requires a unitary base kernel");

    const Matrix t_rows = templates_.transpose();
    gram_tt_ = gram_matrix(kernel_, t_rows, t_rows);
    const auto m = templates_.cols();
    ridge_ = ridge.value_or(1e-8 * gram_tt_.trace() / static_cast<double>(m));
    if (!(ridge_ >= 0.0) || !std::isfinite(ridge_))
        throw std::invalid_argument("ridge must be a finite nonnegative number");

    Matrix system = gram_tt_;
    system.diagonal().array() += ridge_;
    factor_.compute(system);
    if (factor_.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization of K(T,T) + ridge*I failed (ridge=" + format_double(ridge_) +
                             ", M=" + std::to_string(m) + ")");

    transformed_.reserve(set_->size());
    averaged_cross_ = Matrix::Zero(m, m);
    for (const Matrix& g : set_->elements()) {
        transformed_.push_back(g * templates_);
        averaged_cross_ += gram_matrix(kernel_, transformed_.back().transpose(), t_rows);
    }
    averaged_cross_ /= static_cast<double>(set_->size());
    instrumentation::count_template_transforms(static_cast<std::uint64_t>(m) * set_->size());
}

Vector TemplateBank::solve_checked(const Vector& rhs) const
{
    Matrix system = gram_tt_;
    system.diagonal().array() += ridge_;
    Vector u = factor_.solve(rhs);
    const double scale = std::max(rhs.norm(), std::numeric_limits<double>::min());
    Vector residual = rhs - system * u;
    if (residual.norm() > kProjectionResidualTolerance * scale) {
        u += factor_.solve(residual);
        residual = rhs - system * u;
        if (residual.norm() > kProjectionResidualTolerance * scale)
            throw NumericalError("template projection residual " + format_double(residual.norm() / scale) +
                                 " exceeds tolerance (ridge=" + format_double(ridge_) + ")");
    }
    return u;
}

Vector TemplateBank::project(const Vector& x) const
{
    require_dim(dim(), x.size(), "project_onto_templates");
    if (!x.allFinite())
        throw std::invalid_argument("project_onto_templates: input must be finite");
    Vector rhs(templates_.cols());
    for (Eigen::Index i = 0; i < rhs.size(); ++i)
        rhs[i] = kernel_.evaluate(templates_.col(i), x);
    instrumentation::count_kernel_evaluations(static_cast<std::uint64_t>(rhs.size()));
    return solve_checked(rhs);
}

Matrix TemplateBank::project_rows(const Matrix& X) const
{
    require_dim(dim(), X.cols(), "project_rows");
    const Matrix rhs = gram_matrix(kernel_, templates_.transpose(), X); // M x N
    Matrix system = gram_tt_;
    system.diagonal().array() += ridge_;
    Matrix u = factor_.solve(rhs);
    Matrix residual = rhs - system * u;
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        const double scale = std::max(rhs.col(j).norm(), std::numeric_limits<double>::min());
        if (residual.col(j).norm() > kProjectionResidualTolerance * scale)
            u.col(j) = solve_checked(rhs.col(j));
    }
    return u.transpose();
}

Matrix random_templates(std::size_t dim, std::size_t count, std::uint64_t seed)
{
    if (dim == 0 || count == 0)
        throw std::invalid_argument("random_templates: dimension and count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix t(dim, count);
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            t(i, j) = gauss(rng);
        t.col(j).normalize();
    }
    return t;
}

Matrix orbit_closed_templates(const Matrix& templates, const OrthogonalSet& set)
{
    require_dim(set.dim(), templates.rows(), "orbit_closed_templates");
    Matrix out(templates.rows(), templates.cols() * static_cast<Eigen::Index>(set.size()));
    for (std::size_t g = 0; g < set.size(); ++g)
        out.middleCols(static_cast<Eigen::Index>(g) * templates.cols(), templates.cols()) =
            set.element(g) * templates;
    instrumentation::count_template_transforms(static_cast<std::uint64_t>(templates.cols()) * set.size());
    return out;
}

Vector project_onto_templates(const TemplateBank& bank, const Vector& x)
{
    return bank.project(x);
}

void write_template_bank(std::ostream& out, const TemplateBank& bank)
{
    write_orthogonal_set(out, bank.set());
    out << bank.dim() << ' ' << bank.template_count() << '\n';
    write_matrix_rows(out, bank.templates());
}

TemplateBank read_template_bank(std::istream& in, const KernelSpec& kernel, std::optional<double> ridge)
{
    auto set = std::make_shared<const OrthogonalSet>(read_orthogonal_set(in));
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos && line[line.find_first_not_of(" \t\r")] != '#')
            break;
    }
    std::istringstream header(line);
    std::size_t d = 0, m = 0;
    if (!(header >> d >> m) || d == 0 || m == 0)
        throw std::invalid_argument("template block header must read 'd M'");
    if (d != set->dim())
        throw std::invalid_argument("template dimension does not match the orthogonal set");
    Matrix templates = read_matrix_rows(in, d, m);
    return TemplateBank(std::move(templates), std::move(set), kernel, ridge);
}

void save_template_bank(const std::string& path, const TemplateBank& bank)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    write_template_bank(out, bank);
}

TemplateBank load_template_bank(const std::string& path, const KernelSpec& kernel, std::optional<double> ridge)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    return read_template_bank(in, kernel, ridge);
}

std::string to_string(InvariantMode mode)
{
    switch (mode) {
    case InvariantMode::direct:
        return "direct";
    case InvariantMode::one_sided:
        return "one_sided";
    case InvariantMode::template_bank:
        return "template";
    }
    return "?";
}

InvariantMode parse_invariant_mode(std::string_view text)
{
    if (text == "direct")
        return InvariantMode::direct;
    if (text == "one_sided" || text == "one-sided")
        return InvariantMode::one_sided;
    if (text == "template")
        return InvariantMode::template_bank;
    throw std::invalid_argument("unknown invariant mode '" + std::string(text) + "'");
}

InvariantKernel::InvariantKernel(InvariantMode mode, KernelSpec base, std::shared_ptr<const OrthogonalSet> set,
                                 std::shared_ptr<const TemplateBank> bank)
    : mode_(mode), base_(std::move(base)), set_(std::move(set)), bank_(std::move(bank))
{
    if (!base_.claims_unitary())
        throw std::invalid_argument("invariant kernels require a unitary base kernel");
    if (mode_ == InvariantMode::template_bank) {
        if (!bank_ || set_)
            throw std::invalid_argument("template mode requires exactly a template bank");
        const Matrix& a = bank_->averaged_cross_gram();
        symmetric_cross_ = 0.5 * (a + a.transpose());
    } else if (!set_ || bank_) {
        throw std::invalid_argument("direct and one-sided modes require exactly an orthogonal set");
    }
}

InvariantKernel InvariantKernel::direct(KernelSpec base, std::shared_ptr<const OrthogonalSet> set)
{
    return InvariantKernel(InvariantMode::direct, std::move(base), std::move(set), nullptr);
}

InvariantKernel InvariantKernel::one_sided(KernelSpec base, std::shared_ptr<const OrthogonalSet> set)
{
    return InvariantKernel(InvariantMode::one_sided, std::move(base), std::move(set), nullptr);
}

InvariantKernel InvariantKernel::from_bank(std::shared_ptr<const TemplateBank> bank)
{
    if (!bank)
        throw std::invalid_argument("template mode requires a template bank");
    KernelSpec base = bank->kernel();
    return InvariantKernel(InvariantMode::template_bank, std::move(base), nullptr, std::move(bank));
}

std::string InvariantKernel::describe() const
{
    const OrthogonalSet& s = bank_ ? bank_->set() : *set_;
    std::string out = "invariant(" + to_string(mode_) + "," + base_.to_string() + "," + s.descriptor();
    if (bank_)
        out += ",M=" + std::to_string(bank_->template_count());
    return out + ")";
}

double InvariantKernel::operator()(const Vector& x, const Vector& y) const
{
    switch (mode_) {
    case InvariantMode::direct:
        return invariant_eval_direct(*this, x, y);
    case InvariantMode::one_sided:
        return invariant_eval_one_sided(*this, x, y);
    case InvariantMode::template_bank:
        return bank_->project(x).dot(symmetric_cross_ * bank_->project(y));
    }
    return 0.0;
}

double invariant_eval_direct(const InvariantKernel& handle, const Vector& x, const Vector& y)
{
    if (handle.mode() != InvariantMode::direct)
        throw std::invalid_argument("invariant_eval_direct called on a " + to_string(handle.mode()) + " handle");
    const OrthogonalSet& set = *handle.group_set();
    require_dim(set.dim(), x.size(), "invariant_eval_direct");
    require_dim(set.dim(), y.size(), "invariant_eval_direct");
    std::vector<Vector> gy;
    gy.reserve(set.size());
    for (const Matrix& g : set.elements())
        gy.push_back(g * y);
    double total = 0.0;
    for (const Matrix& g : set.elements()) {
        const Vector gx = g * x;
        for (const Vector& v : gy)
            total += handle.base().evaluate(gx, v);
    }
    instrumentation::count_sample_transforms(2 * set.size());
    instrumentation::count_kernel_evaluations(set.size() * set.size());
    const double n = static_cast<double>(set.size());
    return total / (n * n);
}

double invariant_eval_one_sided(const InvariantKernel& handle, const Vector& x, const Vector& y)
{
    if (handle.mode() != InvariantMode::one_sided)
        throw std::invalid_argument("invariant_eval_one_sided called on a " + to_string(handle.mode()) +
                                    " handle");
    const OrthogonalSet& set = *handle.group_set();
    if (!set.is_exact_group())
        throw NumericalError("one-sided invariant kernel is only valid for exact groups; '" + set.descriptor() +
                             "' is not closed");
    require_dim(set.dim(), x.size(), "invariant_eval_one_sided");
    require_dim(set.dim(), y.size(), "invariant_eval_one_sided");
    double total = 0.0;
    for (const Matrix& g : set.elements())
        total += handle.base().evaluate(x, g * y);
    instrumentation::count_sample_transforms(set.size());
    instrumentation::count_kernel_evaluations(set.size());
    return total / static_cast<double>(set.size());
}

double invariant_eval_template(const InvariantKernel& handle, const Vector& x, const Vector& y)
{
    if (handle.mode() != InvariantMode::template_bank)
        throw std::invalid_argument("invariant_eval_template called on a " + to_string(handle.mode()) +
                                    " handle");
    const TemplateBank& bank = *handle.bank();
    return bank.project(x).dot(bank.averaged_cross_gram() * bank.project(y));
}

Matrix invariant_gram(const InvariantKernel& handle, const Matrix& X, const Matrix& Y)
{
    const KernelSpec& base = handle.base();
    switch (handle.mode()) {
    case InvariantMode::direct: {
        const OrthogonalSet& set = *handle.group_set();
        require_dim(set.dim(), X.cols(), "invariant_gram");
        require_dim(set.dim(), Y.cols(), "invariant_gram");
        // All transformed copies of Y stacked block-wise, one Gram per g.
        const Eigen::Index m = Y.rows();
        Matrix gy(m * static_cast<Eigen::Index>(set.size()), Y.cols());
        for (std::size_t k = 0; k < set.size(); ++k)
            gy.middleRows(static_cast<Eigen::Index>(k) * m, m) = transform_rows(Y, set.element(k));
        Matrix total = Matrix::Zero(X.rows(), m);
        for (const Matrix& g : set.elements()) {
            const Matrix block = gram_matrix(base, transform_rows(X, g), gy);
            for (std::size_t k = 0; k < set.size(); ++k)
                total += block.middleCols(static_cast<Eigen::Index>(k) * m, m);
        }
        instrumentation::count_sample_transforms(static_cast<std::uint64_t>(X.rows() + Y.rows()) * set.size());
        const double n = static_cast<double>(set.size());
        return total / (n * n);
    }
    case InvariantMode::one_sided: {
        const OrthogonalSet& set = *handle.group_set();
        if (!set.is_exact_group())
            throw NumericalError("one-sided invariant kernel is only valid for exact groups; '" +
                                 set.descriptor() + "' is not closed");
        require_dim(set.dim(), X.cols(), "invariant_gram");
        require_dim(set.dim(), Y.cols(), "invariant_gram");
        Matrix total = Matrix::Zero(X.rows(), Y.rows());
        for (const Matrix& g : set.elements())
            total += gram_matrix(base, X, transform_rows(Y, g));
        instrumentation::count_sample_transforms(static_cast<std::uint64_t>(Y.rows()) * set.size());
        return total / static_cast<double>(set.size());
    }
    case InvariantMode::template_bank: {
        const TemplateBank& bank = *handle.bank();
        const Matrix ux = bank.project_rows(X);
        const Matrix uy = &X == &Y ? ux : bank.project_rows(Y);
        const Matrix& a = bank.averaged_cross_gram();
        return ux * (0.5 * (a + a.transpose())) * uy.transpose();
    }
    }
    return {};
}

} // namespace ginv
