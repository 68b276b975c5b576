#include "ginv/kernels.hpp"

#include <charconv>
#include <random>
#include <sstream>

#include "ginv/instrumentation.hpp"

namespace ginv {

namespace {

double parse_real(std::string_view text, std::string_view what)
{
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
        throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

int parse_int(std::string_view text, std::string_view what)
{
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

void require_same_length(Eigen::Index a, Eigen::Index b)
{
    if (a != b)
        throw std::invalid_argument("kernel arguments differ in dimension (" + std::to_string(a) + " vs " +
                                    std::to_string(b) + ")");
}

} // namespace

KernelSpec::KernelSpec(Kind kind) : kind_(kind)
{
    if (const auto* r = std::get_if<kernel::Rbf>(&kind_)) {
        if (!(r->sigma > 0.0) || !std::isfinite(r->sigma))
            throw std::invalid_argument("rbf sigma must be positive and finite");
        rbf_scale_ = 1.0 / (2.0 * r->sigma * r->sigma);
    } else if (const auto* p = std::get_if<kernel::Polynomial>(&kind_)) {
        if (p->degree < 1)
            throw std::invalid_argument("polynomial degree must be >= 1");
        if (!std::isfinite(p->offset))
            throw std::invalid_argument("polynomial offset must be finite");
    }
}

KernelSpec KernelSpec::linear() { return KernelSpec(kernel::Linear{}); }
KernelSpec KernelSpec::rbf(double sigma) { return KernelSpec(kernel::Rbf{sigma}); }
KernelSpec KernelSpec::polynomial(int degree, double offset) { return KernelSpec(kernel::Polynomial{degree, offset}); }

KernelSpec KernelSpec::parse(std::string_view text)
{
    if (text == "linear")
        return linear();
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);

    auto for_each_param = [&](auto&& fn) {
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string_view item = rest.substr(0, comma);
            const auto eq = item.find('=');
            if (eq == std::string_view::npos)
                throw std::invalid_argument("kernel parameter '" + std::string(item) + "' lacks '='");
            fn(item.substr(0, eq), item.substr(eq + 1));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
    };

    if (name == "rbf") {
        double sigma = 1.0;
        for_each_param([&](std::string_view key, std::string_view value) {
            if (key == "σ" || key == "sigma")
                sigma = parse_real(value, "sigma");
            else
                throw std::invalid_argument("unknown rbf parameter '" + std::string(key) + "'");
        });
        return rbf(sigma);
    }
    if (name == "poly") {
        int degree = 2;
        double offset = 1.0;
        for_each_param([&](std::string_view key, std::string_view value) {
            if (key == "d")
                degree = parse_int(value, "degree");
            else if (key == "c")
                offset = parse_real(value, "offset");
            else
                throw std::invalid_argument("unknown poly parameter '" + std::string(key) + "'");
        });
        return polynomial(degree, offset);
    }
    throw std::invalid_argument("unknown kernel '" + std::string(text) + "' (expected linear, rbf:σ=<s>, poly:d=<n>,c=<c>)");
}

std::string KernelSpec::to_string() const
{
    if (std::holds_alternative<kernel::Linear>(kind_))
        return "linear";
    if (const auto* r = std::get_if<kernel::Rbf>(&kind_))
        return "rbf:σ=" + format_double(r->sigma);
    const auto& p = std::get<kernel::Polynomial>(kind_);
    return "poly:d=" + std::to_string(p.degree) + ",c=" + format_double(p.offset);
}

double KernelSpec::integer_power(double base, int exponent)
{
    double result = 1.0;
    for (int i = 0; i < exponent; ++i)
        result *= base;
    return result;
}

double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& y)
{
    require_same_length(x.size(), y.size());
    if (!x.allFinite() || !y.allFinite())
        throw std::invalid_argument("kernel arguments must be finite");
    instrumentation::count_kernel_evaluations();
    return spec.evaluate(x, y);
}

Matrix gram_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Y)
{
    require_same_length(X.cols(), Y.cols());
    if (!X.allFinite() || !Y.allFinite())
        throw std::invalid_argument("gram_matrix inputs must be finite");
    Matrix K(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            K(i, j) = spec.evaluate(X.row(i), Y.row(j));
    instrumentation::count_kernel_evaluations(static_cast<std::uint64_t>(K.size()));
    return K;
}

double verify_unitarity(const KernelSpec& spec, const OrthogonalSet& set, std::size_t trials, std::uint64_t seed)
{
    if (trials == 0)
        throw std::invalid_argument("verify_unitarity needs at least one trial");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(set.dim())));
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    Vector x(set.dim()), y(set.dim());
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = gauss(rng);
        for (Eigen::Index i = 0; i < y.size(); ++i)
            y[i] = gauss(rng);
        const Matrix& g = set.element(pick(rng));
        const double moved = spec.evaluate(g * x, g * y);
        worst = std::max(worst, std::abs(moved - spec.evaluate(x, y)));
    }
    return worst;
}

double min_eigenvalue(const Matrix& m)
{
    if (m.rows() != m.cols())
        throw std::invalid_argument("min_eigenvalue requires a square matrix");
    if (m.size() == 0)
        return 0.0;
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

} // namespace ginv
