#include "ginv/invariant_features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "ginv/instrumentation.hpp"

namespace ginv {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

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

double threshold(int j, int bins)
{
    return -1.0 + (2.0 * j + 1.0) / static_cast<double>(bins);
}

void require_unit(const auto& v, const std::string& what)
{
    const double n = v.norm();
    if (std::abs(n - 1.0) > kUnitNormTolerance)
        throw std::invalid_argument(what + " must have unit norm (got " + format_double(n) + ")");
}

/// Pools a (samples x |G| K) projection block laid out g-major into
/// flattened signatures.
Matrix pool_projections(const Matrix& projections, std::size_t set_size, std::size_t template_count,
                        const PoolingSpec& pooling)
{
    const std::size_t outputs = pooling.outputs();
    Matrix out(projections.rows(), static_cast<Eigen::Index>(template_count * outputs));
    std::vector<double> buffer(set_size);
    std::vector<double> pooled(outputs);
    for (Eigen::Index i = 0; i < projections.rows(); ++i) {
        for (std::size_t k = 0; k < template_count; ++k) {
            for (std::size_t g = 0; g < set_size; ++g)
                buffer[g] = projections(i, static_cast<Eigen::Index>(g * template_count + k));
            pooling.pool(buffer, pooled);
            for (std::size_t n = 0; n < outputs; ++n)
                out(i, static_cast<Eigen::Index>(k * outputs + n)) = pooled[n];
        }
    }
    return out;
}

/// Transformed templates as rows, g-major: row g*K + k = (g t^k)^T.
Matrix transformed_template_rows(const TemplateBank& bank)
{
    const auto m = static_cast<Eigen::Index>(bank.template_count());
    Matrix rows(m * static_cast<Eigen::Index>(bank.set().size()), static_cast<Eigen::Index>(bank.dim()));
    for (std::size_t g = 0; g < bank.set().size(); ++g)
        rows.middleRows(static_cast<Eigen::Index>(g) * m, m) = bank.transformed(g).transpose();
    return rows;
}

PooledSignature unflatten(const Vector& flat, std::size_t template_count, const PoolingSpec& pooling,
                          bool normalized)
{
    PooledSignature sig;
    sig.config = pooling;
    sig.template_count = template_count;
    sig.normalized = normalized;
    const auto outputs = static_cast<Eigen::Index>(pooling.outputs());
    sig.values.resize(static_cast<Eigen::Index>(template_count), outputs);
    for (Eigen::Index k = 0; k < sig.values.rows(); ++k)
        for (Eigen::Index n = 0; n < outputs; ++n)
            sig.values(k, n) = flat[k * outputs + n];
    return sig;
}

} // namespace

PoolingSpec PoolingSpec::mean(double scale)
{
    PoolingSpec p{Mode::mean, 1, 1, 1.0, scale};
    p.validate();
    return p;
}

PoolingSpec PoolingSpec::max(double scale)
{
    PoolingSpec p{Mode::max, 1, 1, 1.0, scale};
    p.validate();
    return p;
}

PoolingSpec PoolingSpec::moment(int order, double scale)
{
    PoolingSpec p{Mode::moment, order, 1, 1.0, scale};
    p.validate();
    return p;
}

PoolingSpec PoolingSpec::cdf(int bins, double smoothing, double scale)
{
    PoolingSpec p{Mode::cdf, 1, bins, smoothing, scale};
    p.validate();
    return p;
}

PoolingSpec PoolingSpec::parse(std::string_view text)
{
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    PoolingSpec p;
    if (name == "mean")
        p.mode = Mode::mean;
    else if (name == "max")
        p.mode = Mode::max;
    else if (name == "moment")
        p.mode = Mode::moment;
    else if (name == "cdf")
        p.mode = Mode::cdf;
    else
        throw std::invalid_argument("unknown pooling '" + std::string(name) + "'");

    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = rest.substr(0, comma);
        const auto eq = item.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument("pooling parameter '" + std::string(item) + "' lacks '='");
        const std::string_view key = item.substr(0, eq);
        const std::string_view value = item.substr(eq + 1);
        if (key == "scale")
            p.scale = parse_real(value, "scale");
        else if (key == "n" && p.mode == Mode::moment)
            p.order = parse_int(value, "moment order");
        else if (key == "bins" && p.mode == Mode::cdf)
            p.bins = parse_int(value, "bin count");
        else if (key == "s" && p.mode == Mode::cdf)
            p.smoothing = parse_real(value, "smoothing");
        else
            throw std::invalid_argument("unknown pooling parameter '" + std::string(key) + "' for " +
                                        std::string(name));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    p.validate();
    return p;
}

void PoolingSpec::validate() const
{
    if (order < 1)
        throw std::invalid_argument("moment order must be >= 1");
    if (bins < 1)
        throw std::invalid_argument("cdf bins must be >= 1");
    if (!(smoothing > 0.0) || !std::isfinite(smoothing))
        throw std::invalid_argument("cdf smoothing must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw std::invalid_argument("pooling scale must be positive");
}

std::size_t PoolingSpec::outputs() const
{
    switch (mode) {
    case Mode::moment:
        return static_cast<std::size_t>(order);
    case Mode::cdf:
        return static_cast<std::size_t>(bins);
    default:
        return 1;
    }
}

double PoolingSpec::lipschitz() const
{
    switch (mode) {
    case Mode::moment:
        return scale * static_cast<double>(order);
    case Mode::cdf:
        return scale / (4.0 * smoothing);
    default:
        return scale;
    }
}

bool PoolingSpec::stability_compliant() const
{
    return static_cast<double>(outputs()) * lipschitz() <= kInvSqrt2 * (1.0 + 1e-12);
}

double PoolingSpec::required_lipschitz() const
{
    return kInvSqrt2 / static_cast<double>(outputs());
}

std::string PoolingSpec::to_string() const
{
    std::string out;
    switch (mode) {
    case Mode::mean:
        out = "mean";
        break;
    case Mode::max:
        out = "max";
        break;
    case Mode::moment:
        out = "moment:n=" + std::to_string(order);
        break;
    case Mode::cdf:
        out = "cdf:bins=" + std::to_string(bins) + ",s=" + format_double(smoothing);
        break;
    }
    if (scale != 1.0)
        out += std::string(out.find(':') == std::string::npos ? ":" : ",") + "scale=" + format_double(scale);
    return out;
}

void PoolingSpec::pool(std::span<const double> projections, std::span<double> out) const
{
    if (projections.empty())
        throw std::invalid_argument("pooling needs at least one projection");
    if (out.size() != outputs())
        throw std::invalid_argument("pooling output span has the wrong length");
    const double n = static_cast<double>(projections.size());
    switch (mode) {
    case Mode::mean: {
        double s = 0.0;
        for (double a : projections)
            s += a;
        out[0] = scale * s / n;
        break;
    }
    case Mode::max:
        out[0] = scale * *std::max_element(projections.begin(), projections.end());
        break;
    case Mode::moment: {
        std::fill(out.begin(), out.end(), 0.0);
        for (double a : projections) {
            double power = 1.0;
            for (int j = 0; j < order; ++j) {
                power *= a;
                out[static_cast<std::size_t>(j)] += power;
            }
        }
        for (double& v : out)
            v = scale * v / n;
        break;
    }
    case Mode::cdf:
        for (int j = 0; j < bins; ++j) {
            const double b = threshold(j, bins);
            double s = 0.0;
            for (double a : projections)
                s += 1.0 / (1.0 + std::exp(-(a - b) / smoothing));
            out[static_cast<std::size_t>(j)] = scale * s / n;
        }
        break;
    }
}

Vector PooledSignature::flatten() const
{
    Vector flat(values.size());
    for (Eigen::Index k = 0; k < values.rows(); ++k)
        for (Eigen::Index n = 0; n < values.cols(); ++n)
            flat[k * values.cols() + n] = values(k, n);
    return flat;
}

Matrix linear_signatures(const Matrix& X, const OrthogonalSet& set, const Matrix& templates,
                         const PoolingSpec& pooling)
{
    pooling.validate();
    if (static_cast<std::size_t>(X.cols()) != set.dim() || static_cast<std::size_t>(templates.rows()) != set.dim())
        throw std::invalid_argument("linear_signature: sample, template and set dimensions must agree");
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        require_unit(X.row(i), "sample " + std::to_string(i));
    for (Eigen::Index k = 0; k < templates.cols(); ++k)
        require_unit(templates.col(k), "template " + std::to_string(k));

    const auto m = templates.cols();
    Matrix rows(m * static_cast<Eigen::Index>(set.size()), templates.rows());
    for (std::size_t g = 0; g < set.size(); ++g)
        rows.middleRows(static_cast<Eigen::Index>(g) * m, m) = (set.element(g) * templates).transpose();
    instrumentation::count_template_transforms(static_cast<std::uint64_t>(m) * set.size());
    return pool_projections(X * rows.transpose(), set.size(), static_cast<std::size_t>(m), pooling);
}

PooledSignature linear_signature(const Vector& x, const OrthogonalSet& set, const Matrix& templates,
                                 const PoolingSpec& pooling)
{
    const Matrix row = x.transpose();
    return unflatten(linear_signatures(row, set, templates, pooling).row(0).transpose(),
                     static_cast<std::size_t>(templates.cols()), pooling, true);
}

Matrix kernel_signatures(const Matrix& X, const TemplateBank& bank, const PoolingSpec& pooling)
{
    pooling.validate();
    if (static_cast<std::size_t>(X.cols()) != bank.dim())
        throw std::invalid_argument("kernel_signature: sample dimension " + std::to_string(X.cols()) +
                                    " does not match bank dimension " + std::to_string(bank.dim()));
    if (!X.allFinite())
        throw std::invalid_argument("kernel_signature: samples must be finite");
    const KernelSpec& k = bank.kernel();
    const Matrix t_rows = transformed_template_rows(bank);
    Matrix projections = gram_matrix(k, X, t_rows);
    if (!k.is_normalized()) {
        Vector self_x(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            self_x[i] = k.evaluate(X.row(i), X.row(i));
            if (!(self_x[i] > 0.0))
                throw std::invalid_argument("kernel_signature: sample " + std::to_string(i) +
                                            " has k(x,x) <= 0 and cannot be normalized");
        }
        Vector self_t(t_rows.rows());
        for (Eigen::Index j = 0; j < t_rows.rows(); ++j) {
            self_t[j] = k.evaluate(t_rows.row(j), t_rows.row(j));
            if (!(self_t[j] > 0.0))
                throw std::invalid_argument("kernel_signature: a transformed template has k(t,t) <= 0");
        }
        projections.array().colwise() /= self_x.array().sqrt();
        projections.array().rowwise() /= self_t.array().sqrt().transpose();
    }
    return pool_projections(projections, bank.set().size(), bank.template_count(), pooling);
}

PooledSignature kernel_signature(const Vector& x, const TemplateBank& bank, const PoolingSpec& pooling)
{
    const Matrix row = x.transpose();
    return unflatten(kernel_signatures(row, bank, pooling).row(0).transpose(), bank.template_count(), pooling,
                     true);
}

PooledSignature partial_signature(const Vector& x, const TemplateBank& bank, const PoolingSpec& pooling)
{
    return kernel_signature(x, bank, pooling);
}

std::vector<std::string> signature_column_names(std::size_t template_count, const PoolingSpec& pooling)
{
    std::vector<std::string> names;
    names.reserve(template_count * pooling.outputs());
    for (std::size_t k = 1; k <= template_count; ++k)
        for (std::size_t n = 1; n <= pooling.outputs(); ++n)
            names.push_back("t" + std::to_string(k) + "_eta" + std::to_string(n));
    return names;
}

void write_signature_csv(std::ostream& out, const Matrix& signatures, std::size_t template_count,
                         const PoolingSpec& pooling)
{
    const auto names = signature_column_names(template_count, pooling);
    if (static_cast<std::size_t>(signatures.cols()) != names.size())
        throw std::invalid_argument("signature matrix width does not match K * outputs");
    for (std::size_t j = 0; j < names.size(); ++j)
        out << (j ? "," : "") << names[j];
    out << '\n';
    for (Eigen::Index i = 0; i < signatures.rows(); ++i) {
        for (Eigen::Index j = 0; j < signatures.cols(); ++j)
            out << (j ? "," : "") << format_double(signatures(i, j));
        out << '\n';
    }
}

StabilityTerms stability_terms(const TemplateBank& bank, const PoolingSpec& pooling, const Vector& x,
                               const Vector& x_prime)
{
    Matrix pair(2, static_cast<Eigen::Index>(bank.dim()));
    pair.row(0) = x.transpose();
    pair.row(1) = x_prime.transpose();
    const Matrix sig = kernel_signatures(pair, bank, pooling);

    StabilityTerms terms;
    terms.distance_sq = (sig.row(0) - sig.row(1)).squaredNorm() / static_cast<double>(bank.template_count());
    const KernelSpec& k = bank.kernel();
    terms.kernel_value = k.evaluate(x, x_prime);
    double best = -std::numeric_limits<double>::infinity();
    const OrthogonalSet& set = bank.set();
    std::vector<Vector> moved;
    moved.reserve(set.size());
    for (const Matrix& g : set.elements())
        moved.push_back(g * x_prime);
    for (const Matrix& g : set.elements()) {
        const Vector gx = g * x;
        for (const Vector& v : moved)
            best = std::max(best, k.evaluate(gx, v));
    }
    terms.hausdorff = best;
    return terms;
}

StabilityReport check_stability(const TemplateBank& bank, const PoolingSpec& pooling, std::size_t pair_count,
                                std::uint64_t seed)
{
    StabilityReport report;
    report.required_lipschitz = pooling.required_lipschitz();
    if (pooling.mode == PoolingSpec::Mode::max) {
        report.reason = "max pooling is non-smooth and not certified";
        return report;
    }
    if (!pooling.stability_compliant()) {
        report.reason = "pooling " + pooling.to_string() + " has outputs*L = " +
                        format_double(static_cast<double>(pooling.outputs()) * pooling.lipschitz()) +
                        " > 1/sqrt(2); need L <= " + format_double(report.required_lipschitz);
        return report;
    }
    if (!bank.kernel().is_normalized()) {
        report.reason = "kernel " + bank.kernel().to_string() + " does not satisfy k(x,x) = 1";
        return report;
    }
    report.certified = true;

    const bool single = bank.set().size() == 1;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector x(bank.dim()), xp(bank.dim());
    for (std::size_t p = 0; p < pair_count; ++p) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = gauss(rng);
        for (Eigen::Index i = 0; i < xp.size(); ++i)
            xp[i] = gauss(rng);
        x.normalize();
        xp.normalize();
        const StabilityTerms t = stability_terms(bank, pooling, x, xp);
        const double governing = single ? t.bound_plain() : t.bound_hausdorff();
        ++report.pairs;
        if (t.distance_sq > governing + kStabilitySlack)
            ++report.violations;
        if (t.distance_sq > t.bound_plain() + kStabilitySlack)
            ++report.plain_violations;
        report.max_slack = std::max(report.max_slack, t.distance_sq - governing);
    }
    return report;
}

} // namespace ginv
