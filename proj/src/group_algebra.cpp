#include "ginv/group_algebra.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace ginv {

namespace {

Matrix key_weights_for(std::size_t dim)
{
    std::mt19937_64 rng(0x5eedULL + dim);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    Matrix w(dim, dim);
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = unit(rng);
    return w;
}

std::string describe_mismatch(const char* what, std::size_t expected, std::size_t got)
{
    std::ostringstream os;
    os << what << ": expected " << expected << ", got " << got;
    return os.str();
}

} // namespace

OrthogonalSet::OrthogonalSet(std::vector<Matrix> elements, bool is_exact_group, std::string descriptor)
    : elements_(std::move(elements)), exact_(is_exact_group), descriptor_(std::move(descriptor))
{
    if (elements_.empty())
        throw std::invalid_argument("orthogonal set must contain at least one element");
    dim_ = static_cast<std::size_t>(elements_.front().rows());
    if (dim_ == 0)
        throw std::invalid_argument("orthogonal set dimension must be positive");
    if (elements_.size() > kMaxGroupCardinality)
        throw std::invalid_argument("set cardinality " + std::to_string(elements_.size()) +
                                    " exceeds cap " + std::to_string(kMaxGroupCardinality));
    validate();
    build_index();
    // Only neighbours in key order can lie within the distinctness tolerance.
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        const double window = kDistinctTolerance * key_weights_.sum();
        const double key = (key_weights_.array() * elements_[i].array()).sum();
        auto lo = std::lower_bound(keyed_.begin(), keyed_.end(), std::pair{key - window, std::size_t{0}});
        for (auto it = lo; it != keyed_.end() && it->first <= key + window; ++it) {
            if (it->second != i && max_abs(elements_[it->second] - elements_[i]) <= kDistinctTolerance)
                throw std::invalid_argument("elements " + std::to_string(std::min(i, it->second)) + " and " +
                                            std::to_string(std::max(i, it->second)) + " are not distinct");
        }
    }
    if (exact_)
        validate_group();
}

const Matrix& OrthogonalSet::element(std::size_t index) const
{
    if (index >= elements_.size())
        throw std::invalid_argument("group element index " + std::to_string(index) + " out of range (size " +
                                    std::to_string(elements_.size()) + ")");
    return elements_[index];
}

Vector OrthogonalSet::apply(std::size_t index, const Vector& x) const
{
    const Matrix& g = element(index);
    if (static_cast<std::size_t>(x.size()) != dim_)
        throw std::invalid_argument(describe_mismatch("vector length", dim_, x.size()));
    return g * x;
}

OrthogonalSet OrthogonalSet::embedded(std::size_t ambient_dim) const
{
    if (ambient_dim < dim_)
        throw std::invalid_argument(describe_mismatch("embedding dimension must be >= set dimension", dim_,
                                                      ambient_dim));
    std::vector<Matrix> out;
    out.reserve(elements_.size());
    for (const Matrix& g : elements_) {
        Matrix big = Matrix::Identity(ambient_dim, ambient_dim);
        big.topLeftCorner(dim_, dim_) = g;
        out.push_back(std::move(big));
    }
    return OrthogonalSet(std::move(out), exact_, "embed(" + descriptor_ + ",d=" + std::to_string(ambient_dim) + ")");
}

OrthogonalSet OrthogonalSet::subset(const std::vector<std::size_t>& indices) const
{
    std::vector<Matrix> out;
    out.reserve(indices.size());
    std::string desc = "subset(" + descriptor_ + ",[";
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.push_back(element(indices[k]));
        desc += (k ? "," : "") + std::to_string(indices[k]);
    }
    return OrthogonalSet(std::move(out), false, desc + "])");
}

std::ptrdiff_t OrthogonalSet::find(const Matrix& m, double tol) const
{
    if (static_cast<std::size_t>(m.rows()) != dim_ || static_cast<std::size_t>(m.cols()) != dim_)
        return -1;
    const double key = (key_weights_.array() * m.array()).sum();
    const double window = tol * key_weights_.sum();
    auto lo = std::lower_bound(keyed_.begin(), keyed_.end(), std::pair{key - window, std::size_t{0}});
    for (auto it = lo; it != keyed_.end() && it->first <= key + window; ++it) {
        if (max_abs(elements_[it->second] - m) <= tol)
            return static_cast<std::ptrdiff_t>(it->second);
    }
    return -1;
}

void OrthogonalSet::build_index()
{
    key_weights_ = key_weights_for(dim_);
    keyed_.clear();
    keyed_.reserve(elements_.size());
    for (std::size_t i = 0; i < elements_.size(); ++i)
        keyed_.emplace_back((key_weights_.array() * elements_[i].array()).sum(), i);
    std::sort(keyed_.begin(), keyed_.end());
}

void OrthogonalSet::validate() const
{
    const Matrix eye = Matrix::Identity(dim_, dim_);
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        const Matrix& g = elements_[i];
        if (static_cast<std::size_t>(g.rows()) != dim_ || static_cast<std::size_t>(g.cols()) != dim_)
            throw std::invalid_argument("element " + std::to_string(i) + " is not " + std::to_string(dim_) + "x" +
                                        std::to_string(dim_));
        if (!g.allFinite())
            throw std::invalid_argument("element " + std::to_string(i) + " has non-finite entries");
        const double err = max_abs(g.transpose() * g - eye);
        if (err > kOrthogonalityTolerance)
            throw NumericalError("element " + std::to_string(i) + " is not orthogonal (|g^T g - I|_max = " +
                                 format_double(err) + ")");
    }
}

void OrthogonalSet::validate_group() const
{
    if (find(Matrix::Identity(dim_, dim_)) < 0)
        throw NumericalError("set '" + descriptor_ + "' declared a group but lacks the identity");
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        if (find(elements_[i].transpose()) < 0)
            throw NumericalError("set '" + descriptor_ + "' is not closed under inverse (element " +
                                 std::to_string(i) + ")");
    }
    Matrix prod(dim_, dim_);
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        for (std::size_t j = 0; j < elements_.size(); ++j) {
            prod.noalias() = elements_[i] * elements_[j];
            if (find(prod) < 0)
                throw NumericalError("set '" + descriptor_ + "' is not closed under composition (" +
                                     std::to_string(i) + " * " + std::to_string(j) + ")");
        }
    }
}

OrthogonalSet sample_orthogonal_set(std::size_t dim, std::size_t count, std::uint64_t seed, SampleOptions options)
{
    if (dim == 0)
        throw std::invalid_argument("sample_orthogonal_set: dimension must be >= 1");
    if (count == 0)
        throw std::invalid_argument("sample_orthogonal_set: count must be >= 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Matrix> elements;
    elements.reserve(count);
    if (options.include_identity)
        elements.push_back(Matrix::Identity(dim, dim));
    while (elements.size() < count) {
        Matrix a(dim, dim);
        for (Eigen::Index i = 0; i < a.size(); ++i)
            a.data()[i] = gauss(rng);
        Eigen::HouseholderQR<Matrix> qr(a);
        Matrix q = qr.householderQ();
        const Matrix& r = qr.matrixQR();
        for (std::size_t k = 0; k < dim; ++k) {
            if (r(k, k) < 0.0)
                q.col(k) = -q.col(k);
        }
        elements.push_back(std::move(q));
    }
    std::string desc = "random(seed=" + std::to_string(seed) + ",m=" + std::to_string(count) +
                       (options.include_identity ? ",identity" : "") + ")";
    return OrthogonalSet(std::move(elements), false, std::move(desc));
}

namespace {

std::size_t checked_cardinality(double n)
{
    if (n > static_cast<double>(kMaxGroupCardinality))
        throw std::invalid_argument("group cardinality " + format_double(n) + " exceeds cap " +
                                    std::to_string(kMaxGroupCardinality));
    return static_cast<std::size_t>(n);
}

void require_dim(std::size_t dim)
{
    if (dim == 0)
        throw std::invalid_argument("group dimension must be >= 1");
}

OrthogonalSet build(const groups::CyclicRotation& k)
{
    require_dim(k.dim);
    if (k.order == 0)
        throw std::invalid_argument("cyclic rotation order must be >= 1");
    if (k.axis_a >= k.dim || k.axis_b >= k.dim || k.axis_a == k.axis_b)
        throw std::invalid_argument("cyclic rotation plane must name two distinct axes below the dimension");
    checked_cardinality(static_cast<double>(k.order));
    std::vector<Matrix> out;
    for (std::size_t p = 0; p < k.order; ++p) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(p) / static_cast<double>(k.order);
        Matrix r = Matrix::Identity(k.dim, k.dim);
        r(k.axis_a, k.axis_a) = std::cos(angle);
        r(k.axis_b, k.axis_b) = std::cos(angle);
        r(k.axis_a, k.axis_b) = -std::sin(angle);
        r(k.axis_b, k.axis_a) = std::sin(angle);
        out.push_back(std::move(r));
    }
    return OrthogonalSet(std::move(out), true,
                         "cyclic-rotation(plane=(" + std::to_string(k.axis_a) + "," + std::to_string(k.axis_b) +
                             "),order=" + std::to_string(k.order) + ")");
}

std::vector<std::vector<std::size_t>> all_permutations(std::size_t dim)
{
    double count = 1;
    for (std::size_t i = 2; i <= dim; ++i)
        count *= static_cast<double>(i);
    checked_cardinality(count);
    std::vector<std::size_t> p(dim);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<std::size_t>> perms;
    do {
        perms.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return perms;
}

Matrix permutation_matrix(const std::vector<std::size_t>& p)
{
    const auto d = static_cast<Eigen::Index>(p.size());
    Matrix m = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        m(i, static_cast<Eigen::Index>(p[i])) = 1.0;
    return m;
}

OrthogonalSet build(const groups::Permutations& k)
{
    require_dim(k.dim);
    std::vector<Matrix> out;
    for (const auto& p : all_permutations(k.dim))
        out.push_back(permutation_matrix(p));
    return OrthogonalSet(std::move(out), true, "permutations(d=" + std::to_string(k.dim) + ")");
}

OrthogonalSet build(const groups::SignedPermutations& k)
{
    require_dim(k.dim);
    double count = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(k.dim, 64)));
    for (std::size_t i = 2; i <= k.dim; ++i)
        count *= static_cast<double>(i);
    checked_cardinality(count);
    std::vector<Matrix> out;
    for (const auto& p : all_permutations(k.dim)) {
        const Matrix base = permutation_matrix(p);
        for (std::size_t mask = 0; mask < (std::size_t{1} << k.dim); ++mask) {
            Matrix m = base;
            for (std::size_t i = 0; i < k.dim; ++i) {
                if (mask & (std::size_t{1} << i))
                    m.row(static_cast<Eigen::Index>(i)) *= -1.0;
            }
            out.push_back(std::move(m));
        }
    }
    return OrthogonalSet(std::move(out), true, "signed-permutations(d=" + std::to_string(k.dim) + ")");
}

OrthogonalSet build(const groups::Reflection& k)
{
    require_dim(k.dim);
    if (k.axis >= k.dim)
        throw std::invalid_argument("reflection axis out of range");
    Matrix flip = Matrix::Identity(k.dim, k.dim);
    flip(k.axis, k.axis) = -1.0;
    std::vector<Matrix> out{Matrix::Identity(k.dim, k.dim), flip};
    return OrthogonalSet(std::move(out), true,
                         "reflection(axis=" + std::to_string(k.axis) + ",d=" + std::to_string(k.dim) + ")");
}

OrthogonalSet build(const groups::CyclicShift& k)
{
    require_dim(k.dim);
    std::vector<Matrix> out;
    for (std::size_t s = 0; s < k.dim; ++s) {
        std::vector<std::size_t> p(k.dim);
        for (std::size_t i = 0; i < k.dim; ++i)
            p[i] = (i + s) % k.dim;
        out.push_back(permutation_matrix(p));
    }
    return OrthogonalSet(std::move(out), true, "cyclic-shift(d=" + std::to_string(k.dim) + ")");
}

std::size_t parse_size(std::string_view text, std::string_view what)
{
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

} // namespace

OrthogonalSet make_exact_group(const GroupKind& kind)
{
    return std::visit([](const auto& k) { return build(k); }, kind);
}

GroupKind parse_group_kind(std::string_view text, std::size_t dim)
{
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    std::vector<std::pair<std::string_view, std::string_view>> params;
    if (colon != std::string_view::npos) {
        std::string_view rest = text.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string_view item = rest.substr(0, comma);
            const auto eq = item.find('=');
            if (eq == std::string_view::npos)
                throw std::invalid_argument("group parameter '" + std::string(item) + "' lacks '='");
            params.emplace_back(item.substr(0, eq), item.substr(eq + 1));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
    }
    auto unknown = [&](std::string_view key) {
        return std::invalid_argument("unknown parameter '" + std::string(key) + "' for group '" +
                                     std::string(name) + "'");
    };

    if (name == "cyclic") {
        groups::CyclicRotation k{dim, 0, 1, 0};
        for (auto [key, value] : params) {
            if (key == "order") {
                k.order = parse_size(value, "order");
            } else if (key == "plane") {
                const auto dash = value.find('-');
                if (dash == std::string_view::npos)
                    throw std::invalid_argument("plane must be written <a>-<b>");
                k.axis_a = parse_size(value.substr(0, dash), "plane axis");
                k.axis_b = parse_size(value.substr(dash + 1), "plane axis");
            } else {
                throw unknown(key);
            }
        }
        if (k.order == 0)
            throw std::invalid_argument("cyclic group requires order=<n> with n >= 1");
        return k;
    }
    if (name == "perm" || name == "permutations") {
        if (!params.empty())
            throw unknown(params.front().first);
        return groups::Permutations{dim};
    }
    if (name == "signed-perm" || name == "signed-permutations") {
        if (!params.empty())
            throw unknown(params.front().first);
        return groups::SignedPermutations{dim};
    }
    if (name == "reflection") {
        groups::Reflection k{dim, dim > 1 ? std::size_t{1} : std::size_t{0}};
        for (auto [key, value] : params) {
            if (key != "axis")
                throw unknown(key);
            k.axis = parse_size(value, "axis");
        }
        return k;
    }
    if (name == "shift") {
        if (!params.empty())
            throw unknown(params.front().first);
        return groups::CyclicShift{dim};
    }
    throw std::invalid_argument("unknown group kind '" + std::string(name) + "'");
}

GroupAverageOperator::GroupAverageOperator(std::shared_ptr<const OrthogonalSet> source)
    : source_(std::move(source))
{
    if (!source_)
        throw std::invalid_argument("group average requires a source set");
    matrix_ = Matrix::Zero(source_->dim(), source_->dim());
    for (const Matrix& g : source_->elements())
        matrix_ += g;
    matrix_ /= static_cast<double>(source_->size());
}

GroupAverageOperator group_average(const OrthogonalSet& set)
{
    return GroupAverageOperator(std::make_shared<const OrthogonalSet>(set));
}

Vector apply_group_element(const OrthogonalSet& set, std::size_t index, const Vector& x)
{
    Vector gx = set.apply(index, x);
    const double before = x.norm();
    if (std::abs(gx.norm() - before) > kOrthogonalityTolerance * std::max(1.0, before))
        throw NumericalError("group element " + std::to_string(index) + " did not preserve the norm");
    return gx;
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{})
        throw std::runtime_error("failed to format number");
    return std::string(buf, ptr);
}

void write_matrix_rows(std::ostream& out, const Matrix& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
}

namespace {

bool next_content_line(std::istream& in, std::string& line)
{
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        return true;
    }
    return false;
}

std::vector<double> parse_numbers(const std::string& line)
{
    std::vector<double> values;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r'))
            ++p;
        if (p == end)
            break;
        double v = 0;
        const char* start = p;
        if (*p == '+')
            ++p;
        auto [ptr, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{})
            throw std::invalid_argument("malformed number near '" + std::string(start, std::min(end, start + 16)) +
                                        "'");
        p = ptr;
        values.push_back(v);
    }
    return values;
}

} // namespace

Matrix read_matrix_rows(std::istream& in, std::size_t rows, std::size_t cols)
{
    Matrix m(rows, cols);
    std::string line;
    for (std::size_t i = 0; i < rows; ++i) {
        if (!next_content_line(in, line))
            throw std::invalid_argument("unexpected end of matrix block at row " + std::to_string(i));
        const auto values = parse_numbers(line);
        if (values.size() != cols)
            throw std::invalid_argument(describe_mismatch("matrix row width", cols, values.size()));
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[j];
    }
    return m;
}

void write_orthogonal_set(std::ostream& out, const OrthogonalSet& set)
{
    out << set.dim() << ' ' << set.size() << ' ' << (set.is_exact_group() ? 1 : 0) << '\n';
    for (const Matrix& g : set.elements())
        write_matrix_rows(out, g);
}

OrthogonalSet read_orthogonal_set(std::istream& in)
{
    std::string line;
    if (!next_content_line(in, line))
        throw std::invalid_argument("orthogonal set file is empty");
    std::istringstream header(line);
    std::size_t d = 0, m = 0;
    int exact = -1;
    if (!(header >> d >> m >> exact) || (exact != 0 && exact != 1))
        throw std::invalid_argument("orthogonal set header must read 'd m is_exact_group'");
    if (d == 0 || m == 0)
        throw std::invalid_argument("orthogonal set header declares an empty set");
    if (m > kMaxGroupCardinality)
        throw std::invalid_argument("orthogonal set cardinality exceeds cap");
    std::vector<Matrix> elements;
    elements.reserve(m);
    for (std::size_t k = 0; k < m; ++k)
        elements.push_back(read_matrix_rows(in, d, d));
    return OrthogonalSet(std::move(elements), exact == 1, "file");
}

void save_orthogonal_set(const std::string& path, const OrthogonalSet& set)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    write_orthogonal_set(out, set);
}

OrthogonalSet load_orthogonal_set(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    return read_orthogonal_set(in);
}

} // namespace ginv
