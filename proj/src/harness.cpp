#include "ginv/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ginv/instrumentation.hpp"
#include "ginv/invariant_kernel.hpp"
#include "ginv/svm.hpp"

namespace ginv {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold)
{
    return splitmix64(base ^ splitmix64(fold + 1));
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& field, double& out)
{
    const std::string t = trim(field);
    if (t.empty())
        return false;
    const char* first = t.data();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
    return ec == std::errc{} && ptr == t.data() + t.size();
}

/// Splits CSV text into records of fields, honouring quotes.
std::vector<std::vector<std::string>> read_records(std::istream& in, char delimiter)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delimiter) {
            record.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            record.push_back(std::move(field));
            field.clear();
            if (!(record.size() == 1 && trim(record[0]).empty()))
                records.push_back(std::move(record));
            record.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted)
        throw std::invalid_argument("CSV input ends inside a quoted field");
    if (any) {
        record.push_back(std::move(field));
        if (!(record.size() == 1 && trim(record[0]).empty()))
            records.push_back(std::move(record));
    }
    return records;
}

std::string percent(double v)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

std::string kernel_label(const KernelSpec& k)
{
    switch (k.kind().index()) {
    case 0:
        return "linear";
    case 1:
        return "RBF";
    default:
        return "poly";
    }
}

double accuracy(const SvmModel& model, const Matrix& X, const Vector& y)
{
    const Eigen::VectorXi pred = model.predict(X);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        hits += (pred[i] > 0) == (y[i] > 0);
    return 100.0 * static_cast<double>(hits) / static_cast<double>(y.size());
}

std::uint64_t parse_u64(const std::string& value, const std::string& key)
{
    std::uint64_t v = 0;
    const std::string t = trim(value);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw std::invalid_argument("config key '" + key + "' expects a nonnegative integer, got '" + value + "'");
    return v;
}

bool parse_bool(const std::string& value, const std::string& key)
{
    const std::string t = trim(value);
    if (t == "true" || t == "1" || t == "yes")
        return true;
    if (t == "false" || t == "0" || t == "no")
        return false;
    throw std::invalid_argument("config key '" + key + "' expects true/false, got '" + value + "'");
}

struct FoldSetup {
    Dataset train;
    Dataset test;
    Dataset augmented;
    std::shared_ptr<const OrthogonalSet> set;
    Matrix templates;
};

FoldSetup prepare_fold(const ExperimentConfig& config, const Dataset& data, const FoldPlan& plan, std::size_t fold)
{
    FoldSetup s;
    s.train = data.rows(plan.train_indices(fold));
    s.test = data.rows(plan.test_folds[fold]);
    s.set = std::make_shared<const OrthogonalSet>(
        sample_orthogonal_set(data.dim(), config.group_size, fold_seed(config.group_seed, fold),
                              SampleOptions{config.include_identity}));
    s.augmented = augment_test_fold(s.test, *s.set);
    s.templates = random_templates(data.dim(), config.template_count, fold_seed(config.template_seed, fold));
    return s;
}

ReportTable finish(ReportTable table)
{
    table.mean_accuracy.assign(table.columns.size(), 0.0);
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        table.mean_accuracy[c] = table.fold_accuracy.col(static_cast<Eigen::Index>(c)).mean();
    return table;
}

} // namespace

Dataset Dataset::rows(const std::vector<std::size_t>& indices) const
{
    Dataset out;
    out.name = name;
    out.normalized = normalized;
    out.X.resize(static_cast<Eigen::Index>(indices.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= size())
            throw std::invalid_argument("row index out of range");
        out.X.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(indices[k]));
        out.y[static_cast<Eigen::Index>(k)] = y[static_cast<Eigen::Index>(indices[k])];
    }
    return out;
}

void Dataset::validate() const
{
    if (X.rows() != y.size())
        throw std::invalid_argument("dataset '" + name + "': sample and label counts differ");
    if (!X.allFinite())
        throw std::invalid_argument("dataset '" + name + "' has non-finite entries");
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] == 1.0)
            pos = true;
        else if (y[i] == -1.0)
            neg = true;
        else
            throw std::invalid_argument("dataset '" + name + "': labels must be +1/-1");
    }
    if (!pos || !neg)
        throw std::invalid_argument("dataset '" + name + "' must contain both labels");
    if (normalized) {
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            if (std::abs(X.row(i).norm() - 1.0) > 1e-10)
                throw std::invalid_argument("dataset '" + name + "': row " + std::to_string(i) +
                                            " is not unit norm");
    }
}

Dataset normalize_rows(Dataset data)
{
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
        const double n = data.X.row(i).norm();
        if (n == 0.0)
            throw std::invalid_argument("cannot normalize zero-norm sample at row " + std::to_string(i));
        data.X.row(i) /= n;
    }
    data.normalized = true;
    return data;
}

Dataset parse_csv(std::istream& in, const CsvOptions& options, std::string name)
{
    auto records = read_records(in, options.delimiter);
    if (records.empty())
        throw std::invalid_argument("CSV '" + name + "' has no rows");
    {
        double probe = 0;
        bool numeric = true;
        for (const auto& f : records.front())
            numeric = numeric && parse_number(f, probe);
        if (!numeric)
            records.erase(records.begin());
    }
    if (records.empty())
        throw std::invalid_argument("CSV '" + name + "' has a header but no data");
    const std::size_t width = records.front().size();
    if (width < 2)
        throw std::invalid_argument("CSV '" + name + "' needs a label column and at least one feature");

    Matrix X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(width - 1));
    std::vector<double> raw_labels(records.size());
    const std::size_t label_at = options.label_column == LabelColumn::first ? 0 : width - 1;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != width)
            throw std::invalid_argument("CSV '" + name + "': row " + std::to_string(r) + " has " +
                                        std::to_string(rec.size()) + " fields, expected " + std::to_string(width));
        Eigen::Index col = 0;
        for (std::size_t f = 0; f < width; ++f) {
            double v = 0;
            if (!parse_number(rec[f], v))
                throw std::invalid_argument("CSV '" + name + "': row " + std::to_string(r) + " field " +
                                            std::to_string(f) + " is not numeric ('" + rec[f] + "')");
            if (f == label_at)
                raw_labels[r] = v;
            else
                X(static_cast<Eigen::Index>(r), col++) = v;
        }
    }
    const std::set<double> distinct(raw_labels.begin(), raw_labels.end());
    if (distinct.size() != 2)
        throw std::invalid_argument("CSV '" + name + "': label column has " + std::to_string(distinct.size()) +
                                    " distinct values, expected exactly 2");
    const double low = *distinct.begin();
    Dataset data;
    data.name = std::move(name);
    data.X = std::move(X);
    data.y.resize(static_cast<Eigen::Index>(raw_labels.size()));
    for (std::size_t r = 0; r < raw_labels.size(); ++r)
        data.y[static_cast<Eigen::Index>(r)] = raw_labels[r] == low ? -1.0 : 1.0;
    if (options.normalize)
        data = normalize_rows(std::move(data));
    data.validate();
    return data;
}

Dataset load_csv(const std::string& path, const CsvOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    std::string name = path;
    if (const auto slash = name.find_last_of('/'); slash != std::string::npos)
        name = name.substr(slash + 1);
    if (const auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0)
        name = name.substr(0, dot);
    return parse_csv(in, options, std::move(name));
}

Dataset make_synthetic(const SyntheticOptions& options)
{
    if (options.dim == 0 || options.samples < 2)
        throw std::invalid_argument("synthetic dataset needs dim >= 1 and at least two samples");
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(options.dim);
    Vector direction(d);
    for (Eigen::Index i = 0; i < d; ++i)
        direction[i] = gauss(rng);
    direction.normalize();
    const Vector mean = 0.5 * options.separation * direction;

    Dataset data;
    data.name = "synthetic";
    data.X.resize(static_cast<Eigen::Index>(options.samples), d);
    data.y.resize(static_cast<Eigen::Index>(options.samples));
    for (Eigen::Index r = 0; r < data.X.rows(); ++r) {
        const double label = r % 2 == 0 ? 1.0 : -1.0;
        for (Eigen::Index i = 0; i < d; ++i)
            data.X(r, i) = label * mean[i] + gauss(rng);
        data.y[r] = label;
    }
    data = normalize_rows(std::move(data));
    data.validate();
    return data;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const
{
    std::vector<bool> held(sample_count, false);
    for (std::size_t i : test_folds.at(fold))
        held[i] = true;
    std::vector<std::size_t> out;
    out.reserve(sample_count - test_folds[fold].size());
    for (std::size_t i = 0; i < sample_count; ++i)
        if (!held[i])
            out.push_back(i);
    return out;
}

FoldPlan make_folds(std::size_t sample_count, std::size_t folds, std::uint64_t seed)
{
    if (folds == 0)
        throw std::invalid_argument("fold count must be >= 1");
    if (folds > sample_count)
        throw std::invalid_argument("fold count " + std::to_string(folds) + " exceeds sample count " +
                                    std::to_string(sample_count));
    std::vector<std::size_t> perm(sample_count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    FoldPlan plan;
    plan.sample_count = sample_count;
    plan.test_folds.resize(folds);
    const std::size_t base = sample_count / folds, extra = sample_count % folds;
    std::size_t at = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        plan.test_folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                                  perm.begin() + static_cast<std::ptrdiff_t>(at + len));
        std::sort(plan.test_folds[f].begin(), plan.test_folds[f].end());
        at += len;
    }
    return plan;
}

Dataset augment_test_fold(const Dataset& test, const OrthogonalSet& set)
{
    if (test.dim() != set.dim())
        throw std::invalid_argument("augment_test_fold: dataset dimension " + std::to_string(test.dim()) +
                                    " does not match set dimension " + std::to_string(set.dim()));
    const auto n = test.X.rows();
    Dataset out;
    out.name = test.name;
    out.normalized = test.normalized;
    out.X.resize(n * static_cast<Eigen::Index>(set.size()), test.X.cols());
    out.y.resize(out.X.rows());
    for (std::size_t g = 0; g < set.size(); ++g) {
        const auto offset = static_cast<Eigen::Index>(g) * n;
        out.X.middleRows(offset, n) = test.X * set.element(g).transpose();
        out.y.segment(offset, n) = test.y;
    }
    instrumentation::count_test_augmentations(static_cast<std::uint64_t>(n) * set.size());
    return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw)
{
    const std::string value = trim(raw);
    if (key == "dataset") {
        dataset = value;
    } else if (key == "folds") {
        folds = parse_u64(value, key);
    } else if (key == "group_size") {
        group_size = parse_u64(value, key);
    } else if (key == "template_count") {
        template_count = parse_u64(value, key);
    } else if (key == "feature_kernels") {
        std::vector<KernelSpec> parsed;
        std::string item;
        std::istringstream items(value);
        while (std::getline(items, item, ';'))
            if (!trim(item).empty())
                parsed.push_back(KernelSpec::parse(trim(item)));
        if (parsed.empty())
            throw std::invalid_argument("feature_kernels must list at least one kernel");
        feature_kernels = std::move(parsed);
    } else if (key == "svm_kernel") {
        svm_kernel = KernelSpec::parse(value);
    } else if (key == "pooling") {
        pooling = PoolingSpec::parse(value);
    } else if (key == "group_seed") {
        group_seed = parse_u64(value, key);
    } else if (key == "template_seed") {
        template_seed = parse_u64(value, key);
    } else if (key == "fold_seed") {
        fold_seed = parse_u64(value, key);
    } else if (key == "data_seed") {
        data_seed = parse_u64(value, key);
    } else if (key == "C") {
        double c = 0;
        if (!parse_number(value, c) || !(c > 0))
            throw std::invalid_argument("config key 'C' expects a positive number");
        C = c;
    } else if (key == "include_identity") {
        include_identity = parse_bool(value, key);
    } else if (key == "label_column") {
        if (value == "first")
            label_column = LabelColumn::first;
        else if (value == "last")
            label_column = LabelColumn::last;
        else
            throw std::invalid_argument("label_column must be 'first' or 'last'");
    } else if (key == "delimiter") {
        if (value == "\\t" || value == "tab")
            delimiter = '\t';
        else if (raw.size() == 1)
            delimiter = raw[0];
        else
            throw std::invalid_argument("delimiter must be a single character");
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

std::vector<std::string> ExperimentConfig::keys()
{
    return {"dataset", "folds", "group_size", "template_count", "feature_kernels", "svm_kernel",
            "pooling", "group_seed", "template_seed", "fold_seed", "data_seed", "C",
            "include_identity", "label_column", "delimiter"};
}

void ExperimentConfig::validate(std::size_t sample_count) const
{
    if (folds < 1 || group_size < 1 || template_count < 1)
        throw std::invalid_argument("folds, group_size and template_count must be >= 1");
    if (folds > sample_count)
        throw std::invalid_argument("folds (" + std::to_string(folds) + ") exceeds sample count (" +
                                    std::to_string(sample_count) + ")");
    pooling.validate();
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_key_values() const
{
    std::string kernels;
    for (std::size_t i = 0; i < feature_kernels.size(); ++i)
        kernels += (i ? ";" : "") + feature_kernels[i].to_string();
    return {{"dataset", dataset},
            {"folds", std::to_string(folds)},
            {"group_size", std::to_string(group_size)},
            {"template_count", std::to_string(template_count)},
            {"feature_kernels", kernels},
            {"svm_kernel", svm_kernel.to_string()},
            {"pooling", pooling.to_string()},
            {"group_seed", std::to_string(group_seed)},
            {"template_seed", std::to_string(template_seed)},
            {"fold_seed", std::to_string(fold_seed)},
            {"data_seed", std::to_string(data_seed)},
            {"C", format_double(C)},
            {"include_identity", include_identity ? "true" : "false"},
            {"label_column", label_column == LabelColumn::first ? "first" : "last"},
            {"delimiter", delimiter == '\t' ? "tab" : std::string(1, delimiter)}};
}

ExperimentConfig parse_config(std::istream& in)
{
    ExperimentConfig config;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(number) + " lacks '='");
        // Values may contain '=' (kernel specs), so split on the first one only.
        const std::string key = trim(t.substr(0, eq));
        const std::string value = t.substr(eq + 1);
        config.set(key, key == "delimiter" ? value : trim(value));
    }
    return config;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config '" + path + "'");
    return parse_config(in);
}

Dataset load_dataset(const ExperimentConfig& config)
{
    if (config.dataset == "synthetic")
        return make_synthetic(SyntheticOptions{20, 400, SyntheticOptions{}.separation, config.data_seed});
    return load_csv(config.dataset, CsvOptions{config.label_column, config.delimiter, true});
}

std::string ReportTable::to_text() const
{
    std::vector<std::string> header{"Dataset"};
    header.insert(header.end(), columns.begin(), columns.end());
    std::vector<std::string> row{dataset};
    for (double v : mean_accuracy)
        row.push_back(percent(v));
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c)
        width[c] = std::max(header[c].size(), row[c].size());

    std::ostringstream os;
    os << title << '\n';
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            os << (c ? " | " : "") << std::setw(static_cast<int>(width[c])) << (c ? std::right : std::left)
               << cells[c];
        }
        os << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (std::size_t w : width)
        total += w;
    os << std::string(total + 3 * (width.size() - 1), '-') << '\n';
    line(row);
    return os.str();
}

std::string ReportTable::to_csv() const
{
    std::ostringstream os;
    os << "Dataset";
    for (const auto& c : columns)
        os << ',' << c;
    os << '\n' << dataset;
    for (double v : mean_accuracy)
        os << ',' << percent(v);
    os << '\n';
    return os.str();
}

ReportTable run_feature_experiment(const ExperimentConfig& config, const Dataset& data)
{
    data.validate();
    config.validate(data.size());
    if (!data.normalized)
        throw std::invalid_argument("feature experiment requires a normalized dataset");

    ReportTable table;
    table.title = "Mean " + std::to_string(config.folds) +
                  "-fold accuracy (%) of a linear SVM trained on X_Tr features, tested on X_G0Te features";
    table.dataset = data.name;
    table.columns = {"Raw X_Te", "Raw X_G0Te", "mu X_G0Te"};
    for (const auto& k : config.feature_kernels)
        table.columns.push_back("Ups_" + kernel_label(k) + " X_G0Te");
    table.fold_accuracy.resize(static_cast<Eigen::Index>(config.folds),
                               static_cast<Eigen::Index>(table.columns.size()));

    const FoldPlan plan = make_folds(data.size(), config.folds, config.fold_seed);
    const KernelFunction linear = base_kernel_function(KernelSpec::linear());
    std::uint64_t sample_transforms = 0, augmentations = 0;

    for (std::size_t fold = 0; fold < config.folds; ++fold) {
        const auto before_aug = instrumentation::snapshot();
        const FoldSetup s = prepare_fold(config, data, plan, fold);
        augmentations += instrumentation::snapshot().test_augmentations - before_aug.test_augmentations;
        const auto before = instrumentation::snapshot();
        const auto row = static_cast<Eigen::Index>(fold);
        Eigen::Index col = 0;

        const SvmModel raw = train_svm(s.train.X, s.train.y, linear, config.C);
        table.fold_accuracy(row, col++) = accuracy(raw, s.test.X, s.test.y);
        table.fold_accuracy(row, col++) = accuracy(raw, s.augmented.X, s.augmented.y);

        {
            const Matrix train_f = linear_signatures(s.train.X, *s.set, s.templates, config.pooling);
            const Matrix test_f = linear_signatures(s.augmented.X, *s.set, s.templates, config.pooling);
            const SvmModel m = train_svm(train_f, s.train.y, linear, config.C);
            table.fold_accuracy(row, col++) = accuracy(m, test_f, s.augmented.y);
        }
        for (const KernelSpec& k : config.feature_kernels) {
            const TemplateBank bank(s.templates, s.set, k);
            const Matrix train_f = kernel_signatures(s.train.X, bank, config.pooling);
            const Matrix test_f = kernel_signatures(s.augmented.X, bank, config.pooling);
            const SvmModel m = train_svm(train_f, s.train.y, linear, config.C);
            table.fold_accuracy(row, col++) = accuracy(m, test_f, s.augmented.y);
        }
        sample_transforms += instrumentation::snapshot().sample_transforms - before.sample_transforms;
    }
    table.sample_transforms = sample_transforms;
    table.test_augmentations = augmentations;
    return finish(std::move(table));
}

ReportTable run_kernel_experiment(const ExperimentConfig& config, const Dataset& data)
{
    data.validate();
    config.validate(data.size());

    ReportTable table;
    table.title = "Mean " + std::to_string(config.folds) +
                  "-fold accuracy (%): standard kernel (S.K) vs invariant kernel (I.K), trained on X_Tr";
    table.dataset = data.name;
    table.columns = {"X_Te", "S.K X_G0Te", "I.K X_G0Te"};
    table.fold_accuracy.resize(static_cast<Eigen::Index>(config.folds), 3);

    const FoldPlan plan = make_folds(data.size(), config.folds, config.fold_seed);
    const KernelFunction standard = base_kernel_function(config.svm_kernel);
    std::uint64_t sample_transforms = 0, augmentations = 0;

    for (std::size_t fold = 0; fold < config.folds; ++fold) {
        const auto before_aug = instrumentation::snapshot();
        const FoldSetup s = prepare_fold(config, data, plan, fold);
        augmentations += instrumentation::snapshot().test_augmentations - before_aug.test_augmentations;
        const auto before = instrumentation::snapshot();
        const auto row = static_cast<Eigen::Index>(fold);

        const SvmModel sk = train_svm(s.train.X, s.train.y, standard, config.C);
        table.fold_accuracy(row, 0) = accuracy(sk, s.test.X, s.test.y);
        table.fold_accuracy(row, 1) = accuracy(sk, s.augmented.X, s.augmented.y);

        auto bank = std::make_shared<const TemplateBank>(s.templates, s.set, config.svm_kernel);
        auto handle = std::make_shared<const InvariantKernel>(InvariantKernel::from_bank(bank));
        const SvmModel ik = train_svm(s.train.X, s.train.y, invariant_kernel_function(handle), config.C);
        table.fold_accuracy(row, 2) = accuracy(ik, s.augmented.X, s.augmented.y);
        sample_transforms += instrumentation::snapshot().sample_transforms - before.sample_transforms;
    }
    table.sample_transforms = sample_transforms;
    table.test_augmentations = augmentations;
    return finish(std::move(table));
}

} // namespace ginv
