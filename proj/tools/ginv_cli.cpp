// ginv: command-line front end for the group-invariant kernel library.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical or validation
// failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "ginv/group_algebra.hpp"
#include "ginv/harness.hpp"
#include "ginv/invariant_features.hpp"
#include "ginv/invariant_kernel.hpp"
#include "ginv/kernels.hpp"
#include "ginv/svm.hpp"
#include "verify_suite.hpp"

namespace {

using namespace ginv;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

/// Failure of a check the command was asked to perform.
struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Writes to the file at `path`, or to stdout when it is empty or "-".
template <typename Fn>
void with_output(const std::string& path, Fn&& fn)
{
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    fn(out);
    if (!out)
        throw std::runtime_error("error while writing '" + path + "'");
}

LabelColumn parse_label_column(const std::string& s)
{
    if (s == "first")
        return LabelColumn::first;
    if (s == "last")
        return LabelColumn::last;
    throw std::invalid_argument("--label-column must be 'first' or 'last'");
}

char parse_delimiter(const std::string& s)
{
    if (s == "tab" || s == "\\t")
        return '\t';
    if (s.size() != 1)
        throw std::invalid_argument("--delimiter must be a single character or 'tab'");
    return s[0];
}

struct CsvFlags {
    std::string label_column = "last";
    std::string delimiter = ",";
    bool no_normalize = false;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--label-column", label_column, "Label column position (first|last)")
            ->check(CLI::IsMember({"first", "last"}));
        cmd->add_option("--delimiter", delimiter, "Field delimiter (single character or 'tab')");
        cmd->add_flag("--no-normalize", no_normalize, "Keep rows as read instead of scaling to unit norm");
    }
    CsvOptions options() const { return {parse_label_column(label_column), parse_delimiter(delimiter), !no_normalize}; }
};

KernelFunction kernel_from_reference(const KernelReference& ref)
{
    const KernelSpec spec = KernelSpec::parse(ref.kernel_spec);
    if (ref.mode == "none")
        return base_kernel_function(spec);
    if (ref.mode == "direct" || ref.mode == "one_sided") {
        if (ref.group_file.empty())
            throw std::invalid_argument("invariant mode '" + ref.mode + "' needs a group file");
        auto set = std::make_shared<const OrthogonalSet>(load_orthogonal_set(ref.group_file));
        auto handle = std::make_shared<const InvariantKernel>(
            ref.mode == "direct" ? InvariantKernel::direct(spec, set) : InvariantKernel::one_sided(spec, set));
        return invariant_kernel_function(handle);
    }
    if (ref.mode == "template") {
        if (ref.bank_file.empty())
            throw std::invalid_argument("invariant mode 'template' needs a bank file");
        auto bank = std::make_shared<const TemplateBank>(load_template_bank(ref.bank_file, spec));
        auto handle = std::make_shared<const InvariantKernel>(InvariantKernel::from_bank(bank));
        return invariant_kernel_function(handle);
    }
    throw std::invalid_argument("unknown invariant mode '" + ref.mode + "' (none|direct|one_sided|template)");
}

Vector parse_point(const std::string& text)
{
    std::vector<double> values;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() && tok.find_first_not_of(" \t", used) != std::string::npos)
            throw std::invalid_argument("--point: '" + tok + "' is not a number");
        values.push_back(v);
    }
    if (values.empty())
        throw std::invalid_argument("--point needs at least one coordinate");
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double accuracy_percent(const Eigen::VectorXi& pred, const Vector& y)
{
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        hits += (pred[i] > 0) == (y[i] > 0);
    return 100.0 * static_cast<double>(hits) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------- commands

struct GenGroupArgs {
    std::string group;
    std::size_t random_count = 0;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    bool include_identity = false;
    std::string out;
};

int cmd_gen_group(const GenGroupArgs& a)
{
    if (a.group.empty() == (a.random_count == 0))
        throw std::invalid_argument("give exactly one of --group or --random");
    const OrthogonalSet set = a.group.empty()
                                  ? sample_orthogonal_set(a.dim, a.random_count, a.seed,
                                                          SampleOptions{a.include_identity})
                                  : make_exact_group(parse_group_kind(a.group, a.dim));
    with_output(a.out, [&](std::ostream& os) { write_orthogonal_set(os, set); });
    std::cerr << set.descriptor() << ": " << set.size() << " elements, d=" << set.dim() << '\n';
    return kExitOk;
}

struct GenTemplatesArgs {
    std::string group_file;
    std::size_t count = 100;
    std::uint64_t seed = 0;
    bool orbit_closed = false;
    std::string kernel = "rbf:σ=1";
    std::string out;
};

int cmd_gen_templates(const GenTemplatesArgs& a)
{
    auto set = std::make_shared<const OrthogonalSet>(load_orthogonal_set(a.group_file));
    Matrix T = random_templates(set->dim(), a.count, a.seed);
    if (a.orbit_closed)
        T = orbit_closed_templates(T, *set);
    // Building the bank validates that K(T,T) + ridge I factorizes.
    const TemplateBank bank(std::move(T), set, KernelSpec::parse(a.kernel));
    with_output(a.out, [&](std::ostream& os) { write_template_bank(os, bank); });
    std::cerr << bank.template_count() << " templates, d=" << bank.dim() << ", |G0|=" << set->size()
              << ", ridge=" << format_double(bank.ridge()) << '\n';
    return kExitOk;
}

struct FeaturesArgs {
    std::string data;
    std::string bank_file;
    std::string kernel = "rbf:σ=1";
    std::string pooling = "max";
    std::string out;
    CsvFlags csv;
};

int cmd_features(const FeaturesArgs& a)
{
    const Dataset data = load_csv(a.data, a.csv.options());
    const TemplateBank bank = load_template_bank(a.bank_file, KernelSpec::parse(a.kernel));
    const PoolingSpec pooling = PoolingSpec::parse(a.pooling);
    const Matrix sig = kernel_signatures(data.X, bank, pooling);
    with_output(a.out, [&](std::ostream& os) { write_signature_csv(os, sig, bank.template_count(), pooling); });
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    KernelReference ref;
    double C = 1.0;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::string out;
    CsvFlags csv;
};

int cmd_train(const TrainArgs& a)
{
    const Dataset data = load_csv(a.data, a.csv.options());
    const KernelFunction kernel = kernel_from_reference(a.ref);
    SolverOptions opts;
    opts.tol = a.tol;
    opts.seed = a.seed;
    const SvmModel model = train_svm(data.X, data.y, kernel, a.C, opts);
    with_output(a.out, [&](std::ostream& os) { write_model(os, model, a.ref); });
    std::cerr << "kernel " << kernel.description << ", " << model.support_vectors().rows() << " support vectors, "
              << "kkt residual " << format_double(model.kkt_residual()) << ", training accuracy "
              << accuracy_percent(model.predict(data.X), data.y) << "%\n";
    if (!model.converged())
        throw NumericalError("solver hit the pass cap before reaching tolerance " + format_double(a.tol));
    return kExitOk;
}

struct PredictArgs {
    std::string model;
    std::string data;
    std::vector<std::string> points;
    std::string out;
    CsvFlags csv;
};

int cmd_predict(const PredictArgs& a)
{
    if (a.data.empty() == a.points.empty())
        throw std::invalid_argument("give exactly one of --data or --point");
    std::ifstream in(a.model);
    if (!in)
        throw std::runtime_error("cannot open model '" + a.model + "'");
    const ModelRecord rec = read_model(in);
    const SvmModel model = rec.bind(kernel_from_reference(rec.ref));

    if (!a.points.empty()) {
        with_output(a.out, [&](std::ostream& os) {
            for (const std::string& p : a.points) {
                Vector x = parse_point(p);
                if (!a.csv.no_normalize) {
                    if (x.norm() == 0.0)
                        throw std::invalid_argument("cannot normalize the zero point");
                    x /= x.norm();
                }
                const double f = model.decision_value(x);
                os << format_double(f) << ' ' << (f >= 0.0 ? 1 : -1) << '\n';
            }
        });
        return kExitOk;
    }
    const Dataset data = load_csv(a.data, a.csv.options());
    const Vector f = model.decision_values(data.X);
    with_output(a.out, [&](std::ostream& os) {
        os << "index,decision,prediction,label\n";
        for (Eigen::Index i = 0; i < f.size(); ++i)
            os << i << ',' << format_double(f[i]) << ',' << (f[i] >= 0.0 ? 1 : -1) << ','
               << (data.y[i] > 0 ? 1 : -1) << '\n';
    });
    std::cerr << "accuracy " << accuracy_percent(model.predict(data.X), data.y) << "%\n";
    return kExitOk;
}

struct BenchArgs {
    std::string config_file;
    std::map<std::string, std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string format = "text";
    std::string out;
};

ExperimentConfig resolve_config(const BenchArgs& a)
{
    ExperimentConfig config = a.config_file.empty() ? ExperimentConfig{} : load_config(a.config_file);
    if (a.seed) {
        config.group_seed = *a.seed;
        config.template_seed = *a.seed + 1;
        config.fold_seed = *a.seed + 2;
    }
    for (const auto& [key, value] : a.overrides)
        config.set(key, value);
    return config;
}

int cmd_bench(const BenchArgs& a, bool kernel_experiment)
{
    const ExperimentConfig config = resolve_config(a);
    const Dataset data = load_dataset(config);
    const ReportTable table =
        kernel_experiment ? run_kernel_experiment(config, data) : run_feature_experiment(config, data);
    with_output(a.out, [&](std::ostream& os) { os << (a.format == "csv" ? table.to_csv() : table.to_text()); });
    if (table.sample_transforms != 0)
        throw ValidationFailure("leakage guard: " + std::to_string(table.sample_transforms) +
                                " group applications reached labelled samples");
    return kExitOk;
}

struct VerifyArgs {
    std::string group = "cyclic:order=4";
    std::size_t dim = 2;
    cli::VerifyOptions options;
};

int cmd_verify(const VerifyArgs& a)
{
    const OrthogonalSet group = make_exact_group(parse_group_kind(a.group, a.dim));
    const auto results = cli::run_verify_suite(group, a.options);
    std::cout << group.descriptor() << ", |G|=" << group.size() << ", d=" << group.dim() << '\n'
              << cli::format_results(results);
    std::size_t failed = 0;
    for (const auto& r : results)
        failed += r.passed ? 0 : 1;
    if (failed)
        throw ValidationFailure(std::to_string(failed) + " of " + std::to_string(results.size()) + " checks failed");
    std::cout << "all " << results.size() << " checks passed\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Group-invariant kernels, pooled invariant features and SVM training"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ginv 1.0");

    GenGroupArgs gg;
    auto* gen_group = app.add_subcommand("gen-group", "Write an exact group or a random orthogonal set");
    gen_group->add_option("--group", gg.group, "Exact group: cyclic:order=<n>[,plane=a-b] | perm | signed-perm | "
                                               "reflection[:axis=i] | shift");
    gen_group->add_option("--random", gg.random_count, "Number of Haar-random orthogonal matrices");
    gen_group->add_option("--dim", gg.dim, "Dimension d")->check(CLI::PositiveNumber);
    gen_group->add_option("--seed", gg.seed, "Seed for --random");
    gen_group->add_flag("--include-identity", gg.include_identity, "Make the first random element the identity");
    gen_group->add_option("-o,--out", gg.out, "Output file (default stdout)");

    GenTemplatesArgs gt;
    auto* gen_templates = app.add_subcommand("gen-templates", "Write a template bank over a group file");
    gen_templates->add_option("--group-file", gt.group_file, "Orthogonal set file")->required();
    gen_templates->add_option("--count", gt.count, "Number of random unit templates")->check(CLI::PositiveNumber);
    gen_templates->add_option("--seed", gt.seed, "Template seed");
    gen_templates->add_flag("--orbit-closed", gt.orbit_closed, "Replace T by the union of its orbits gT");
    gen_templates->add_option("--kernel", gt.kernel, "Kernel used to validate the bank factorization");
    gen_templates->add_option("-o,--out", gt.out, "Output file (default stdout)");

    FeaturesArgs fe;
    auto* features = app.add_subcommand("features", "Extract pooled invariant signatures to CSV");
    features->add_option("--data", fe.data, "Labelled CSV input")->required();
    features->add_option("--bank", fe.bank_file, "Template bank file")->required();
    features->add_option("--kernel", fe.kernel, "linear | rbf:σ=<f> | poly:d=<n>,c=<f>");
    features->add_option("--pooling", fe.pooling, "mean | max | moment:n=<k> | cdf:bins=<B>,s=<f> [,scale=<f>]");
    features->add_option("-o,--out", fe.out, "Output CSV (default stdout)");
    fe.csv.attach(features);

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train an SVM and write a model file");
    train->add_option("--data", tr.data, "Labelled CSV input")->required();
    train->add_option("--kernel", tr.ref.kernel_spec, "linear | rbf:σ=<f> | poly:d=<n>,c=<f>");
    train->add_option("--invariant", tr.ref.mode, "none | direct | one_sided | template")
        ->check(CLI::IsMember({"none", "direct", "one_sided", "template"}));
    train->add_option("--group", tr.ref.group_file, "Group file for direct / one_sided");
    train->add_option("--bank", tr.ref.bank_file, "Template bank file for template mode");
    train->add_option("--C", tr.C, "Box constraint numerator: 0 <= alpha_i <= C/N")->check(CLI::PositiveNumber);
    train->add_option("--tol", tr.tol, "KKT tolerance")->check(CLI::PositiveNumber);
    train->add_option("--seed", tr.seed, "Working-pair tie-break seed");
    train->add_option("-o,--out", tr.out, "Model file (default stdout)");
    tr.csv.attach(train);

    PredictArgs pr;
    auto* predict = app.add_subcommand("predict", "Evaluate a model file");
    predict->add_option("--model", pr.model, "Model file from 'train'")->required();
    predict->add_option("--data", pr.data, "Labelled CSV to score");
    predict->add_option("--point", pr.points, "Comma-separated point, repeatable");
    predict->add_option("-o,--out", pr.out, "Output file (default stdout)");
    pr.csv.attach(predict);

    BenchArgs bf, bk;
    auto attach_bench = [&](CLI::App* cmd, BenchArgs& args) {
        cmd->add_option("--config", args.config_file, "key=value config file; flags override it");
        cmd->add_option("--seed", args.seed, "Sets group_seed=s, template_seed=s+1, fold_seed=s+2");
        cmd->add_option("--format", args.format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
        cmd->add_option("-o,--out", args.out, "Output file (default stdout)");
        for (const std::string& key : ExperimentConfig::keys()) {
            std::string flag = "--" + key;
            for (char& c : flag)
                if (c == '_')
                    c = '-';
            cmd->add_option_function<std::string>(
                flag, [&args, key](const std::string& v) { args.overrides[key] = v; }, "Config key '" + key + "'");
        }
    };
    auto* bench_features = app.add_subcommand("bench-features", "Invariant-feature benchmark (linear SVM)");
    attach_bench(bench_features, bf);
    auto* bench_kernel = app.add_subcommand("bench-kernel", "Standard vs invariant kernel SVM benchmark");
    attach_bench(bench_kernel, bk);

    VerifyArgs ve;
    auto* verify = app.add_subcommand("verify", "Run the invariant property suites on an exact group");
    verify->add_option("--group", ve.group, "Exact group descriptor");
    verify->add_option("--dim", ve.dim, "Dimension d")->check(CLI::PositiveNumber);
    verify->add_option("--trials", ve.options.trials, "Random trials per identity")->check(CLI::PositiveNumber);
    verify->add_option("--seed", ve.options.seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*gen_group)
            return cmd_gen_group(gg);
        if (*gen_templates)
            return cmd_gen_templates(gt);
        if (*features)
            return cmd_features(fe);
        if (*train)
            return cmd_train(tr);
        if (*predict)
            return cmd_predict(pr);
        if (*bench_features)
            return cmd_bench(bf, false);
        if (*bench_kernel)
            return cmd_bench(bk, true);
        if (*verify)
            return cmd_verify(ve);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ValidationFailure& e) {
        std::cerr << "validation failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
