#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ginv/common.hpp"
#include "ginv/group_algebra.hpp"
#include "ginv/invariant_features.hpp"
#include "ginv/kernels.hpp"

namespace ginv {

/// Labelled samples, one per row, labels in {+1, -1}.
struct Dataset {
    Matrix X;
    Vector y;
    std::string name;
    bool normalized = false;

    std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
    Dataset rows(const std::vector<std::size_t>& indices) const;
    /// Finite entries, matching sizes, labels in {+1,-1} with both present,
    /// unit rows when `normalized`.
    void validate() const;
};

/// Scales every row to unit l2 norm; a zero row is an error naming the row.
Dataset normalize_rows(Dataset data);

enum class LabelColumn { first, last };

struct CsvOptions {
    LabelColumn label_column = LabelColumn::last;
    char delimiter = ',';
    bool normalize = true;
};

/// RFC-4180 style parsing (quoted fields, doubled quotes). A first row that
/// does not parse as numbers is treated as a header. The two distinct raw
/// labels are mapped in sorted order to -1 and +1.
Dataset parse_csv(std::istream& in, const CsvOptions& options, std::string name);
Dataset load_csv(const std::string& path, const CsvOptions& options);

/// Two Gaussian classes in `dim` dimensions with means at +/- separation / 2
/// along a seeded random unit direction and isotropic unit noise, rows
/// normalized to unit length. Labels alternate by row.
struct SyntheticOptions {
    std::size_t dim = 20;
    std::size_t samples = 400;
    double separation = 8.0;
    std::uint64_t seed = 2016;
};
Dataset make_synthetic(const SyntheticOptions& options = {});

struct FoldPlan {
    std::size_t sample_count = 0;
    std::vector<std::vector<std::size_t>> test_folds;

    std::size_t fold_count() const { return test_folds.size(); }
    std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Seeded permutation cut into near-equal test folds.
FoldPlan make_folds(std::size_t sample_count, std::size_t folds, std::uint64_t seed);

/// Row (g, i) at position g * N + i holds g x_i with label y_i.
Dataset augment_test_fold(const Dataset& test, const OrthogonalSet& set);

/**
 * Benchmark configuration. Mirrors a flat key=value file; the same keys are
 * exposed as CLI flags.
 *
 *   dataset           synthetic | path to a CSV file
 *   folds             10        group_size      10      template_count 100
 *   feature_kernels   rbf:σ=1;poly:d=2,c=1   (';'-separated)
 *   svm_kernel        rbf:σ=1
 *   pooling           max
 *   group_seed, template_seed, fold_seed, data_seed
 *   C                 1         include_identity  false
 *   label_column      last      delimiter ,
 */
struct ExperimentConfig {
    std::string dataset = "synthetic";
    std::size_t folds = 10;
    std::size_t group_size = 10;
    std::size_t template_count = 100;
    std::vector<KernelSpec> feature_kernels{KernelSpec::rbf(1.0), KernelSpec::polynomial(2, 1.0)};
    KernelSpec svm_kernel = KernelSpec::rbf(1.0);
    PoolingSpec pooling = PoolingSpec::max();
    std::uint64_t group_seed = 1;
    std::uint64_t template_seed = 2;
    std::uint64_t fold_seed = 3;
    std::uint64_t data_seed = 2016;
    double C = 1.0;
    bool include_identity = false;
    LabelColumn label_column = LabelColumn::last;
    char delimiter = ',';

    /// Sets one key; throws std::invalid_argument on unknown keys or values.
    void set(const std::string& key, const std::string& value);
    void validate(std::size_t sample_count) const;
    std::vector<std::pair<std::string, std::string>> to_key_values() const;
    static std::vector<std::string> keys();
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Resolves config.dataset: the built-in synthetic set or a CSV file.
Dataset load_dataset(const ExperimentConfig& config);

struct ReportTable {
    std::string title;
    std::vector<std::string> columns;  ///< accuracy columns, without "Dataset"
    std::string dataset;
    std::vector<double> mean_accuracy; ///< percent, one per column
    Matrix fold_accuracy;              ///< folds x columns, percent
    /// Group applications to training or query samples inside the feature and
    /// kernel code during the run. Zero when the protocol is respected.
    std::uint64_t sample_transforms = 0;
    std::uint64_t test_augmentations = 0;

    std::string to_text() const;
    std::string to_csv() const;
};

/// Linear SVMs on Raw, mu, Upsilon_RBF and Upsilon_poly features; trained on
/// raw training folds and tested on the augmented test folds.
ReportTable run_feature_experiment(const ExperimentConfig& config, const Dataset& data);

/// Standard-kernel SVM vs template-mode invariant-kernel SVM, both trained on
/// raw training folds and tested on the augmented test folds.
ReportTable run_kernel_experiment(const ExperimentConfig& config, const Dataset& data);

} // namespace ginv
