#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ginv/group_algebra.hpp"

namespace ginv::cli {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string note;
};

struct VerifyOptions {
    std::size_t trials = 1000;
    std::uint64_t seed = 1;
};

/// Psi identities, unitarity, invariant-kernel exactness, feature
/// invariance, stability and SVM KKT checks against one exact group.
std::vector<CheckResult> run_verify_suite(const OrthogonalSet& group, const VerifyOptions& options);

std::string format_results(const std::vector<CheckResult>& results);

} // namespace ginv::cli
