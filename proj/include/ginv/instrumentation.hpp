#pragma once

#include <cstdint>

namespace ginv::instrumentation {

// Process-wide counters used to audit which vectors pass through group
// elements. Samples are the vectors whose kernel values or signatures are
// requested; templates are the unlabelled bank vectors.
struct Snapshot {
    std::uint64_t sample_transforms = 0;
    std::uint64_t template_transforms = 0;
    std::uint64_t test_augmentations = 0;
    std::uint64_t kernel_evaluations = 0;
};

void count_sample_transforms(std::uint64_t n = 1);
void count_template_transforms(std::uint64_t n = 1);
void count_test_augmentations(std::uint64_t n = 1);
void count_kernel_evaluations(std::uint64_t n = 1);

Snapshot snapshot();
void reset();

} // namespace ginv::instrumentation
