#include "ginv/instrumentation.hpp"

#include <atomic>

namespace ginv::instrumentation {

namespace {
std::atomic<std::uint64_t> sample_transforms{0};
std::atomic<std::uint64_t> template_transforms{0};
std::atomic<std::uint64_t> test_augmentations{0};
std::atomic<std::uint64_t> kernel_evaluations{0};
} // namespace

void count_sample_transforms(std::uint64_t n) { sample_transforms.fetch_add(n, std::memory_order_relaxed); }
void count_template_transforms(std::uint64_t n) { template_transforms.fetch_add(n, std::memory_order_relaxed); }
void count_test_augmentations(std::uint64_t n) { test_augmentations.fetch_add(n, std::memory_order_relaxed); }
void count_kernel_evaluations(std::uint64_t n) { kernel_evaluations.fetch_add(n, std::memory_order_relaxed); }

Snapshot snapshot()
{
    return {sample_transforms.load(), template_transforms.load(), test_augmentations.load(),
            kernel_evaluations.load()};
}

void reset()
{
    sample_transforms = 0;
    template_transforms = 0;
    test_augmentations = 0;
    kernel_evaluations = 0;
}

} // namespace ginv::instrumentation
