// Deterministic index-range parallelism.
//
// Work is split into fixed contiguous chunks; each index is processed by
// exactly one thread and results are written to disjoint slots, so output
// is bitwise identical for any thread count.

#pragma once

#include <cstddef>
#include <functional>

namespace occl {

/// Process-wide default thread count. Initialized from the environment
/// variable OCCLUSYNTH_THREADS, else hardware concurrency.
int default_threads();
void set_default_threads(int n);

/// Runs fn(i) for i in [begin, end). threads <= 0 uses default_threads().
/// fn must only write to slots owned by index i.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn,
                  int threads = 0);

}  // namespace occl
