#pragma once

#include <cstddef>
#include <functional>

namespace audiomod {

// --threads value if positive, else AUDIOMOD_THREADS, else 1.
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Keeps large tensor buffers in the heap instead of per-allocation mappings
// that page-fault again on every training step. No-op off glibc.
void tune_allocator();

}  // namespace audiomod
