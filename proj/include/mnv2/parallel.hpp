#pragma once

#include <cstddef>
#include <functional>

namespace mnv2 {

// Process-wide worker count. Defaults to MNV2_THREADS when set, else 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs fn(i) for i in [0, n) over contiguous static chunks, one chunk per
// worker. Each index is processed by exactly one call, so results written to
// disjoint outputs do not depend on the worker count. The first exception
// thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace mnv2
