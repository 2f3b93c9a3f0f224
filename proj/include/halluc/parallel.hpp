#pragma once

#include <cstddef>
#include <functional>

namespace halluc {

/// Number of worker threads used when a caller passes jobs = 0.
unsigned default_jobs();

/// Runs fn(i) for i in [0, n) on up to `jobs` threads (0 = default_jobs()).
/// Each index is visited exactly once. If any call throws, the exception
/// from the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

}  // namespace halluc
