#pragma once

#include <cstddef>
#include <functional>

namespace powdr {

/// Worker count: POWDR_THREADS if set and positive, otherwise the hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers write results by index,
/// so output does not depend on the thread count. Exceptions from workers are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace powdr
