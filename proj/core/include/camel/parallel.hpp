#pragma once

#include <cstddef>
#include <functional>

namespace camel {

/// Worker cap from CAMEL_THREADS (default 1).
int worker_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, so
/// results written by index are independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace camel
