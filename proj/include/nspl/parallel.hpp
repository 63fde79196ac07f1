#pragma once

#include <cstddef>
#include <functional>

namespace nspl {

/// Worker count: `requested` if positive, else $NSPL_THREADS, else the
/// hardware concurrency (at least one).
int resolve_threads(int requested);

/// Runs fn(item, worker) for every item in [0, n) on up to `threads`
/// workers. Items are handed out dynamically; `worker` is stable per thread
/// and lies in [0, threads). The first exception thrown is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, int)>& fn);

}  // namespace nspl
