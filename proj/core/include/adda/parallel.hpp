#pragma once

#include <cstddef>
#include <functional>

namespace adda {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Callers write
// results into per-index slots and reduce them in index order, so output
// does not depend on the thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace adda
