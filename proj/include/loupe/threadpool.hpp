#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace loupe {

// Worker count for parallel_for. Capped by the LOUPE_THREADS env var.
std::size_t worker_threads();

// Runs fn(begin, end) over disjoint chunks of [0, n). Each index is handled
// by exactly one chunk, so results are bitwise independent of the thread
// count. Falls back to inline execution for small n.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace loupe
