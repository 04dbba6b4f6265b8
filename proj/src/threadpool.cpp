#include "loupe/threadpool.hpp"

#include <cstdlib>
#include <string>

namespace loupe {

std::size_t worker_threads() {
  static const std::size_t n = [] {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("LOUPE_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(v));
      } catch (...) {
        // ignore malformed values, keep hardware default
      }
    }
    return hw;
  }();
  return n;
}

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = worker_threads();
  if (n == 0) return;
  if (workers <= 1 || n <= grain) {
    fn(0, n);
    return;
  }
  const std::size_t chunks = std::min(workers, (n + grain - 1) / grain);
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t b = c * step;
    const std::size_t e = std::min(n, b + step);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace loupe
