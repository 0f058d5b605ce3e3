#include "dwcaps/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace dwcaps::threads {

namespace {

std::atomic<int> g_cap{0};

int env_threads() {
  const char* s = std::getenv("DWCAPS_THREADS");
  if (s == nullptr || *s == '\0') return 0;
  int v = std::atoi(s);
  return v > 0 ? v : 1;
}

}  // namespace

int max_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (int e = env_threads(); e > 0) n = std::min(n, e);
  if (int c = g_cap.load(); c > 0) n = std::min(n, c);
  return n;
}

void set_cap(int n) { g_cap.store(n > 0 ? n : 0); }

void parallel_blocks(std::int64_t n, std::int64_t align,
                     const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  if (align < 1) align = 1;
  const std::int64_t workers =
      std::min<std::int64_t>(max_threads(), (n + align - 1) / align);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  // Chunk starts are rounded up to `align` so the split never changes which
  // code path handles a given index.
  std::int64_t chunk = (n + workers - 1) / workers;
  chunk = ((chunk + align - 1) / align) * align;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t lo = 0; lo < n; lo += chunk) {
    const std::int64_t hi = std::min(n, lo + chunk);
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
  parallel_blocks(end - begin, 1,
                  [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t i = lo; i < hi; ++i) fn(begin + i);
                  });
}

}  // namespace dwcaps::threads
