#ifndef DWCAPS_PARALLEL_HPP_
#define DWCAPS_PARALLEL_HPP_

#include <cstdint>
#include <functional>

namespace dwcaps::threads {

// Worker count: min(hardware threads, DWCAPS_THREADS env var, programmatic
// cap). Always >= 1.
int max_threads();

// Programmatic cap, mainly for tests; 0 removes the cap.
void set_cap(int n);

// Runs fn(begin..end) split across workers. fn(i) must touch only outputs
// owned by index i; under that rule results are bitwise identical for any
// worker count.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

// Runs fn(lo, hi) on contiguous chunks whose starts are multiples of
// `align`, so callers with block-structured kernels keep a fixed per-index
// code path regardless of how the range is split.
void parallel_blocks(std::int64_t n, std::int64_t align,
                     const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace dwcaps::threads

#endif  // DWCAPS_PARALLEL_HPP_
