#include "dwcaps/linalg.hpp"

#include <algorithm>

#include "dwcaps/parallel.hpp"

namespace dwcaps {

namespace {

// Cache blocking: KC*NC panel of b stays in L2, NR-wide accumulator strips
// stay in registers, 4 rows of a are processed together. The constants are
// fixed (never derived from the thread count) and row blocks handed to
// workers are aligned to 4, so each element always sees the same sequence
// of fused multiply-adds.
constexpr std::int64_t kKC = 256;
constexpr std::int64_t kNC = 512;
constexpr std::int64_t kNR = 64;

template <class T>
void gemm_rows(const T* a, const T* b, T* c, std::int64_t row_lo,
               std::int64_t row_hi, std::int64_t m, std::int64_t k,
               std::int64_t n) {
  (void)m;
  for (std::int64_t kc = 0; kc < k; kc += kKC) {
    const std::int64_t kend = std::min(kc + kKC, k);
    for (std::int64_t nc = 0; nc < n; nc += kNC) {
      const std::int64_t nend = std::min(nc + kNC, n);
      std::int64_t i = row_lo;
      for (; i + 4 <= row_hi; i += 4) {
        for (std::int64_t jt = nc; jt < nend; jt += kNR) {
          const std::int64_t jend = std::min(jt + kNR, nend);
          const std::int64_t w = jend - jt;
          T acc0[kNR], acc1[kNR], acc2[kNR], acc3[kNR];
          for (std::int64_t j = 0; j < w; ++j) {
            acc0[j] = c[(i + 0) * n + jt + j];
            acc1[j] = c[(i + 1) * n + jt + j];
            acc2[j] = c[(i + 2) * n + jt + j];
            acc3[j] = c[(i + 3) * n + jt + j];
          }
          for (std::int64_t kk = kc; kk < kend; ++kk) {
            const T* brow = b + kk * n + jt;
            const T a0 = a[(i + 0) * k + kk];
            const T a1 = a[(i + 1) * k + kk];
            const T a2 = a[(i + 2) * k + kk];
            const T a3 = a[(i + 3) * k + kk];
            for (std::int64_t j = 0; j < w; ++j) {
              const T bv = brow[j];
              acc0[j] += a0 * bv;
              acc1[j] += a1 * bv;
              acc2[j] += a2 * bv;
              acc3[j] += a3 * bv;
            }
          }
          for (std::int64_t j = 0; j < w; ++j) {
            c[(i + 0) * n + jt + j] = acc0[j];
            c[(i + 1) * n + jt + j] = acc1[j];
            c[(i + 2) * n + jt + j] = acc2[j];
            c[(i + 3) * n + jt + j] = acc3[j];
          }
        }
      }
      for (; i < row_hi; ++i) {
        for (std::int64_t jt = nc; jt < nend; jt += kNR) {
          const std::int64_t jend = std::min(jt + kNR, nend);
          const std::int64_t w = jend - jt;
          T acc[kNR];
          for (std::int64_t j = 0; j < w; ++j) acc[j] = c[i * n + jt + j];
          for (std::int64_t kk = kc; kk < kend; ++kk) {
            const T* brow = b + kk * n + jt;
            const T a0 = a[i * k + kk];
            for (std::int64_t j = 0; j < w; ++j) acc[j] += a0 * brow[j];
          }
          for (std::int64_t j = 0; j < w; ++j) c[i * n + jt + j] = acc[j];
        }
      }
    }
  }
}

}  // namespace

template <class T>
void matmul_raw(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                std::int64_t n) {
  std::fill(c, c + m * n, T(0));
  threads::parallel_blocks(m, 4, [&](std::int64_t lo, std::int64_t hi) {
    gemm_rows(a, b, c, lo, hi, m, k, n);
  });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 tensors, got " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul inner extents disagree: " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  matmul_raw(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

template <class T>
Tensor<T> transposed(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose expects a rank-2 tensor");
  }
  const std::int64_t m = a.extent(0), n = a.extent(1);
  Tensor<T> t({n, m});
  const T* src = a.data();
  T* dst = t.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  return t;
}

template void matmul_raw<float>(const float*, const float*, float*,
                                std::int64_t, std::int64_t, std::int64_t);
template void matmul_raw<double>(const double*, const double*, double*,
                                 std::int64_t, std::int64_t, std::int64_t);
template Tensor<float> matmul<float>(const Tensor<float>&,
                                     const Tensor<float>&);
template Tensor<double> matmul<double>(const Tensor<double>&,
                                       const Tensor<double>&);
template Tensor<float> transposed<float>(const Tensor<float>&);
template Tensor<double> transposed<double>(const Tensor<double>&);

}  // namespace dwcaps
