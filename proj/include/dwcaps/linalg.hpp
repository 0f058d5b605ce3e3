#ifndef DWCAPS_LINALG_HPP_
#define DWCAPS_LINALG_HPP_

#include <cstdint>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// c = a (m x k) * b (k x n), overwriting c. Every output element is a sum
// over k in ascending order no matter how many worker threads run, so the
// result is bitwise reproducible.
template <class T>
void matmul_raw(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                std::int64_t n);

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> transposed(const Tensor<T>& a);

}  // namespace dwcaps

#endif  // DWCAPS_LINALG_HPP_
