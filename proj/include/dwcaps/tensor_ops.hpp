#ifndef DWCAPS_TENSOR_OPS_HPP_
#define DWCAPS_TENSOR_OPS_HPP_

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// Elementwise and reduction kernels on plain tensors. These are the
// non-recording counterparts of the autograd ops; both the taped ops and
// gradient-free code paths (evaluation, routing iterations) go through them.

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scaled(const Tensor<T>& a, T factor);

template <class T>
T sum(const Tensor<T>& a);

template <class T>
Tensor<T> relu(const Tensor<T>& a);

// Stable softmax over one axis: the slice maximum is subtracted before
// exponentiation. Entries are positive and sum to 1 along `axis`.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::int64_t axis);

}  // namespace dwcaps

#endif  // DWCAPS_TENSOR_OPS_HPP_
