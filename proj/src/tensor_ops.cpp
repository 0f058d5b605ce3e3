#include "dwcaps/tensor_ops.hpp"

#include <cmath>
#include <string>

namespace dwcaps {

namespace {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shapes " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "subtract");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "multiply");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <class T>
Tensor<T> scaled(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

template <class T>
T sum(const Tensor<T>& a) {
  T acc(0);
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i)
    out[i] = a[i] > T(0) ? a[i] : T(0);
  return out;
}

template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::int64_t axis) {
  if (axis < 0 || axis >= a.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " invalid for " + shape_to_string(a.shape()));
  }
  const auto& shape = a.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::int64_t i = axis + 1; i < a.rank(); ++i) inner *= shape[i];
  const std::int64_t len = shape[axis];

  Tensor<T> out(a.shape());
  const T* src = a.data();
  T* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      T mx = src[base];
      for (std::int64_t l = 1; l < len; ++l)
        mx = std::max(mx, src[base + l * inner]);
      T total(0);
      for (std::int64_t l = 0; l < len; ++l) {
        const T e = std::exp(src[base + l * inner] - mx);
        dst[base + l * inner] = e;
        total += e;
      }
      for (std::int64_t l = 0; l < len; ++l) dst[base + l * inner] /= total;
    }
  }
  return out;
}

#define DWCAPS_INSTANTIATE(T)                                  \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> subtract<T>(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> multiply<T>(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> scaled<T>(const Tensor<T>&, T);                  \
  template T sum<T>(const Tensor<T>&);                                \
  template Tensor<T> relu<T>(const Tensor<T>&);                       \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::int64_t);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
