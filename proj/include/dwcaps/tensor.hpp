#ifndef DWCAPS_TENSOR_HPP_
#define DWCAPS_TENSOR_HPP_

#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dwcaps/errors.hpp"

namespace dwcaps {

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape& shape);

inline std::int64_t shape_volume(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  return n;
}

inline void validate_shape(const Shape& shape) {
  for (std::int64_t e : shape) {
    if (e < 1) {
      throw ShapeError("invalid shape " + shape_to_string(shape) +
                       ": every extent must be >= 1");
    }
  }
}

// Dense N-dimensional array, row-major, channels-last for feature maps.
// Tensors are plain values: copying copies the data, and no operation in
// the library mutates its inputs.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) {
    validate_shape(shape);
    shape_ = std::move(shape);
    data_.assign(static_cast<std::size_t>(shape_volume(shape_)), T(0));
  }

  Tensor(Shape shape, std::vector<T> values) {
    validate_shape(shape);
    if (shape_volume(shape) != static_cast<std::int64_t>(values.size())) {
      throw ShapeError("shape " + shape_to_string(shape) + " expects " +
                       std::to_string(shape_volume(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    shape_ = std::move(shape);
    data_ = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (T& x : t.data_) x = value;
    return t;
  }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::int64_t extent(std::int64_t axis) const {
    if (axis < 0 || axis >= rank()) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                       shape_to_string(shape_));
    }
    return shape_[static_cast<std::size_t>(axis)];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  template <class... Ix>
  T& operator()(Ix... ix) {
    return data_[static_cast<std::size_t>(offset(ix...))];
  }
  template <class... Ix>
  const T& operator()(Ix... ix) const {
    return data_[static_cast<std::size_t>(offset(ix...))];
  }

  // Row-major linear offset; the index pack must match the rank.
  template <class... Ix>
  std::int64_t offset(Ix... ix) const {
    const std::int64_t idx[] = {static_cast<std::int64_t>(ix)...};
    const std::size_t n = sizeof...(Ix);
    std::int64_t off = 0;
    for (std::size_t a = 0; a < n; ++a) off = off * shape_[a] + idx[a];
    return off;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Same data, new shape. Flattening and reshaping back is the identity.
  Tensor reshaped(Shape shape) const {
    validate_shape(shape);
    if (shape_volume(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " (" +
                       std::to_string(size()) + " values) to " +
                       shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace dwcaps

#endif  // DWCAPS_TENSOR_HPP_
