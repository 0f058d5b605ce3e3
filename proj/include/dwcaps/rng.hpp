#ifndef DWCAPS_RNG_HPP_
#define DWCAPS_RNG_HPP_

#include <cstdint>
#include <random>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// Derives an independent stream seed from a base seed. Used so one run seed
// can drive dataset generation, weight init and epoch shuffles without the
// streams overlapping.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Thin wrapper around mt19937_64 with fixed uint64->double mapping, so the
// produced values are identical on every platform and build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1) with 53 bits of randomness.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform in [0,n) by rejection; unbiased and implementation-independent.
  std::uint64_t below(std::uint64_t n);

  // In-place Fisher-Yates.
  template <class V>
  void shuffle(V& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Deterministic uniform fill: identical (shape, seed, lo, hi) gives a
// bitwise-identical tensor. Values are drawn in double and narrowed to T so
// float and double tensors see the same underlying stream.
template <class T>
Tensor<T> random_uniform(const Shape& shape, std::uint64_t seed, double lo,
                         double hi) {
  if (!(lo < hi)) {
    throw DomainError("random_uniform: lo must be < hi");
  }
  Tensor<T> t(shape);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(rng.uniform(lo, hi));
  }
  return t;
}

}  // namespace dwcaps

#endif  // DWCAPS_RNG_HPP_
