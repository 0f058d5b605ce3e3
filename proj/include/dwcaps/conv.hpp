#ifndef DWCAPS_CONV_HPP_
#define DWCAPS_CONV_HPP_

#include <cstdint>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

enum class Padding { kSame, kValid };
enum class ConvMode { kStandard, kDepthwise, kPointwise, kSeparable };

const char* to_string(Padding p);
const char* to_string(ConvMode m);

// Kernel geometry for one convolution. Feature maps are channels-last
// [H, W, C]; kernels are [k, k, in, out] for standard convolution and
// [k, k, in] for depthwise.
struct ConvSpec {
  std::int64_t kernel_size = 1;  // spatial square
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;  // equals in_channels for depthwise
  std::int64_t stride = 1;
  Padding padding = Padding::kSame;
  ConvMode mode = ConvMode::kStandard;

  void validate() const;

  // Zero padding on each side. Kernels are odd-sized, so same padding is
  // symmetric with pad = (k-1)/2 and stride 1 preserves the spatial extent.
  std::int64_t pad() const {
    return padding == Padding::kSame ? (kernel_size - 1) / 2 : 0;
  }

  std::int64_t out_extent(std::int64_t in_extent) const;
};

template <class T>
struct ConvWeights {
  ConvMode mode = ConvMode::kStandard;
  // standard: [k,k,M,N]; pointwise: [1,1,M,N]; depthwise and separable:
  // the per-channel kernel [k,k,M].
  Tensor<T> kernel;
  // separable only: the 1x1 channel-mixing kernel [1,1,M,N].
  Tensor<T> pointwise;
  // Output bias, optional (empty = none): [N], or [M] for bare depthwise.
  Tensor<T> bias;
  // separable only: optional bias of the depthwise stage, [M].
  Tensor<T> inner_bias;
};

// ---- Optimized forward paths (patch flattening + matrix product) --------
// These are the pure convolution sums; biases are applied by conv_forward.

template <class T>
Tensor<T> conv2d_standard(const Tensor<T>& f, const Tensor<T>& kernel,
                          const ConvSpec& spec);

template <class T>
Tensor<T> conv2d_depthwise(const Tensor<T>& f, const Tensor<T>& khat,
                           const ConvSpec& spec);

template <class T>
Tensor<T> conv2d_pointwise(const Tensor<T>& g, const Tensor<T>& w);

template <class T>
Tensor<T> depthwise_separable(const Tensor<T>& f, const Tensor<T>& khat,
                              const Tensor<T>& w, const ConvSpec& spec);

// Per-channel sliding-window maximum over [H,W,C].
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& f, std::int64_t window,
                    std::int64_t stride);

// Dispatches on weights.mode and applies biases where present.
template <class T>
Tensor<T> conv_forward(const Tensor<T>& f, const ConvWeights<T>& weights,
                       const ConvSpec& spec);

// Direct loop translation of the convolution sums, with explicit bounds
// checks for the zero padding. Shares no machinery with the optimized
// paths; used as the reference they are tested against.
template <class T>
Tensor<T> naive_conv_oracle(const Tensor<T>& f, const ConvWeights<T>& weights,
                            const ConvSpec& spec);

// ---- Patch flattening ----------------------------------------------------

// [H,W,C] -> [P, k*k*C] where P = Ho*Wo and the column order matches the
// row-major flattening of a [k,k,C,...] kernel.
template <class T>
Tensor<T> im2col(const Tensor<T>& f, const ConvSpec& spec);

// Adjoint of im2col: scatters patch columns back onto an [H,W,C] image.
// Implemented as a gather per input pixel so it parallelizes without
// write conflicts.
template <class T>
Tensor<T> col2im(const Tensor<T>& cols, std::int64_t height,
                 std::int64_t width, std::int64_t channels,
                 const ConvSpec& spec);

template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& t, const Tensor<T>& bias);

}  // namespace dwcaps

#endif  // DWCAPS_CONV_HPP_
