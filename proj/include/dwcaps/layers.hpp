#ifndef DWCAPS_LAYERS_HPP_
#define DWCAPS_LAYERS_HPP_

#include <vector>

#include "dwcaps/autograd.hpp"
#include "dwcaps/capsule.hpp"
#include "dwcaps/conv.hpp"

namespace dwcaps {

// Differentiable layer ops over batched [B,H,W,C] activations. Weight
// gradients flow to the kernel/bias Vars; pass a default-constructed Var
// as bias to skip it.

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias,
              const ConvSpec& spec);

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& khat, const Var<T>& bias,
                        const ConvSpec& spec);

template <class T>
Var<T> pointwise_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <class T>
Var<T> maxpool(const Var<T>& x, std::int64_t window, std::int64_t stride);

// Keeps every second row/column; the downsampling step of the
// primary-capsule stage for large feature maps.
template <class T>
Var<T> stride2_subsample(const Var<T>& x);

template <class T>
Var<T> squash(const Var<T>& x);  // along the last axis

// [B,H,W,C] -> squashed poses [B, H*W*C/dim, dim].
template <class T>
Var<T> primary_capsules(const Var<T>& x, std::int64_t dim);

template <class T>
Var<T> predict_votes(const Var<T>& poses, const Var<T>& w);

// Routing by agreement. The coupling coefficients are computed without
// recording (the logits are not differentiated through), then the final
// weighted sum and squash are taped, so gradients reach the votes via the
// last pass only.
template <class T>
Var<T> dynamic_routing(const Var<T>& votes, int iterations);

// Mean over the batch of per-item margin losses; scalar.
template <class T>
Var<T> margin_loss(const Var<T>& caps, const std::vector<int>& labels);

}  // namespace dwcaps

#endif  // DWCAPS_LAYERS_HPP_
