#include "dwcaps/conv.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "dwcaps/linalg.hpp"
#include "dwcaps/parallel.hpp"

namespace dwcaps {

const char* to_string(Padding p) {
  return p == Padding::kSame ? "same" : "valid";
}

const char* to_string(ConvMode m) {
  switch (m) {
    case ConvMode::kStandard: return "standard";
    case ConvMode::kDepthwise: return "depthwise";
    case ConvMode::kPointwise: return "pointwise";
    case ConvMode::kSeparable: return "separable";
  }
  return "?";
}

void ConvSpec::validate() const {
  if (kernel_size < 1 || in_channels < 1 || out_channels < 1 || stride < 1) {
    throw DomainError("ConvSpec: kernel_size, channels and stride must be >= 1");
  }
  if (kernel_size % 2 == 0) {
    throw DomainError("ConvSpec: even kernel size " +
                      std::to_string(kernel_size) + " is not supported");
  }
  if (mode == ConvMode::kPointwise && kernel_size != 1) {
    throw ContractError("ConvSpec: pointwise convolution requires a 1x1 kernel");
  }
  if (mode == ConvMode::kDepthwise && out_channels != in_channels) {
    throw ContractError(
        "ConvSpec: depthwise convolution has out_channels == in_channels");
  }
}

std::int64_t ConvSpec::out_extent(std::int64_t in_extent) const {
  const std::int64_t padded = in_extent + 2 * pad();
  if (kernel_size > padded) {
    throw ShapeError("conv geometry: kernel " + std::to_string(kernel_size) +
                     " exceeds input extent " + std::to_string(in_extent) +
                     " with " + to_string(padding) + " padding");
  }
  return (padded - kernel_size) / stride + 1;
}

namespace {

template <class T>
void check_image(const Tensor<T>& f, std::int64_t channels, const char* what) {
  if (f.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [H,W,C] input, got " +
                     shape_to_string(f.shape()));
  }
  if (f.extent(2) != channels) {
    throw ShapeError(std::string(what) + ": input has " +
                     std::to_string(f.extent(2)) + " channels, spec expects " +
                     std::to_string(channels));
  }
}

}  // namespace

template <class T>
Tensor<T> im2col(const Tensor<T>& f, const ConvSpec& spec) {
  const std::int64_t h = f.extent(0), w = f.extent(1), c = f.extent(2);
  const std::int64_t k = spec.kernel_size, pad = spec.pad(), s = spec.stride;
  const std::int64_t ho = spec.out_extent(h), wo = spec.out_extent(w);
  Tensor<T> cols({ho * wo, k * k * c});
  const T* src = f.data();
  T* dst = cols.data();
  const std::int64_t row_len = k * k * c;
  threads::parallel_for(0, ho * wo, [&](std::int64_t p) {
    const std::int64_t oh = p / wo, ow = p % wo;
    T* row = dst + p * row_len;
    for (std::int64_t kh = 0; kh < k; ++kh) {
      const std::int64_t ih = oh * s - pad + kh;
      for (std::int64_t kw = 0; kw < k; ++kw) {
        const std::int64_t iw = ow * s - pad + kw;
        T* cell = row + (kh * k + kw) * c;
        if (ih < 0 || ih >= h || iw < 0 || iw >= w) {
          for (std::int64_t m = 0; m < c; ++m) cell[m] = T(0);
        } else {
          const T* px = src + (ih * w + iw) * c;
          for (std::int64_t m = 0; m < c; ++m) cell[m] = px[m];
        }
      }
    }
  });
  return cols;
}

template <class T>
Tensor<T> col2im(const Tensor<T>& cols, std::int64_t height,
                 std::int64_t width, std::int64_t channels,
                 const ConvSpec& spec) {
  const std::int64_t k = spec.kernel_size, pad = spec.pad(), s = spec.stride;
  const std::int64_t ho = spec.out_extent(height);
  const std::int64_t wo = spec.out_extent(width);
  if (cols.extent(0) != ho * wo || cols.extent(1) != k * k * channels) {
    throw ShapeError("col2im: columns " + shape_to_string(cols.shape()) +
                     " do not match the given geometry");
  }
  Tensor<T> img({height, width, channels});
  const T* src = cols.data();
  T* dst = img.data();
  const std::int64_t row_len = k * k * channels;
  threads::parallel_for(0, height * width, [&](std::int64_t px) {
    const std::int64_t ih = px / width, iw = px % width;
    T* cell = dst + px * channels;
    for (std::int64_t kh = 0; kh < k; ++kh) {
      const std::int64_t num_h = ih + pad - kh;
      if (num_h < 0 || num_h % s != 0) continue;
      const std::int64_t oh = num_h / s;
      if (oh >= ho) continue;
      for (std::int64_t kw = 0; kw < k; ++kw) {
        const std::int64_t num_w = iw + pad - kw;
        if (num_w < 0 || num_w % s != 0) continue;
        const std::int64_t ow = num_w / s;
        if (ow >= wo) continue;
        const T* row = src + (oh * wo + ow) * row_len + (kh * k + kw) * channels;
        for (std::int64_t m = 0; m < channels; ++m) cell[m] += row[m];
      }
    }
  });
  return img;
}

template <class T>
Tensor<T> conv2d_standard(const Tensor<T>& f, const Tensor<T>& kernel,
                          const ConvSpec& spec) {
  spec.validate();
  check_image(f, spec.in_channels, "conv2d_standard");
  const std::int64_t k = spec.kernel_size;
  const Shape want = {k, k, spec.in_channels, spec.out_channels};
  if (kernel.shape() != want) {
    throw ShapeError("conv2d_standard: kernel " +
                     shape_to_string(kernel.shape()) + ", spec expects " +
                     shape_to_string(want));
  }
  const std::int64_t ho = spec.out_extent(f.extent(0));
  const std::int64_t wo = spec.out_extent(f.extent(1));
  Tensor<T> cols = im2col(f, spec);
  // [k,k,M,N] flattens row-major to exactly the [k*k*M, N] matrix the
  // column layout of im2col expects.
  Tensor<T> out({ho * wo, spec.out_channels});
  matmul_raw(cols.data(), kernel.data(), out.data(), ho * wo,
             k * k * spec.in_channels, spec.out_channels);
  return out.reshaped({ho, wo, spec.out_channels});
}

template <class T>
Tensor<T> conv2d_depthwise(const Tensor<T>& f, const Tensor<T>& khat,
                           const ConvSpec& spec) {
  ConvSpec dw = spec;
  dw.mode = ConvMode::kDepthwise;
  dw.out_channels = dw.in_channels;
  dw.validate();
  check_image(f, dw.in_channels, "conv2d_depthwise");
  const std::int64_t k = dw.kernel_size, m = dw.in_channels;
  const Shape want = {k, k, m};
  if (khat.shape() != want) {
    throw ShapeError("conv2d_depthwise: kernel " +
                     shape_to_string(khat.shape()) + ", spec expects " +
                     shape_to_string(want));
  }
  const std::int64_t h = f.extent(0), w = f.extent(1);
  const std::int64_t ho = dw.out_extent(h), wo = dw.out_extent(w);
  const std::int64_t pad = dw.pad(), s = dw.stride, taps = k * k;
  Tensor<T> out({ho, wo, m});
  const T* src = f.data();
  const T* kern = khat.data();
  T* dst = out.data();
  // Channel c of the output depends only on channel c of the input, so
  // channels parallelize cleanly. Each channel flattens its patches and
  // takes the product with its own k*k filter.
  threads::parallel_for(0, m, [&](std::int64_t c) {
    std::vector<T> patch(static_cast<std::size_t>(taps));
    for (std::int64_t oh = 0; oh < ho; ++oh) {
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        for (std::int64_t kh = 0; kh < k; ++kh) {
          const std::int64_t ih = oh * s - pad + kh;
          for (std::int64_t kw = 0; kw < k; ++kw) {
            const std::int64_t iw = ow * s - pad + kw;
            patch[static_cast<std::size_t>(kh * k + kw)] =
                (ih < 0 || ih >= h || iw < 0 || iw >= w)
                    ? T(0)
                    : src[(ih * w + iw) * m + c];
          }
        }
        T acc(0);
        for (std::int64_t t = 0; t < taps; ++t) acc += patch[t] * kern[t * m + c];
        dst[(oh * wo + ow) * m + c] = acc;
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> conv2d_pointwise(const Tensor<T>& g, const Tensor<T>& w) {
  if (w.rank() != 4 || w.extent(0) != 1 || w.extent(1) != 1) {
    throw ContractError("conv2d_pointwise: kernel must be [1,1,M,N], got " +
                        shape_to_string(w.shape()));
  }
  const std::int64_t m = w.extent(2), n = w.extent(3);
  check_image(g, m, "conv2d_pointwise");
  const std::int64_t h = g.extent(0), wd = g.extent(1);
  Tensor<T> out({h, wd, n});
  matmul_raw(g.data(), w.data(), out.data(), h * wd, m, n);
  return out;
}

template <class T>
Tensor<T> depthwise_separable(const Tensor<T>& f, const Tensor<T>& khat,
                              const Tensor<T>& w, const ConvSpec& spec) {
  ConvSpec dw = spec;
  dw.mode = ConvMode::kDepthwise;
  dw.out_channels = dw.in_channels;
  return conv2d_pointwise(conv2d_depthwise(f, khat, dw), w);
}

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& f, std::int64_t window,
                    std::int64_t stride) {
  if (f.rank() != 3) {
    throw ShapeError("maxpool2d: expected [H,W,C], got " +
                     shape_to_string(f.shape()));
  }
  if (window < 1 || stride < 1) {
    throw DomainError("maxpool2d: window and stride must be >= 1");
  }
  const std::int64_t h = f.extent(0), w = f.extent(1), c = f.extent(2);
  if (window > h || window > w) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " larger than input " + shape_to_string(f.shape()));
  }
  const std::int64_t ho = (h - window) / stride + 1;
  const std::int64_t wo = (w - window) / stride + 1;
  Tensor<T> out({ho, wo, c});
  const T* src = f.data();
  T* dst = out.data();
  threads::parallel_for(0, ho * wo, [&](std::int64_t p) {
    const std::int64_t oh = p / wo, ow = p % wo;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T best = src[((oh * stride) * w + ow * stride) * c + ch];
      for (std::int64_t dh = 0; dh < window; ++dh) {
        for (std::int64_t dwd = 0; dwd < window; ++dwd) {
          const T v = src[((oh * stride + dh) * w + ow * stride + dwd) * c + ch];
          if (v > best) best = v;
        }
      }
      dst[p * c + ch] = best;
    }
  });
  return out;
}

template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& t, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.size() != t.extent(t.rank() - 1)) {
    throw ShapeError("bias " + shape_to_string(bias.shape()) +
                     " does not match channels of " +
                     shape_to_string(t.shape()));
  }
  Tensor<T> out(t.shape());
  const std::int64_t c = bias.size();
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = t[i] + bias[i % c];
  return out;
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& f, const ConvWeights<T>& weights,
                       const ConvSpec& spec) {
  Tensor<T> out;
  switch (weights.mode) {
    case ConvMode::kStandard:
      out = conv2d_standard(f, weights.kernel, spec);
      break;
    case ConvMode::kDepthwise:
      out = conv2d_depthwise(f, weights.kernel, spec);
      break;
    case ConvMode::kPointwise:
      out = conv2d_pointwise(f, weights.kernel);
      break;
    case ConvMode::kSeparable: {
      ConvSpec dw = spec;
      dw.mode = ConvMode::kDepthwise;
      dw.out_channels = dw.in_channels;
      Tensor<T> mid = conv2d_depthwise(f, weights.kernel, dw);
      if (!weights.inner_bias.empty())
        mid = add_channel_bias(mid, weights.inner_bias);
      out = conv2d_pointwise(mid, weights.pointwise);
      break;
    }
  }
  if (!weights.bias.empty()) out = add_channel_bias(out, weights.bias);
  return out;
}

// ---- Reference implementation --------------------------------------------

namespace {

template <class T>
Tensor<T> oracle_standard(const Tensor<T>& f, const Tensor<T>& kernel,
                          const ConvSpec& spec) {
  const std::int64_t h = f.extent(0), w = f.extent(1);
  const std::int64_t k = spec.kernel_size, m = spec.in_channels;
  const std::int64_t n = spec.out_channels;
  const std::int64_t pad = spec.pad(), s = spec.stride;
  const std::int64_t ho = spec.out_extent(h), wo = spec.out_extent(w);
  Tensor<T> out({ho, wo, n});
  for (std::int64_t oh = 0; oh < ho; ++oh)
    for (std::int64_t ow = 0; ow < wo; ++ow)
      for (std::int64_t oc = 0; oc < n; ++oc) {
        T acc(0);
        for (std::int64_t kh = 0; kh < k; ++kh)
          for (std::int64_t kw = 0; kw < k; ++kw)
            for (std::int64_t c = 0; c < m; ++c) {
              const std::int64_t ih = oh * s - pad + kh;
              const std::int64_t iw = ow * s - pad + kw;
              if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
              acc += kernel(kh, kw, c, oc) * f(ih, iw, c);
            }
        out(oh, ow, oc) = acc;
      }
  return out;
}

template <class T>
Tensor<T> oracle_depthwise(const Tensor<T>& f, const Tensor<T>& khat,
                           const ConvSpec& spec) {
  const std::int64_t h = f.extent(0), w = f.extent(1);
  const std::int64_t k = spec.kernel_size, m = spec.in_channels;
  const std::int64_t pad = spec.pad(), s = spec.stride;
  const std::int64_t ho = spec.out_extent(h), wo = spec.out_extent(w);
  Tensor<T> out({ho, wo, m});
  for (std::int64_t oh = 0; oh < ho; ++oh)
    for (std::int64_t ow = 0; ow < wo; ++ow)
      for (std::int64_t c = 0; c < m; ++c) {
        T acc(0);
        for (std::int64_t kh = 0; kh < k; ++kh)
          for (std::int64_t kw = 0; kw < k; ++kw) {
            const std::int64_t ih = oh * s - pad + kh;
            const std::int64_t iw = ow * s - pad + kw;
            if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
            acc += khat(kh, kw, c) * f(ih, iw, c);
          }
        out(oh, ow, c) = acc;
      }
  return out;
}

template <class T>
Tensor<T> oracle_pointwise(const Tensor<T>& g, const Tensor<T>& w) {
  const std::int64_t h = g.extent(0), wd = g.extent(1);
  const std::int64_t m = w.extent(2), n = w.extent(3);
  Tensor<T> out({h, wd, n});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < wd; ++x)
      for (std::int64_t oc = 0; oc < n; ++oc) {
        T acc(0);
        for (std::int64_t c = 0; c < m; ++c)
          acc += w(0, 0, c, oc) * g(y, x, c);
        out(y, x, oc) = acc;
      }
  return out;
}

template <class T>
Tensor<T> oracle_bias(Tensor<T> t, const Tensor<T>& bias) {
  if (bias.empty()) return t;
  const std::int64_t c = bias.size();
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] += bias[i % c];
  return t;
}

}  // namespace

template <class T>
Tensor<T> naive_conv_oracle(const Tensor<T>& f, const ConvWeights<T>& weights,
                            const ConvSpec& spec) {
  spec.validate();
  switch (weights.mode) {
    case ConvMode::kStandard:
      return oracle_bias(oracle_standard(f, weights.kernel, spec),
                         weights.bias);
    case ConvMode::kDepthwise:
      return oracle_bias(oracle_depthwise(f, weights.kernel, spec),
                         weights.bias);
    case ConvMode::kPointwise:
      return oracle_bias(oracle_pointwise(f, weights.kernel), weights.bias);
    case ConvMode::kSeparable: {
      Tensor<T> mid = oracle_bias(oracle_depthwise(f, weights.kernel, spec),
                                  weights.inner_bias);
      return oracle_bias(oracle_pointwise(mid, weights.pointwise),
                         weights.bias);
    }
  }
  throw ContractError("naive_conv_oracle: unknown mode");
}

#define DWCAPS_INSTANTIATE(T)                                                \
  template Tensor<T> im2col<T>(const Tensor<T>&, const ConvSpec&);           \
  template Tensor<T> col2im<T>(const Tensor<T>&, std::int64_t, std::int64_t, \
                               std::int64_t, const ConvSpec&);               \
  template Tensor<T> conv2d_standard<T>(const Tensor<T>&, const Tensor<T>&,  \
                                        const ConvSpec&);                    \
  template Tensor<T> conv2d_depthwise<T>(const Tensor<T>&, const Tensor<T>&, \
                                         const ConvSpec&);                   \
  template Tensor<T> conv2d_pointwise<T>(const Tensor<T>&, const Tensor<T>&);\
  template Tensor<T> depthwise_separable<T>(const Tensor<T>&,                \
                                            const Tensor<T>&,               \
                                            const Tensor<T>&,               \
                                            const ConvSpec&);               \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, std::int64_t,            \
                                  std::int64_t);                             \
  template Tensor<T> add_channel_bias<T>(const Tensor<T>&, const Tensor<T>&);\
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const ConvWeights<T>&,\
                                     const ConvSpec&);                       \
  template Tensor<T> naive_conv_oracle<T>(const Tensor<T>&,                  \
                                          const ConvWeights<T>&,            \
                                          const ConvSpec&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
