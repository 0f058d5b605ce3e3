#include "dwcaps/layers.hpp"

#include <cmath>
#include <utility>

#include "dwcaps/linalg.hpp"
#include "dwcaps/parallel.hpp"
#include "dwcaps/tensor_ops.hpp"

namespace dwcaps {

namespace {

template <class T>
void check_batched(const Var<T>& x, const char* what) {
  if (x.value().rank() != 4) {
    throw ShapeError(std::string(what) + ": expected [B,H,W,C], got " +
                     shape_to_string(x.value().shape()));
  }
}

// Copies item b of a [B,...] tensor into a tensor of the remaining shape.
template <class T>
Tensor<T> item_of(const Tensor<T>& t, std::int64_t b) {
  Shape shape(t.shape().begin() + 1, t.shape().end());
  Tensor<T> out(shape);
  const std::int64_t n = out.size();
  std::copy(t.data() + b * n, t.data() + (b + 1) * n, out.data());
  return out;
}

template <class T>
void add_into_item(Tensor<T>& dst, std::int64_t b, const Tensor<T>& src) {
  const std::int64_t n = src.size();
  T* d = dst.data() + b * n;
  for (std::int64_t i = 0; i < n; ++i) d[i] += src[i];
}

template <class T>
void add_bias_channels_last(Tensor<T>& t, const Tensor<T>& bias) {
  const std::int64_t c = bias.size();
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] += bias[i % c];
}

// d(bias) = sum of the gradient over everything but the channel axis.
template <class T>
void accumulate_bias_grad(VarNode<T>& bias, const Tensor<T>& g) {
  if (!bias.requires_grad) return;
  bias.ensure_grad();
  const std::int64_t c = bias.grad.size();
  const std::int64_t rows = g.size() / c;
  const T* gp = g.data();
  T* db = bias.grad.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < c; ++j) db[j] += gp[r * c + j];
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias,
              const ConvSpec& spec) {
  check_batched(x, "conv2d");
  const auto& xv = x.value();
  const std::int64_t batch = xv.extent(0);
  const std::int64_t ho = spec.out_extent(xv.extent(1));
  const std::int64_t wo = spec.out_extent(xv.extent(2));
  const std::int64_t n = spec.out_channels;

  Tensor<T> out({batch, ho, wo, n});
  for (std::int64_t b = 0; b < batch; ++b) {
    Tensor<T> ob = conv2d_standard(item_of(xv, b), kernel.value(), spec);
    std::copy(ob.data(), ob.data() + ob.size(), out.data() + b * ob.size());
  }
  const bool with_bias = bias.defined();
  if (with_bias) add_bias_channels_last(out, bias.value());

  auto backward = [spec, with_bias](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    auto& kn = *node.parents[1];
    const std::int64_t batch = xn.value.extent(0);
    const std::int64_t h = xn.value.extent(1), w = xn.value.extent(2);
    const std::int64_t m = spec.in_channels, n = spec.out_channels;
    const std::int64_t p = node.grad.size() / (batch * n);
    const std::int64_t kkm = spec.kernel_size * spec.kernel_size * m;
    Tensor<T> wmat_t;  // [N, k*k*M]
    if (xn.requires_grad) {
      wmat_t = transposed(kn.value.reshaped({kkm, n}));
    }
    if (kn.requires_grad) kn.ensure_grad();
    if (xn.requires_grad) xn.ensure_grad();
    for (std::int64_t b = 0; b < batch; ++b) {
      Tensor<T> g_b({p, n});
      std::copy(node.grad.data() + b * p * n,
                node.grad.data() + (b + 1) * p * n, g_b.data());
      Tensor<T> cols = im2col(item_of(xn.value, b), spec);
      if (kn.requires_grad) {
        Tensor<T> dw = matmul(transposed(cols), g_b);  // [kkm, n]
        T* dst = kn.grad.data();
        for (std::int64_t i = 0; i < dw.size(); ++i) dst[i] += dw[i];
      }
      if (xn.requires_grad) {
        Tensor<T> dcols = matmul(g_b, wmat_t);
        add_into_item(xn.grad, b, col2im(dcols, h, w, m, spec));
      }
    }
    if (with_bias) accumulate_bias_grad(*node.parents[2], node.grad);
  };

  std::vector<Var<T>> parents = {x, kernel};
  if (with_bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), std::move(backward));
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& khat, const Var<T>& bias,
                        const ConvSpec& spec) {
  check_batched(x, "depthwise_conv2d");
  ConvSpec dw = spec;
  dw.mode = ConvMode::kDepthwise;
  dw.out_channels = dw.in_channels;
  const auto& xv = x.value();
  const std::int64_t batch = xv.extent(0);
  const std::int64_t ho = dw.out_extent(xv.extent(1));
  const std::int64_t wo = dw.out_extent(xv.extent(2));
  const std::int64_t m = dw.in_channels;

  Tensor<T> out({batch, ho, wo, m});
  for (std::int64_t b = 0; b < batch; ++b) {
    Tensor<T> ob = conv2d_depthwise(item_of(xv, b), khat.value(), dw);
    std::copy(ob.data(), ob.data() + ob.size(), out.data() + b * ob.size());
  }
  const bool with_bias = bias.defined();
  if (with_bias) add_bias_channels_last(out, bias.value());

  auto backward = [dw, with_bias](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    auto& kn = *node.parents[1];
    const std::int64_t batch = xn.value.extent(0);
    const std::int64_t h = xn.value.extent(1), w = xn.value.extent(2);
    const std::int64_t m = dw.in_channels, k = dw.kernel_size;
    const std::int64_t pad = dw.pad(), s = dw.stride;
    const std::int64_t ho = dw.out_extent(h), wo = dw.out_extent(w);
    const std::int64_t taps = k * k;
    if (kn.requires_grad) kn.ensure_grad();
    if (xn.requires_grad) xn.ensure_grad();
    for (std::int64_t b = 0; b < batch; ++b) {
      const T* xb = xn.value.data() + b * h * w * m;
      const T* gb = node.grad.data() + b * ho * wo * m;
      T* dxb = xn.requires_grad ? xn.grad.data() + b * h * w * m : nullptr;
      T* dk = kn.requires_grad ? kn.grad.data() : nullptr;
      // Channel c owns column c of both the input gradient and the kernel
      // gradient, so the channel loop parallelizes without conflicts.
      threads::parallel_for(0, m, [&](std::int64_t c) {
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const T g = gb[(oh * wo + ow) * m + c];
            for (std::int64_t t = 0; t < taps; ++t) {
              const std::int64_t ih = oh * s - pad + t / k;
              const std::int64_t iw = ow * s - pad + t % k;
              if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
              const std::int64_t at = (ih * w + iw) * m + c;
              if (dk) dk[t * m + c] += xb[at] * g;
              if (dxb) dxb[at] += kn.value[t * m + c] * g;
            }
          }
        }
      });
    }
    if (with_bias) accumulate_bias_grad(*node.parents[2], node.grad);
  };

  std::vector<Var<T>> parents = {x, khat};
  if (with_bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), std::move(backward));
}

template <class T>
Var<T> pointwise_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  check_batched(x, "pointwise_conv2d");
  const auto& wv = w.value();
  if (wv.rank() != 4 || wv.extent(0) != 1 || wv.extent(1) != 1) {
    throw ContractError("pointwise_conv2d: kernel must be [1,1,M,N]");
  }
  const std::int64_t m = wv.extent(2), n = wv.extent(3);
  const auto& xv = x.value();
  if (xv.extent(3) != m) {
    throw ShapeError("pointwise_conv2d: input channels " +
                     std::to_string(xv.extent(3)) + " != " + std::to_string(m));
  }
  const std::int64_t rows = xv.size() / m;
  Tensor<T> out({xv.extent(0), xv.extent(1), xv.extent(2), n});
  matmul_raw(xv.data(), wv.data(), out.data(), rows, m, n);
  const bool with_bias = bias.defined();
  if (with_bias) add_bias_channels_last(out, bias.value());

  auto backward = [m, n, with_bias](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    const std::int64_t rows = xn.value.size() / m;
    Tensor<T> g({rows, n});
    std::copy(node.grad.data(), node.grad.data() + node.grad.size(), g.data());
    Tensor<T> xflat = xn.value.reshaped({rows, m});
    if (wn.requires_grad) {
      wn.ensure_grad();
      Tensor<T> dw = matmul(transposed(xflat), g);  // [m, n]
      T* dst = wn.grad.data();
      for (std::int64_t i = 0; i < dw.size(); ++i) dst[i] += dw[i];
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      Tensor<T> wt = transposed(wn.value.reshaped({m, n}));
      Tensor<T> dx({rows, m});
      matmul_raw(g.data(), wt.data(), dx.data(), rows, n, m);
      T* dst = xn.grad.data();
      for (std::int64_t i = 0; i < dx.size(); ++i) dst[i] += dx[i];
    }
    if (with_bias) accumulate_bias_grad(*node.parents[2], node.grad);
  };

  std::vector<Var<T>> parents = {x, w};
  if (with_bias) parents.push_back(bias);
  return make_node<T>(std::move(out), std::move(parents), std::move(backward));
}

template <class T>
Var<T> maxpool(const Var<T>& x, std::int64_t window, std::int64_t stride) {
  check_batched(x, "maxpool");
  const auto& xv = x.value();
  const std::int64_t batch = xv.extent(0), h = xv.extent(1), w = xv.extent(2),
                     c = xv.extent(3);
  if (window < 1 || stride < 1) {
    throw DomainError("maxpool: window and stride must be >= 1");
  }
  if (window > h || window > w) {
    throw ShapeError("maxpool: window " + std::to_string(window) +
                     " larger than input " + shape_to_string(xv.shape()));
  }
  const std::int64_t ho = (h - window) / stride + 1;
  const std::int64_t wo = (w - window) / stride + 1;
  Tensor<T> out({batch, ho, wo, c});
  // Linear index into x of each selected maximum; ties take the first
  // window position so backward is deterministic.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out.size()));
  const T* src = xv.data();
  T* dst = out.data();
  std::int64_t* am = argmax->data();
  threads::parallel_for(0, batch * ho * wo, [&](std::int64_t p) {
    const std::int64_t b = p / (ho * wo);
    const std::int64_t oh = (p / wo) % ho, ow = p % wo;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T best(0);
      std::int64_t best_at = -1;
      for (std::int64_t dh = 0; dh < window; ++dh) {
        for (std::int64_t dw = 0; dw < window; ++dw) {
          const std::int64_t at =
              ((b * h + oh * stride + dh) * w + ow * stride + dw) * c + ch;
          if (best_at < 0 || src[at] > best) {
            best = src[at];
            best_at = at;
          }
        }
      }
      dst[p * c + ch] = best;
      am[p * c + ch] = best_at;
    }
  });

  return make_node<T>(std::move(out), {x}, [argmax](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const std::int64_t* am = argmax->data();
    for (std::int64_t i = 0; i < node.grad.size(); ++i)
      xn.grad[am[i]] += node.grad[i];
  });
}

template <class T>
Var<T> stride2_subsample(const Var<T>& x) {
  check_batched(x, "stride2_subsample");
  const auto& xv = x.value();
  const std::int64_t batch = xv.extent(0), h = xv.extent(1), w = xv.extent(2),
                     c = xv.extent(3);
  const std::int64_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out({batch, ho, wo, c});
  const T* src = xv.data();
  T* dst = out.data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t oh = 0; oh < ho; ++oh)
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        const T* px = src + ((b * h + 2 * oh) * w + 2 * ow) * c;
        T* q = dst + ((b * ho + oh) * wo + ow) * c;
        for (std::int64_t ch = 0; ch < c; ++ch) q[ch] = px[ch];
      }

  return make_node<T>(std::move(out), {x}, [h, w, c](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const std::int64_t batch = xn.value.extent(0);
    const std::int64_t ho = node.value.extent(1), wo = node.value.extent(2);
    const T* g = node.grad.data();
    T* dx = xn.grad.data();
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t oh = 0; oh < ho; ++oh)
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          const T* q = g + ((b * ho + oh) * wo + ow) * c;
          T* px = dx + ((b * h + 2 * oh) * w + 2 * ow) * c;
          for (std::int64_t ch = 0; ch < c; ++ch) px[ch] += q[ch];
        }
  });
}

template <class T>
Var<T> squash(const Var<T>& x) {
  Tensor<T> value = squash(x.value());
  return make_node<T>(std::move(value), {x}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const std::int64_t d = xn.value.extent(xn.value.rank() - 1);
    const std::int64_t count = xn.value.size() / d;
    const T* v = xn.value.data();
    const T* g = node.grad.data();
    T* dv = xn.grad.data();
    for (std::int64_t i = 0; i < count; ++i) {
      const T* vi = v + i * d;
      const T* gi = g + i * d;
      T* di = dv + i * d;
      T n2(0), dot(0);
      for (std::int64_t a = 0; a < d; ++a) {
        n2 += vi[a] * vi[a];
        dot += vi[a] * gi[a];
      }
      if (n2 <= T(0)) continue;  // Jacobian vanishes at the origin
      const T norm = std::sqrt(n2);
      const T denom = T(1) + n2;
      const T f = norm / denom;                        // scale factor
      const T fp = (T(1) - n2) / (denom * denom);      // d(scale)/d(norm)
      const T radial = dot * fp / norm;
      for (std::int64_t a = 0; a < d; ++a)
        di[a] += f * gi[a] + radial * vi[a];
    }
  });
}

template <class T>
Var<T> primary_capsules(const Var<T>& x, std::int64_t dim) {
  const auto& xv = x.value();
  if (xv.rank() != 4) {
    throw ShapeError("primary_capsules: expected [B,H,W,C], got " +
                     shape_to_string(xv.shape()));
  }
  const std::int64_t c = xv.extent(3);
  if (dim < 1 || c % dim != 0) {
    throw ShapeError("primary_capsules: " + std::to_string(c) +
                     " channels not divisible by capsule dim " +
                     std::to_string(dim));
  }
  const std::int64_t capsules = xv.size() / xv.extent(0) / dim;
  return squash(reshape(x, {xv.extent(0), capsules, dim}));
}

template <class T>
Var<T> predict_votes(const Var<T>& poses, const Var<T>& w) {
  Tensor<T> value = predict_votes(poses.value(), w.value());
  if (poses.value().rank() != 3) {
    throw ShapeError("predict_votes layer: poses must be [B,I,d_in]");
  }
  return make_node<T>(std::move(value), {poses, w}, [](VarNode<T>& node) {
    auto& pn = *node.parents[0];
    auto& wn = *node.parents[1];
    const std::int64_t batch = pn.value.extent(0);
    const std::int64_t in = pn.value.extent(1);
    const std::int64_t di = pn.value.extent(2);
    const std::int64_t jn = wn.value.extent(1);
    const std::int64_t dn = wn.value.extent(3);
    if (pn.requires_grad) pn.ensure_grad();
    if (wn.requires_grad) wn.ensure_grad();
    const T* g = node.grad.data();
    const T* wv = wn.value.data();
    const T* pv = pn.value.data();
    // Input capsule i owns row i of both gradients.
    threads::parallel_for(0, in, [&](std::int64_t i) {
      for (std::int64_t b = 0; b < batch; ++b) {
        const T* pose = pv + (b * in + i) * di;
        T* dpose = pn.requires_grad ? pn.grad.data() + (b * in + i) * di
                                    : nullptr;
        for (std::int64_t j = 0; j < jn; ++j) {
          const T* gij = g + ((b * in + i) * jn + j) * dn;
          const T* mat = wv + ((i * jn + j) * di) * dn;
          T* dmat = wn.requires_grad
                        ? wn.grad.data() + ((i * jn + j) * di) * dn
                        : nullptr;
          for (std::int64_t r = 0; r < di; ++r) {
            const T* row = mat + r * dn;
            T acc(0);
            for (std::int64_t a = 0; a < dn; ++a) {
              acc += row[a] * gij[a];
              if (dmat) dmat[r * dn + a] += pose[r] * gij[a];
            }
            if (dpose) dpose[r] += acc;
          }
        }
      }
    });
  });
}

namespace {

// s_j = sum_i c[i,j] u_hat[i,j], with the couplings held constant.
template <class T>
Var<T> routing_weighted_sum(const Var<T>& votes, const Tensor<T>& couplings) {
  const auto& uv = votes.value();
  const std::int64_t batch = uv.extent(0), in = uv.extent(1),
                     out = uv.extent(2), d = uv.extent(3);
  Tensor<T> s({batch, out, d});
  {
    const T* u = uv.data();
    const T* c = couplings.data();
    T* sp = s.data();
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < in; ++i)
        for (std::int64_t j = 0; j < out; ++j) {
          const T cij = c[(b * in + i) * out + j];
          const T* up = u + ((b * in + i) * out + j) * d;
          T* sj = sp + (b * out + j) * d;
          for (std::int64_t a = 0; a < d; ++a) sj[a] += cij * up[a];
        }
  }
  auto coup = std::make_shared<Tensor<T>>(couplings);
  return make_node<T>(std::move(s), {votes}, [coup](VarNode<T>& node) {
    auto& un = *node.parents[0];
    if (!un.requires_grad) return;
    un.ensure_grad();
    const std::int64_t batch = un.value.extent(0), in = un.value.extent(1),
                       out = un.value.extent(2), d = un.value.extent(3);
    const T* g = node.grad.data();
    const T* c = coup->data();
    T* du = un.grad.data();
    threads::parallel_for(0, in, [&](std::int64_t i) {
      for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t j = 0; j < out; ++j) {
          const T cij = c[(b * in + i) * out + j];
          const T* gj = g + (b * out + j) * d;
          T* dup = du + ((b * in + i) * out + j) * d;
          for (std::int64_t a = 0; a < d; ++a) dup[a] += cij * gj[a];
        }
    });
  });
}

}  // namespace

template <class T>
Var<T> dynamic_routing(const Var<T>& votes, int iterations) {
  const auto& uv = votes.value();
  const bool batched = uv.rank() == 4;
  Var<T> u4 = batched ? votes
                      : reshape(votes, {std::int64_t(1), uv.extent(0),
                                        uv.extent(1), uv.extent(2)});
  // Coupling coefficients come from gradient-free iterations; only the
  // final weighted sum and squash are recorded.
  auto history = routing_coupling_history(u4.value(), iterations);
  Var<T> v = squash(routing_weighted_sum(u4, history.back()));
  if (!batched) {
    const auto& vs = v.value();
    return reshape(v, {vs.extent(1), vs.extent(2)});
  }
  return v;
}

template <class T>
Var<T> margin_loss(const Var<T>& caps, const std::vector<int>& labels) {
  Tensor<T> value({1});
  value[0] = margin_loss(caps.value(), labels);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return make_node<T>(std::move(value), {caps}, [labels_copy](VarNode<T>& node) {
    auto& cn = *node.parents[0];
    if (!cn.requires_grad) return;
    cn.ensure_grad();
    const bool batched = cn.value.rank() == 3;
    const std::int64_t batch = batched ? cn.value.extent(0) : 1;
    const std::int64_t classes = cn.value.extent(batched ? 1 : 0);
    const std::int64_t d = cn.value.extent(batched ? 2 : 1);
    const T g0 = node.grad[0];
    const T scale = batched ? g0 / static_cast<T>(batch) : g0;
    const T m_plus = static_cast<T>(kMarginUpper);
    const T m_minus = static_cast<T>(kMarginLower);
    const T lambda = static_cast<T>(kMarginLambda);
    const T* vp = cn.value.data();
    T* dv = cn.grad.data();
    for (std::int64_t b = 0; b < batch; ++b) {
      const int label = (*labels_copy)[static_cast<std::size_t>(b)];
      for (std::int64_t j = 0; j < classes; ++j) {
        const T* v = vp + (b * classes + j) * d;
        T n2(0);
        for (std::int64_t a = 0; a < d; ++a) n2 += v[a] * v[a];
        if (n2 <= T(0)) continue;
        const T norm = std::sqrt(n2);
        T dnorm(0);
        if (j == label) {
          const T gap = std::max(T(0), m_plus - norm);
          dnorm = T(-2) * gap;
        } else {
          const T gap = std::max(T(0), norm - m_minus);
          dnorm = T(2) * lambda * gap;
        }
        if (dnorm == T(0)) continue;
        const T coef = scale * dnorm / norm;
        T* dj = dv + (b * classes + j) * d;
        for (std::int64_t a = 0; a < d; ++a) dj[a] += coef * v[a];
      }
    }
  });
}

#define DWCAPS_INSTANTIATE(T)                                                 \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,      \
                            const ConvSpec&);                                 \
  template Var<T> depthwise_conv2d<T>(const Var<T>&, const Var<T>&,           \
                                      const Var<T>&, const ConvSpec&);        \
  template Var<T> pointwise_conv2d<T>(const Var<T>&, const Var<T>&,           \
                                      const Var<T>&);                         \
  template Var<T> maxpool<T>(const Var<T>&, std::int64_t, std::int64_t);      \
  template Var<T> stride2_subsample<T>(const Var<T>&);                        \
  template Var<T> squash<T>(const Var<T>&);                                   \
  template Var<T> primary_capsules<T>(const Var<T>&, std::int64_t);           \
  template Var<T> predict_votes<T>(const Var<T>&, const Var<T>&);             \
  template Var<T> dynamic_routing<T>(const Var<T>&, int);                     \
  template Var<T> margin_loss<T>(const Var<T>&, const std::vector<int>&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
