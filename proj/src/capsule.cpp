#include "dwcaps/capsule.hpp"

#include <cmath>
#include <string>

#include "dwcaps/parallel.hpp"
#include "dwcaps/tensor_ops.hpp"

namespace dwcaps {

template <class T>
Tensor<T> squash(const Tensor<T>& vectors) {
  if (vectors.rank() < 1) throw ShapeError("squash: empty tensor");
  const std::int64_t d = vectors.extent(vectors.rank() - 1);
  const std::int64_t count = vectors.size() / d;
  Tensor<T> out(vectors.shape());
  const T* src = vectors.data();
  T* dst = out.data();
  for (std::int64_t i = 0; i < count; ++i) {
    const T* v = src + i * d;
    T n2(0);
    for (std::int64_t a = 0; a < d; ++a) n2 += v[a] * v[a];
    T factor(0);
    if (n2 > T(0)) factor = n2 / ((T(1) + n2) * std::sqrt(n2));
    for (std::int64_t a = 0; a < d; ++a) dst[i * d + a] = v[a] * factor;
  }
  return out;
}

template <class T>
Tensor<T> primary_capsules(const Tensor<T>& feature_map, std::int64_t dim) {
  if (dim < 1) throw DomainError("primary_capsules: dim must be >= 1");
  if (feature_map.rank() != 3 && feature_map.rank() != 4) {
    throw ShapeError("primary_capsules: expected [H,W,C] or [B,H,W,C], got " +
                     shape_to_string(feature_map.shape()));
  }
  const bool batched = feature_map.rank() == 4;
  const std::int64_t c = feature_map.extent(batched ? 3 : 2);
  if (c % dim != 0) {
    throw ShapeError("primary_capsules: " + std::to_string(c) +
                     " channels not divisible by capsule dim " +
                     std::to_string(dim));
  }
  const std::int64_t per_item = feature_map.size() /
                                (batched ? feature_map.extent(0) : 1);
  const std::int64_t capsules = per_item / dim;
  Shape shape = batched ? Shape{feature_map.extent(0), capsules, dim}
                        : Shape{capsules, dim};
  return squash(feature_map.reshaped(std::move(shape)));
}

namespace {

template <class T>
struct VoteDims {
  std::int64_t batch, in, out, d_in, d_out;
  bool batched;
};

template <class T>
VoteDims<T> vote_dims(const Tensor<T>& poses, const Tensor<T>& w) {
  if (w.rank() != 4) {
    throw ShapeError("predict_votes: transform must be [I,J,d_in,d_out]");
  }
  if (poses.rank() != 2 && poses.rank() != 3) {
    throw ShapeError("predict_votes: poses must be [I,d_in] or [B,I,d_in]");
  }
  const bool batched = poses.rank() == 3;
  VoteDims<T> dims{};
  dims.batched = batched;
  dims.batch = batched ? poses.extent(0) : 1;
  dims.in = poses.extent(batched ? 1 : 0);
  dims.d_in = poses.extent(batched ? 2 : 1);
  dims.out = w.extent(1);
  dims.d_out = w.extent(3);
  if (w.extent(0) != dims.in || w.extent(2) != dims.d_in) {
    throw ShapeError("predict_votes: poses " + shape_to_string(poses.shape()) +
                     " incompatible with transform " +
                     shape_to_string(w.shape()));
  }
  return dims;
}

}  // namespace

template <class T>
Tensor<T> predict_votes(const Tensor<T>& poses, const Tensor<T>& w) {
  const auto dims = vote_dims(poses, w);
  Shape shape = dims.batched
                    ? Shape{dims.batch, dims.in, dims.out, dims.d_out}
                    : Shape{dims.in, dims.out, dims.d_out};
  Tensor<T> votes(std::move(shape));
  const T* p = poses.data();
  const T* wm = w.data();
  T* out = votes.data();
  const std::int64_t in = dims.in, jn = dims.out;
  const std::int64_t di = dims.d_in, dn = dims.d_out;
  threads::parallel_for(0, in, [&](std::int64_t i) {
    for (std::int64_t b = 0; b < dims.batch; ++b) {
      const T* pose = p + (b * in + i) * di;
      for (std::int64_t j = 0; j < jn; ++j) {
        const T* mat = wm + ((i * jn + j) * di) * dn;
        T* o = out + ((b * in + i) * jn + j) * dn;
        for (std::int64_t a = 0; a < dn; ++a) o[a] = T(0);
        for (std::int64_t r = 0; r < di; ++r) {
          const T pr = pose[r];
          const T* row = mat + r * dn;
          for (std::int64_t a = 0; a < dn; ++a) o[a] += pr * row[a];
        }
      }
    }
  });
  return votes;
}

namespace {

// One routing pass: s_j = sum_i c[i,j] u_hat[i,j], v = squash(s).
template <class T>
Tensor<T> routed_output(const Tensor<T>& votes, const Tensor<T>& couplings,
                        std::int64_t batch, std::int64_t in, std::int64_t out,
                        std::int64_t d) {
  Tensor<T> s({batch, out, d});
  const T* uv = votes.data();
  const T* c = couplings.data();
  T* sp = s.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < in; ++i) {
      for (std::int64_t j = 0; j < out; ++j) {
        const T cij = c[(b * in + i) * out + j];
        const T* u = uv + ((b * in + i) * out + j) * d;
        T* sj = sp + (b * out + j) * d;
        for (std::int64_t a = 0; a < d; ++a) sj[a] += cij * u[a];
      }
    }
  }
  return squash(s);
}

}  // namespace

template <class T>
std::vector<Tensor<T>> routing_coupling_history(const Tensor<T>& votes,
                                                int iterations) {
  if (iterations < 1) {
    throw ContractError("dynamic_routing: iterations must be >= 1");
  }
  if (votes.rank() != 3 && votes.rank() != 4) {
    throw ShapeError("dynamic_routing: votes must be [I,J,d] or [B,I,J,d]");
  }
  const bool batched = votes.rank() == 4;
  const std::int64_t batch = batched ? votes.extent(0) : 1;
  const std::int64_t in = votes.extent(batched ? 1 : 0);
  const std::int64_t out = votes.extent(batched ? 2 : 1);
  const std::int64_t d = votes.extent(batched ? 3 : 2);
  const Tensor<T> u = batched ? votes : votes.reshaped({1, in, out, d});

  Tensor<T> logits({batch, in, out});
  std::vector<Tensor<T>> history;
  history.reserve(static_cast<std::size_t>(iterations));
  for (int t = 0; t < iterations; ++t) {
    Tensor<T> c = softmax(logits, 2);
    history.push_back(c);
    if (t + 1 == iterations) break;
    Tensor<T> v = routed_output(u, c, batch, in, out, d);
    // Agreement update: b[i,j] += u_hat[i,j] . v_j.
    const T* uv = u.data();
    const T* vp = v.data();
    T* bp = logits.data();
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < in; ++i)
        for (std::int64_t j = 0; j < out; ++j) {
          const T* uu = uv + ((b * in + i) * out + j) * d;
          const T* vv = vp + (b * out + j) * d;
          T dot(0);
          for (std::int64_t a = 0; a < d; ++a) dot += uu[a] * vv[a];
          bp[(b * in + i) * out + j] += dot;
        }
  }
  return history;
}

template <class T>
Tensor<T> dynamic_routing(const Tensor<T>& votes, int iterations) {
  auto history = routing_coupling_history(votes, iterations);
  const bool batched = votes.rank() == 4;
  const std::int64_t batch = batched ? votes.extent(0) : 1;
  const std::int64_t in = votes.extent(batched ? 1 : 0);
  const std::int64_t out = votes.extent(batched ? 2 : 1);
  const std::int64_t d = votes.extent(batched ? 3 : 2);
  const Tensor<T> u = batched ? votes : votes.reshaped({1, in, out, d});
  Tensor<T> v = routed_output(u, history.back(), batch, in, out, d);
  return batched ? v : v.reshaped({out, d});
}

template <class T>
T margin_loss(const Tensor<T>& caps, const std::vector<int>& labels) {
  if (caps.rank() != 2 && caps.rank() != 3) {
    throw ShapeError("margin_loss: capsules must be [J,d] or [B,J,d]");
  }
  const bool batched = caps.rank() == 3;
  const std::int64_t batch = batched ? caps.extent(0) : 1;
  const std::int64_t classes = caps.extent(batched ? 1 : 0);
  const std::int64_t d = caps.extent(batched ? 2 : 1);
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw ContractError("margin_loss: expected one label per item");
  }
  const T m_plus = static_cast<T>(kMarginUpper);
  const T m_minus = static_cast<T>(kMarginLower);
  const T lambda = static_cast<T>(kMarginLambda);
  const T* vp = caps.data();
  T total(0);
  for (std::int64_t b = 0; b < batch; ++b) {
    const int label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= classes) {
      throw DomainError("margin_loss: label " + std::to_string(label) +
                        " out of range for " + std::to_string(classes) +
                        " classes");
    }
    for (std::int64_t j = 0; j < classes; ++j) {
      const T* v = vp + (b * classes + j) * d;
      T n2(0);
      for (std::int64_t a = 0; a < d; ++a) n2 += v[a] * v[a];
      const T norm = std::sqrt(n2);
      if (j == label) {
        const T gap = std::max(T(0), m_plus - norm);
        total += gap * gap;
      } else {
        const T gap = std::max(T(0), norm - m_minus);
        total += lambda * gap * gap;
      }
    }
  }
  return batched ? total / static_cast<T>(batch) : total;
}

template <class T>
int class_prediction(const Tensor<T>& caps) {
  if (caps.rank() != 2) {
    throw ShapeError("class_prediction: capsules must be [J,d]");
  }
  const std::int64_t classes = caps.extent(0), d = caps.extent(1);
  int best = 0;
  T best_n2(-1);
  for (std::int64_t j = 0; j < classes; ++j) {
    T n2(0);
    for (std::int64_t a = 0; a < d; ++a) {
      const T v = caps(j, a);
      n2 += v * v;
    }
    if (n2 > best_n2) {
      best_n2 = n2;
      best = static_cast<int>(j);
    }
  }
  return best;
}

template <class T>
std::vector<int> class_predictions(const Tensor<T>& caps) {
  if (caps.rank() != 3) {
    throw ShapeError("class_predictions: capsules must be [B,J,d]");
  }
  const std::int64_t batch = caps.extent(0);
  std::vector<int> out(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    Tensor<T> item({caps.extent(1), caps.extent(2)});
    const T* src = caps.data() + b * item.size();
    std::copy(src, src + item.size(), item.data());
    out[static_cast<std::size_t>(b)] = class_prediction(item);
  }
  return out;
}

#define DWCAPS_INSTANTIATE(T)                                               \
  template Tensor<T> squash<T>(const Tensor<T>&);                           \
  template Tensor<T> primary_capsules<T>(const Tensor<T>&, std::int64_t);   \
  template Tensor<T> predict_votes<T>(const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> dynamic_routing<T>(const Tensor<T>&, int);             \
  template std::vector<Tensor<T>> routing_coupling_history<T>(              \
      const Tensor<T>&, int);                                               \
  template T margin_loss<T>(const Tensor<T>&, const std::vector<int>&);     \
  template int class_prediction<T>(const Tensor<T>&);                       \
  template std::vector<int> class_predictions<T>(const Tensor<T>&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
