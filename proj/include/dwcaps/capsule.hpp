#ifndef DWCAPS_CAPSULE_HPP_
#define DWCAPS_CAPSULE_HPP_

#include <cstdint>
#include <vector>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// Margin-loss constants: target norm for the present class, ceiling for
// absent classes, and the down-weight on absent-class terms.
inline constexpr double kMarginUpper = 0.9;
inline constexpr double kMarginLower = 0.1;
inline constexpr double kMarginLambda = 0.5;

struct CapsuleConfig {
  std::int64_t primary_capsule_dim = 8;
  std::int64_t class_capsule_dim = 16;
  std::int64_t num_classes = 29;
  int routing_iterations = 3;

  void validate() const {
    if (primary_capsule_dim < 1 || class_capsule_dim < 1 || num_classes < 1 ||
        routing_iterations < 1) {
      throw DomainError("CapsuleConfig: all fields must be >= 1");
    }
  }
};

// s = (|v|^2 / (1 + |v|^2)) * v/|v| applied to each vector along the last
// axis. Preserves direction; the output norm is |v|^2/(1+|v|^2) < 1. The
// zero vector maps to itself.
template <class T>
Tensor<T> squash(const Tensor<T>& vectors);

// Reshapes an [H,W,C] feature map (or a [B,H,W,C] batch) into capsules of
// length `dim` and squashes each. C must be divisible by dim.
template <class T>
Tensor<T> primary_capsules(const Tensor<T>& feature_map, std::int64_t dim);

// Prediction vectors u_hat[i,j] = W[i,j] . pose[i].
// poses: [I,d_in] or [B,I,d_in]; w: [I,J,d_in,d_out].
template <class T>
Tensor<T> predict_votes(const Tensor<T>& poses, const Tensor<T>& w);

// Routing by agreement over votes [B,I,J,d] (or [I,J,d] for one item):
//   b <- 0; repeat r times: c = softmax_J(b); s_j = sum_i c[i,j] u_hat[i,j];
//   v_j = squash(s_j); b[i,j] += u_hat[i,j] . v_j
// Returns v from the final iteration.
template <class T>
Tensor<T> dynamic_routing(const Tensor<T>& votes, int iterations);

// The coupling coefficients c of every iteration, for property checks and
// for the taped routing layer (which treats the final couplings as
// constants). Entry t has shape [B,I,J] and rows sum to 1 over J.
template <class T>
std::vector<Tensor<T>> routing_coupling_history(const Tensor<T>& votes,
                                                int iterations);

// Sum of per-class hinge-squared terms for one item ([J,d] + one label),
// or the mean of the per-item sums over a batch ([B,J,d] + one label each).
template <class T>
T margin_loss(const Tensor<T>& caps, const std::vector<int>& labels);

// Index of the longest capsule; ties break to the lowest index.
template <class T>
int class_prediction(const Tensor<T>& caps);  // [J,d]

template <class T>
std::vector<int> class_predictions(const Tensor<T>& caps);  // [B,J,d]

}  // namespace dwcaps

#endif  // DWCAPS_CAPSULE_HPP_
