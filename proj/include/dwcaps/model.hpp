#ifndef DWCAPS_MODEL_HPP_
#define DWCAPS_MODEL_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dwcaps/capsule.hpp"
#include "dwcaps/cost.hpp"
#include "dwcaps/layers.hpp"

namespace dwcaps {

// One named model configuration, e.g. "32-v1-2-2-k3": 32x32 input, v1
// (separable second conv; v2 keeps it standard), two convs, max pooling
// after the second, 3x3 kernels.
struct ArchitectureVariant {
  std::int64_t input_size = 32;  // 32 or 64 pixels, square, 3 channels
  int conv_version = 1;          // 1 = separable second conv, 2 = standard
  int num_convs = 1;             // 1 or 2
  int pool_flag = 1;             // 1 = no pooling, 2 = pooled after conv2
  std::int64_t kernel_size = 9;  // 9, 7, 5 or 3

  static ArchitectureVariant parse(const std::string& name);
  std::string name() const;
  ArchitectureVariant twin() const;  // v1 <-> v2, same geometry
  bool separable_second_conv() const { return conv_version == 1; }
  void validate() const;
};

// The naming grammar, for usage errors.
std::string variant_grammar();

// The documented reference configuration all parameter-comparison numbers
// are quoted under: dim-8 primary capsules, 29 dim-8 class capsules,
// 3 routing iterations. Conv layers use 512 filters, stride 1, same
// padding; a feature map wider than 16 is subsampled once by stride 2
// before capsule formation.
CapsuleConfig reference_capsule_config();

inline constexpr std::int64_t kConvFilters = 512;
inline constexpr std::int64_t kCapsuleExtentLimit = 16;

enum class LayerKind {
  kConvStandard,
  kConvSeparable,
  kMaxPool,
  kCapsStride,
  kPrimaryCaps,
  kClassCaps,
};

const char* to_string(LayerKind k);

template <class T>
struct ModelLayer {
  LayerKind kind;
  std::string name;
  ConvSpec spec;               // conv layers only
  std::int64_t out_extent = 0; // spatial extent after this layer
  // Trainable tensors; undefined Vars where not applicable.
  Var<T> kernel;        // standard kernel or depthwise K-hat
  Var<T> bias;
  Var<T> pointwise;     // separable: the 1x1 stage
  Var<T> pointwise_bias;
  Var<T> transform;     // class capsules: [I, J, d_in, d_out]
};

template <class T>
class ModelGraph {
 public:
  static ModelGraph build(const ArchitectureVariant& variant,
                          const CapsuleConfig& caps, std::uint64_t seed);

  const ArchitectureVariant& variant() const { return variant_; }
  const CapsuleConfig& capsules() const { return caps_; }
  const std::vector<ModelLayer<T>>& layers() const { return layers_; }

  // [B, input, input, 3] -> class capsules [B, num_classes, class_dim].
  Var<T> forward(const Var<T>& images) const;

  // Named trainable tensors in a fixed order (the checkpoint order).
  std::vector<std::pair<std::string, Var<T>>> parameters() const;

  // Sum of element counts over every weight tensor.
  std::int64_t total_parameters() const;

  CostReport cost_report(bool with_bias = true) const;

 private:
  ArchitectureVariant variant_;
  CapsuleConfig caps_;
  std::vector<ModelLayer<T>> layers_;
};

// Per-layer parameter and MAC breakdown of a built model.
template <class T>
CostReport count_parameters(const ModelGraph<T>& model, bool with_bias = true);

struct TwinComparison {
  std::string v1_name, v2_name;
  std::int64_t params_v1 = 0, params_v2 = 0;
  double reduction_percent = 0.0;  // 100 * (1 - v1/v2)
};

// Total-parameter reduction of the separable variant against its standard
// twin. The two variants must be v1/v2 twins of the same geometry.
TwinComparison compare_dw_vs_sc(const ArchitectureVariant& a,
                                const ArchitectureVariant& b,
                                const CapsuleConfig& caps,
                                bool with_bias = true);

struct SweepEntry {
  ArchitectureVariant variant;
  bool ok = false;
  std::string error;
  std::int64_t total_params = 0;
  CostReport report;
};

// Builds the base geometry at kernel sizes 9, 7, 5, 3. A geometry failure
// at one size is recorded in its entry and the sweep continues.
std::vector<SweepEntry> kernel_sweep(const ArchitectureVariant& base,
                                     const CapsuleConfig& caps);

// Every legal (input, version, convs, pooling, kernel) combination.
std::vector<ArchitectureVariant> all_buildable_variants();

}  // namespace dwcaps

#endif  // DWCAPS_MODEL_HPP_
