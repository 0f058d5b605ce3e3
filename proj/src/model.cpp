#include "dwcaps/model.hpp"

#include <cmath>

#include "dwcaps/rng.hpp"

namespace dwcaps {

std::string variant_grammar() {
  return "<32|64>-<v1|v2>-<1|2>-<1|2>-k<9|7|5|3> "
         "(input size, conv type, conv count, pooling flag, kernel size; "
         "pooling flag 2 requires 2 convs)";
}

void ArchitectureVariant::validate() const {
  const bool ok = (input_size == 32 || input_size == 64) &&
                  (conv_version == 1 || conv_version == 2) &&
                  (num_convs == 1 || num_convs == 2) &&
                  (pool_flag == 1 || pool_flag == 2) &&
                  (kernel_size == 9 || kernel_size == 7 || kernel_size == 5 ||
                   kernel_size == 3);
  if (!ok) {
    throw DomainError("invalid variant \"" + name() + "\"; expected " +
                      variant_grammar());
  }
  if (pool_flag == 2 && num_convs != 2) {
    throw DomainError("variant \"" + name() +
                      "\": pooling requires two convs; expected " +
                      variant_grammar());
  }
}

std::string ArchitectureVariant::name() const {
  return std::to_string(input_size) + "-v" + std::to_string(conv_version) +
         "-" + std::to_string(num_convs) + "-" + std::to_string(pool_flag) +
         "-k" + std::to_string(kernel_size);
}

ArchitectureVariant ArchitectureVariant::parse(const std::string& name) {
  auto fail = [&name]() -> ArchitectureVariant {
    throw DomainError("unknown variant \"" + name + "\"; expected " +
                      variant_grammar());
  };
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : name) {
    if (ch == '-') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 5) return fail();
  if (parts[1].size() != 2 || parts[1][0] != 'v') return fail();
  if (parts[4].size() < 2 || parts[4][0] != 'k') return fail();
  ArchitectureVariant v;
  try {
    v.input_size = std::stoll(parts[0]);
    v.conv_version = std::stoi(parts[1].substr(1));
    v.num_convs = std::stoi(parts[2]);
    v.pool_flag = std::stoi(parts[3]);
    v.kernel_size = std::stoll(parts[4].substr(1));
  } catch (const std::exception&) {
    return fail();
  }
  v.validate();
  return v;
}

ArchitectureVariant ArchitectureVariant::twin() const {
  ArchitectureVariant t = *this;
  t.conv_version = conv_version == 1 ? 2 : 1;
  return t;
}

CapsuleConfig reference_capsule_config() {
  CapsuleConfig caps;
  caps.primary_capsule_dim = 8;
  caps.class_capsule_dim = 8;
  caps.num_classes = 29;
  caps.routing_iterations = 3;
  return caps;
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConvStandard: return "conv";
    case LayerKind::kConvSeparable: return "separable-conv";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kCapsStride: return "caps-stride2";
    case LayerKind::kPrimaryCaps: return "primary-caps";
    case LayerKind::kClassCaps: return "class-caps";
  }
  return "?";
}

namespace {

template <class T>
Var<T> glorot_leaf(const Shape& shape, std::int64_t fan_in,
                   std::int64_t fan_out, std::uint64_t seed) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Var<T>::leaf(random_uniform<T>(shape, seed, -limit, limit), true);
}

template <class T>
Var<T> zero_leaf(const Shape& shape) {
  return Var<T>::leaf(Tensor<T>(shape), true);
}

}  // namespace

template <class T>
ModelGraph<T> ModelGraph<T>::build(const ArchitectureVariant& variant,
                                   const CapsuleConfig& caps,
                                   std::uint64_t seed) {
  variant.validate();
  caps.validate();
  ModelGraph<T> model;
  model.variant_ = variant;
  model.caps_ = caps;

  const std::int64_t k = variant.kernel_size;
  std::int64_t extent = variant.input_size;
  std::uint64_t stream = 0;
  auto next_seed = [&] { return mix_seed(seed, stream++); };

  auto check_extent = [&](std::int64_t need, const std::string& what) {
    if (need > extent) {
      throw ShapeError("variant " + variant.name() + ": " + what + " of size " +
                       std::to_string(need) + " exceeds the surviving extent " +
                       std::to_string(extent));
    }
  };

  {
    ModelLayer<T> conv1;
    conv1.kind = LayerKind::kConvStandard;
    conv1.name = "conv1";
    conv1.spec = {k, 3, kConvFilters, 1, Padding::kSame, ConvMode::kStandard};
    check_extent(k, "conv1 kernel");
    extent = conv1.spec.out_extent(extent);
    conv1.out_extent = extent;
    conv1.kernel = glorot_leaf<T>({k, k, 3, kConvFilters}, k * k * 3,
                                  k * k * kConvFilters, next_seed());
    conv1.bias = zero_leaf<T>({kConvFilters});
    model.layers_.push_back(std::move(conv1));
  }

  if (variant.num_convs == 2) {
    ModelLayer<T> conv2;
    conv2.name = "conv2";
    check_extent(k, "conv2 kernel");
    if (variant.separable_second_conv()) {
      conv2.kind = LayerKind::kConvSeparable;
      conv2.spec = {k, kConvFilters, kConvFilters, 1, Padding::kSame,
                    ConvMode::kSeparable};
      extent = conv2.spec.out_extent(extent);
      conv2.kernel = glorot_leaf<T>({k, k, kConvFilters}, k * k, k * k,
                                    next_seed());
      conv2.bias = zero_leaf<T>({kConvFilters});
      conv2.pointwise = glorot_leaf<T>({1, 1, kConvFilters, kConvFilters},
                                       kConvFilters, kConvFilters, next_seed());
      conv2.pointwise_bias = zero_leaf<T>({kConvFilters});
    } else {
      conv2.kind = LayerKind::kConvStandard;
      conv2.spec = {k, kConvFilters, kConvFilters, 1, Padding::kSame,
                    ConvMode::kStandard};
      extent = conv2.spec.out_extent(extent);
      conv2.kernel = glorot_leaf<T>({k, k, kConvFilters, kConvFilters},
                                    k * k * kConvFilters, k * k * kConvFilters,
                                    next_seed());
      conv2.bias = zero_leaf<T>({kConvFilters});
    }
    conv2.out_extent = extent;
    model.layers_.push_back(std::move(conv2));
  }

  if (variant.pool_flag == 2) {
    ModelLayer<T> pool;
    pool.kind = LayerKind::kMaxPool;
    pool.name = "pool";
    check_extent(2, "pool window");
    extent = (extent - 2) / 2 + 1;
    pool.out_extent = extent;
    model.layers_.push_back(std::move(pool));
  }

  if (extent > kCapsuleExtentLimit) {
    ModelLayer<T> sub;
    sub.kind = LayerKind::kCapsStride;
    sub.name = "caps-stride2";
    extent = (extent + 1) / 2;
    sub.out_extent = extent;
    model.layers_.push_back(std::move(sub));
  }

  {
    if (kConvFilters % caps.primary_capsule_dim != 0) {
      throw ShapeError("primary capsule dim " +
                       std::to_string(caps.primary_capsule_dim) +
                       " does not divide " + std::to_string(kConvFilters) +
                       " channels");
    }
    ModelLayer<T> prim;
    prim.kind = LayerKind::kPrimaryCaps;
    prim.name = "primary-caps";
    prim.out_extent = extent;
    model.layers_.push_back(std::move(prim));
  }

  {
    const std::int64_t num_primary =
        extent * extent * kConvFilters / caps.primary_capsule_dim;
    ModelLayer<T> cls;
    cls.kind = LayerKind::kClassCaps;
    cls.name = "class-caps";
    cls.out_extent = extent;
    cls.transform = glorot_leaf<T>(
        {num_primary, caps.num_classes, caps.primary_capsule_dim,
         caps.class_capsule_dim},
        caps.primary_capsule_dim, caps.class_capsule_dim, next_seed());
    model.layers_.push_back(std::move(cls));
  }

  return model;
}

template <class T>
Var<T> ModelGraph<T>::forward(const Var<T>& images) const {
  const auto& shape = images.value().shape();
  if (shape.size() != 4 || shape[1] != variant_.input_size ||
      shape[2] != variant_.input_size || shape[3] != 3) {
    throw ShapeError("forward: variant " + variant_.name() + " expects [B," +
                     std::to_string(variant_.input_size) + "," +
                     std::to_string(variant_.input_size) + ",3], got " +
                     shape_to_string(images.value().shape()));
  }
  Var<T> x = images;
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::kConvStandard:
        x = relu(conv2d(x, layer.kernel, layer.bias, layer.spec));
        break;
      case LayerKind::kConvSeparable: {
        Var<T> mid = depthwise_conv2d(x, layer.kernel, layer.bias, layer.spec);
        x = relu(pointwise_conv2d(mid, layer.pointwise, layer.pointwise_bias));
        break;
      }
      case LayerKind::kMaxPool:
        x = maxpool(x, 2, 2);
        break;
      case LayerKind::kCapsStride:
        x = stride2_subsample(x);
        break;
      case LayerKind::kPrimaryCaps:
        x = primary_capsules(x, caps_.primary_capsule_dim);
        break;
      case LayerKind::kClassCaps:
        x = dynamic_routing(predict_votes(x, layer.transform),
                            caps_.routing_iterations);
        break;
    }
  }
  return x;
}

template <class T>
std::vector<std::pair<std::string, Var<T>>> ModelGraph<T>::parameters() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::kConvStandard:
        out.emplace_back(layer.name + ".kernel", layer.kernel);
        out.emplace_back(layer.name + ".bias", layer.bias);
        break;
      case LayerKind::kConvSeparable:
        out.emplace_back(layer.name + ".dw_kernel", layer.kernel);
        out.emplace_back(layer.name + ".dw_bias", layer.bias);
        out.emplace_back(layer.name + ".pw_kernel", layer.pointwise);
        out.emplace_back(layer.name + ".pw_bias", layer.pointwise_bias);
        break;
      case LayerKind::kClassCaps:
        out.emplace_back(layer.name + ".transform", layer.transform);
        break;
      default:
        break;
    }
  }
  return out;
}

template <class T>
std::int64_t ModelGraph<T>::total_parameters() const {
  std::int64_t total = 0;
  for (const auto& [name, var] : parameters()) total += var.value().size();
  return total;
}

template <class T>
CostReport ModelGraph<T>::cost_report(bool with_bias) const {
  CostReport report;
  for (const auto& layer : layers_) {
    CostRow row;
    row.layer = layer.name;
    row.kind = to_string(layer.kind);
    switch (layer.kind) {
      case LayerKind::kConvStandard:
        row.params = layer.kernel.value().size() +
                     (with_bias ? layer.bias.value().size() : 0);
        row.macs = mac_standard(layer.spec.kernel_size, layer.spec.in_channels,
                                layer.spec.out_channels, layer.out_extent);
        break;
      case LayerKind::kConvSeparable:
        row.params = layer.kernel.value().size() +
                     layer.pointwise.value().size() +
                     (with_bias ? layer.bias.value().size() +
                                      layer.pointwise_bias.value().size()
                                : 0);
        row.macs = mac_separable(layer.spec.kernel_size, layer.spec.in_channels,
                                 layer.spec.out_channels, layer.out_extent);
        break;
      case LayerKind::kClassCaps: {
        const auto& w = layer.transform.value();
        row.params = w.size();
        // The vote transform dominates; routing's weighted sums are not
        // counted.
        row.macs = w.size() > 0 ? w.extent(0) * w.extent(1) * w.extent(2) *
                                      w.extent(3)
                                : 0;
        break;
      }
      default:
        break;
    }
    report.rows.push_back(std::move(row));
  }
  // Substitution economics of the second conv, biases excluded: identical
  // for a model and its twin.
  for (const auto& layer : layers_) {
    if (layer.name != "conv2") continue;
    const std::int64_t k = layer.spec.kernel_size;
    const std::int64_t m = layer.spec.in_channels;
    const std::int64_t n = layer.spec.out_channels;
    report.has_substitution = true;
    report.separable_over_standard_macs =
        static_cast<double>(mac_separable(k, m, n, layer.out_extent)) /
        static_cast<double>(mac_standard(k, m, n, layer.out_extent));
    ConvSpec sep = layer.spec;
    sep.mode = ConvMode::kSeparable;
    ConvSpec std_spec = layer.spec;
    std_spec.mode = ConvMode::kStandard;
    report.separable_over_standard_params =
        static_cast<double>(param_count(sep, false)) /
        static_cast<double>(param_count(std_spec, false));
  }
  return report;
}

template <class T>
CostReport count_parameters(const ModelGraph<T>& model, bool with_bias) {
  return model.cost_report(with_bias);
}

TwinComparison compare_dw_vs_sc(const ArchitectureVariant& a,
                                const ArchitectureVariant& b,
                                const CapsuleConfig& caps, bool with_bias) {
  if (a.twin().name() != b.name()) {
    throw ContractError("compare_dw_vs_sc: " + a.name() + " and " + b.name() +
                        " are not v1/v2 twins of the same geometry");
  }
  const ArchitectureVariant& v1 = a.separable_second_conv() ? a : b;
  const ArchitectureVariant& v2 = a.separable_second_conv() ? b : a;
  auto m1 = ModelGraph<float>::build(v1, caps, 0);
  auto m2 = ModelGraph<float>::build(v2, caps, 0);
  TwinComparison cmp;
  cmp.v1_name = v1.name();
  cmp.v2_name = v2.name();
  cmp.params_v1 = m1.cost_report(with_bias).total_params();
  cmp.params_v2 = m2.cost_report(with_bias).total_params();
  cmp.reduction_percent = 100.0 * (1.0 - static_cast<double>(cmp.params_v1) /
                                             static_cast<double>(cmp.params_v2));
  return cmp;
}

std::vector<SweepEntry> kernel_sweep(const ArchitectureVariant& base,
                                     const CapsuleConfig& caps) {
  std::vector<SweepEntry> entries;
  for (std::int64_t k : {9, 7, 5, 3}) {
    SweepEntry entry;
    entry.variant = base;
    entry.variant.kernel_size = k;
    try {
      auto model = ModelGraph<float>::build(entry.variant, caps, 0);
      entry.report = model.cost_report(true);
      entry.total_params = entry.report.total_params();
      entry.ok = true;
    } catch (const Error& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ArchitectureVariant> all_buildable_variants() {
  std::vector<ArchitectureVariant> out;
  for (std::int64_t input : {32, 64}) {
    for (int version : {1, 2}) {
      for (auto [convs, pool] : {std::pair{1, 1}, {2, 1}, {2, 2}}) {
        for (std::int64_t k : {9, 7, 5, 3}) {
          ArchitectureVariant v;
          v.input_size = input;
          v.conv_version = version;
          v.num_convs = convs;
          v.pool_flag = pool;
          v.kernel_size = k;
          out.push_back(v);
        }
      }
    }
  }
  return out;
}

template class ModelGraph<float>;
template class ModelGraph<double>;
template CostReport count_parameters<float>(const ModelGraph<float>&, bool);
template CostReport count_parameters<double>(const ModelGraph<double>&, bool);

}  // namespace dwcaps
