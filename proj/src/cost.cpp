#include "dwcaps/cost.hpp"

#include <cstdio>

namespace dwcaps {

namespace {

void check_positive(std::initializer_list<std::int64_t> args,
                    const char* what) {
  for (std::int64_t a : args) {
    if (a < 1) throw DomainError(std::string(what) + ": arguments must be >= 1");
  }
}

}  // namespace

std::int64_t mac_standard(std::int64_t dk, std::int64_t m, std::int64_t n,
                          std::int64_t df) {
  check_positive({dk, m, n, df}, "mac_standard");
  return dk * dk * m * n * df * df;
}

std::int64_t mac_depthwise(std::int64_t dk, std::int64_t m, std::int64_t df) {
  check_positive({dk, m, df}, "mac_depthwise");
  return dk * dk * m * df * df;
}

std::int64_t mac_separable(std::int64_t dk, std::int64_t m, std::int64_t n,
                           std::int64_t df) {
  check_positive({dk, m, n, df}, "mac_separable");
  return mac_depthwise(dk, m, df) + m * n * df * df;
}

double cost_ratio(std::int64_t dk, std::int64_t n) {
  check_positive({dk, n}, "cost_ratio");
  return 1.0 / static_cast<double>(n) +
         1.0 / static_cast<double>(dk * dk);
}

std::int64_t param_count(const ConvSpec& spec, bool with_bias) {
  spec.validate();
  const std::int64_t k = spec.kernel_size, m = spec.in_channels,
                     n = spec.out_channels;
  switch (spec.mode) {
    case ConvMode::kStandard:
      return k * k * m * n + (with_bias ? n : 0);
    case ConvMode::kPointwise:
      return m * n + (with_bias ? n : 0);
    case ConvMode::kDepthwise:
      return k * k * m + (with_bias ? m : 0);
    case ConvMode::kSeparable:
      return k * k * m + m * n + (with_bias ? m + n : 0);
  }
  throw ContractError("param_count: unknown mode");
}

std::int64_t CostReport::total_params() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.params;
  return t;
}

std::int64_t CostReport::total_macs() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.macs;
  return t;
}

std::string CostReport::to_csv() const {
  std::string out = "layer,kind,params,macs\n";
  for (const auto& r : rows) {
    out += r.layer + "," + r.kind + "," + std::to_string(r.params) + "," +
           std::to_string(r.macs) + "\n";
  }
  out += "total,," + std::to_string(total_params()) + "," +
         std::to_string(total_macs()) + "\n";
  return out;
}

std::string CostReport::to_table() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-16s %-12s %14s %16s\n", "layer", "kind",
                "params", "macs");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-16s %-12s %14lld %16lld\n",
                  r.layer.c_str(), r.kind.c_str(),
                  static_cast<long long>(r.params),
                  static_cast<long long>(r.macs));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-16s %-12s %14lld %16lld\n", "total", "",
                static_cast<long long>(total_params()),
                static_cast<long long>(total_macs()));
  out += buf;
  if (has_substitution) {
    std::snprintf(buf, sizeof(buf),
                  "substituted conv, separable/standard: macs %.6f  "
                  "params %.6f (biases excluded)\n",
                  separable_over_standard_macs, separable_over_standard_params);
    out += buf;
  }
  return out;
}

}  // namespace dwcaps
