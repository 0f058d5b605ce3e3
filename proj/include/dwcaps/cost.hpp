#ifndef DWCAPS_COST_HPP_
#define DWCAPS_COST_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dwcaps/conv.hpp"

namespace dwcaps {

// Closed-form multiply-accumulate counts for a square feature map of
// output extent df. All counts are exact integers.

// Standard convolution: dk*dk*m*n*df*df.
std::int64_t mac_standard(std::int64_t dk, std::int64_t m, std::int64_t n,
                          std::int64_t df);

// Depthwise convolution: dk*dk*m*df*df.
std::int64_t mac_depthwise(std::int64_t dk, std::int64_t m, std::int64_t df);

// Depthwise + pointwise: dk*dk*m*df*df + m*n*df*df.
std::int64_t mac_separable(std::int64_t dk, std::int64_t m, std::int64_t n,
                           std::int64_t df);

// Separable-to-standard cost ratio, 1/n + 1/dk^2. Below 1 the separable
// form is cheaper; at dk=3, n=512 the standard cost is 8-9x higher.
double cost_ratio(std::int64_t dk, std::int64_t n);

// Weight-element count for one convolution layer.
// standard: k^2*M*N (+N bias); pointwise: M*N (+N); depthwise: k^2*M (+M);
// separable: k^2*M + M*N (+M and +N biases).
std::int64_t param_count(const ConvSpec& spec, bool with_bias);

struct CostRow {
  std::string layer;
  std::string kind;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

// Per-layer parameter/MAC breakdown of one model. The ratio fields are
// filled when the model contains a conv layer substituted between the
// separable and standard forms; they compare that layer against its twin
// with biases excluded.
struct CostReport {
  std::vector<CostRow> rows;
  double separable_over_standard_macs = 0.0;
  double separable_over_standard_params = 0.0;
  bool has_substitution = false;

  std::int64_t total_params() const;
  std::int64_t total_macs() const;

  // "layer,kind,params,macs" rows plus a trailing total row.
  std::string to_csv() const;
  std::string to_table() const;
};

}  // namespace dwcaps

#endif  // DWCAPS_COST_HPP_
