#ifndef DWCAPS_GRADCHECK_HPP_
#define DWCAPS_GRADCHECK_HPP_

#include <functional>

#include "dwcaps/autograd.hpp"

namespace dwcaps {

// Compares the recorded gradient of a scalar-valued function against
// central finite differences, coordinate by coordinate. Returns
//   max_i |analytic_i - central_i| / max(1, |analytic_i|).
// Double precision only; fn must be deterministic.
double finite_difference_check(
    const std::function<Var<double>(const Var<double>&)>& fn,
    const Tensor<double>& x, double h);

}  // namespace dwcaps

#endif  // DWCAPS_GRADCHECK_HPP_
