#include "dwcaps/gradcheck.hpp"

#include <cmath>

namespace dwcaps {

double finite_difference_check(
    const std::function<Var<double>(const Var<double>&)>& fn,
    const Tensor<double>& x, double h) {
  Var<double> leaf = Var<double>::leaf(x, true);
  Var<double> loss = fn(leaf);
  if (loss.value().size() != 1) {
    throw ContractError("finite_difference_check: fn must be scalar-valued");
  }
  backward(loss);
  const Tensor<double> analytic =
      leaf.grad().empty() ? Tensor<double>(x.shape()) : leaf.grad();

  auto eval = [&fn](Tensor<double> probe) {
    return fn(Var<double>::constant(std::move(probe))).value()[0];
  };

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    Tensor<double> xp = x;
    Tensor<double> xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double central = (eval(std::move(xp)) - eval(std::move(xm))) / (2 * h);
    const double err = std::abs(analytic[i] - central) /
                       std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dwcaps
