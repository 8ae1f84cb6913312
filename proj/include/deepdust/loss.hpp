#pragma once

#include <array>
#include <cmath>

#include "deepdust/error.hpp"

namespace deepdust {

// Per-sample squared L2 error over the two outputs; no halving, no averaging
// over elements.
template <typename Scalar>
Scalar mse_loss(const std::array<Scalar, 2>& y_hat, const std::array<Scalar, 2>& y) {
  Scalar sum = 0;
  for (std::size_t j = 0; j < 2; ++j) {
    if (!std::isfinite(y_hat[j]) || !std::isfinite(y[j])) throw argument_error("mse_loss: non-finite input");
    const Scalar d = y_hat[j] - y[j];
    sum += d * d;
  }
  return sum;
}

template <typename Scalar>
std::array<Scalar, 2> mse_loss_grad(const std::array<Scalar, 2>& y_hat, const std::array<Scalar, 2>& y) {
  return {2 * (y_hat[0] - y[0]), 2 * (y_hat[1] - y[1])};
}

}  // namespace deepdust
