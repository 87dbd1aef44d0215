// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// SGD with classical momentum: v <- mu*v - lr*g; p <- p + v.
template <typename T>
struct OptimizerState {
  T learning_rate = T(1e-3);
  T momentum = T(0.9);
  std::vector<Tensor<T>> velocity;  // one per parameter, same shape

  OptimizerState() = default;
  OptimizerState(T lr, T mu) : learning_rate(lr), momentum(mu) {}
};

/// Learning rate for a 0-based epoch under a single step decay.
inline float stepped_rate(float base, int epoch, int decay_epoch, float factor) {
  return (decay_epoch > 0 && epoch >= decay_epoch) ? base * factor : base;
}

/// Applies one update to every parameter. Velocities are created on the first
/// call; thereafter their shapes must keep matching the parameters.
template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
              OptimizerState<T>& state);

}  // namespace cpcnn
