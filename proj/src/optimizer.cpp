// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/optimizer.hpp"

namespace cpcnn {

template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
              OptimizerState<T>& state) {
  if (params.size() != grads.size()) {
    fail(ErrorCode::kShapeMismatch, "sgd_step: " + std::to_string(params.size()) +
                                        " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  if (!(state.learning_rate > T(0)) || state.momentum < T(0) || state.momentum >= T(1)) {
    fail(ErrorCode::kInvalidArgument, "sgd_step: need lr > 0 and momentum in [0,1)");
  }
  if (state.velocity.empty()) {
    for (const Tensor<T>* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "sgd_step: optimizer state tracks a different parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->shape(), grads[i].shape(), "sgd_step");
    require_same_shape(params[i]->shape(), state.velocity[i].shape(), "sgd_step velocity");
  }
  const T lr = state.learning_rate;
  const T mu = state.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->ptr();
    T* v = state.velocity[i].ptr();
    const T* g = grads[i].ptr();
    const std::size_t n = params[i]->size();
    for (std::size_t j = 0; j < n; ++j) {
      v[j] = mu * v[j] - lr * g[j];
      p[j] += v[j];
    }
  }
}

template void sgd_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                       OptimizerState<float>&);
template void sgd_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                       OptimizerState<double>&);

}  // namespace cpcnn
