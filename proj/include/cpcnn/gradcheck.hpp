// SPDX-License-Identifier: Apache-2.0
// Finite-difference verification of the analytic gradients, run in double precision.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpcnn/tape.hpp"

namespace cpcnn {

using GradFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct FdOptions {
  double step = 1e-3;
  /// Denominator floor of the relative error.
  double floor = 1e-8;
  /// Elements probed per input tensor, chosen at random; 0 probes every element.
  std::size_t samples_per_input = 0;
  /// Extra checks of the derivative along random directions over all inputs at once.
  int directions = 0;
  std::uint64_t seed = 1;
};

struct FdResult {
  /// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over the probes,
  /// numeric being the central difference of the scalar `fn`.
  double max_rel_error = 0.0;
  int probes = 0;
  /// Probes whose stencil flipped a ReLU/PReLU/abs sign, a clamp side or a max-pool
  /// winner. The function is not differentiable across such a switch, so these are
  /// redrawn (sampled inputs) or skipped (exhaustive inputs).
  int rejected = 0;
};

FdResult finite_difference_check(const GradFn& fn, const std::vector<Tensor<double>>& inputs,
                                 const FdOptions& options = {});

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  int probes = 0;
  int rejected = 0;
  bool passed() const { return probes > 0 && max_rel_error < threshold; }
};

inline constexpr double kLayerGradTolerance = 1e-4;
inline constexpr double kCompositeGradTolerance = 1e-3;

GradCheck run_gradcheck(const std::string& name, const GradFn& fn, const std::vector<Tensor<double>>& inputs,
                        double threshold, const FdOptions& options = {});

/// One check per layer and loss type.
std::vector<GradCheck> layer_gradchecks();
/// L_E through the whole generator (DME, both context maps, F-CNN) and through
/// the DME-only head on a `size` x `size` input, plus L_A through the discriminator.
std::vector<GradCheck> composite_gradchecks(int size = 16);
std::vector<GradCheck> all_gradchecks();

}  // namespace cpcnn
