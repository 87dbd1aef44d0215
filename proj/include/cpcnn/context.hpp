// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "cpcnn/classifier.hpp"

namespace cpcnn {

/// Context maps are [5, H/4, W/4] float tensors with values in [0,1].
using ContextMap = Tensor<float>;

/// Maps an image region to its 5 class scores.
using ScoreFn = std::function<Scores(const Image&)>;

/// Training variant: one score set for the whole image, broadcast over every plane.
ContextMap build_global_context_train(const Image& image, const ScoreFn& score);
ContextMap build_global_context_train(const Image& image, const ClassifierModel& gce);

/// Inference variant: a 4x4 grid of W/4 x H/4 blocks, each scored separately and
/// written over its own footprint.
ContextMap build_global_context_infer(const Image& image, const ScoreFn& score);
ContextMap build_global_context_infer(const Image& image, const ClassifierModel& gce);

/// Window origins along one axis: 0, stride, 2*stride, ... plus extent - window,
/// so the last pixel is always covered.
std::vector<int> window_origins(int extent, int window, int stride);

/// Sliding P x P windows (stride defaults to P/2). Scores are accumulated at
/// full resolution, overlaps averaged, then 4x4 box-averaged.
ContextMap build_local_context(const Image& image, const ScoreFn& score, int window, int stride = 0);
ContextMap build_local_context(const Image& image, const ClassifierModel& lce, int stride = 0);

}  // namespace cpcnn
