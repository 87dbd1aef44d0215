// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// Grayscale images and density maps are both [1,H,W] float tensors; images hold
/// intensities in [0,1].
using Image = Tensor<float>;

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const Rect&) const = default;
};

int image_height(const Tensor<float>& t);
int image_width(const Tensor<float>& t);

/// Copy of `rect` from every channel of a [C,H,W] tensor.
Tensor<float> crop(const Tensor<float>& t, const Rect& rect);
Tensor<float> flip_horizontal(const Tensor<float>& t);
/// Bilinear resampling with half-pixel centres and edge clamping.
Tensor<float> resize_bilinear(const Tensor<float>& t, int out_h, int out_w);
/// Mean over non-overlapping factor x factor boxes; dims must be divisible.
Tensor<float> box_downsample(const Tensor<float>& t, int factor);
/// Each pixel becomes a factor x factor block holding value / factor^2, so sums are kept.
Tensor<float> mass_upsample(const Tensor<float>& t, int factor);
/// Sum over non-overlapping factor x factor boxes.
Tensor<float> sum_pool(const Tensor<float>& t, int factor);

/// Binary PGM (P5, maxval <= 255) to [1,H,W] in [0,1].
Image read_pgm(const std::string& path);
/// Writes values clamped to [0,1] as 8-bit P5.
void write_pgm(const std::string& path, const Image& img);
/// Linear scale by the map maximum, so a nonzero map peaks at 255.
void write_pgm_scaled(const std::string& path, const Tensor<float>& map);

}  // namespace cpcnn
