// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cpcnn/image.hpp"

namespace cpcnn {

struct Dot {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Dot&) const = default;
};

/// Head-centre annotations of one image.
struct DotScene {
  int width = 0;
  int height = 0;
  std::vector<Dot> dots;

  bool operator==(const DotScene&) const = default;
};

/// Density maps are [1,H,W] float tensors.
using DensityMap = Tensor<float>;

/// Sum of isotropic Gaussians (pixel centres at i + 0.5), each truncated at 4 sigma
/// and renormalised over its in-image support so every dot contributes mass 1.
DensityMap render_density(const DotScene& scene, double sigma);

/// Sum of all pixels, accumulated in double.
double count_of(const DensityMap& map);

/// Sub-grid copy with no renormalisation.
DensityMap crop_density(const DensityMap& map, const Rect& rect);

/// Text format: `W H` on the first line, then one `x y` pair per line.
std::string format_scene(const DotScene& scene);
DotScene parse_scene(const std::string& text);
void save_scene(const std::string& path, const DotScene& scene);
DotScene load_scene(const std::string& path);

/// Binary format: `CPDM`, u32 W, u32 H, W*H float32, all little-endian.
std::string encode_density(const DensityMap& map);
DensityMap decode_density(const std::string& bytes);
void save_density(const std::string& path, const DensityMap& map);
DensityMap load_density(const std::string& path);

}  // namespace cpcnn
