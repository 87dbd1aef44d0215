// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "cpcnn/classes.hpp"
#include "cpcnn/density.hpp"

namespace cpcnn {

/// Layout and rendering knobs for one synthetic crowd scene.
struct SceneSpec {
  int width = 64;
  int height = 64;
  int count_min = 10;
  int count_max = 150;
  /// Number of crowd clusters; each dot picks one uniformly.
  int cluster_count = 4;
  /// Half-width of the square each cluster spreads its dots over.
  double cluster_spread = 16.0;
  double background = 0.0;
  double blob_amplitude = 0.5;
  double blob_sigma = 1.2;
  double noise_sigma = 0.03;
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  DotScene scene;
  Image image;
};

/// Dots from a mixture of uniform square clusters (rejection-sampled to stay
/// inside the image), rendered as Gaussian head blobs over a flat background
/// plus pixel noise, clamped to [0,1].
SyntheticScene generate_scene(const SceneSpec& spec);

/// Source images with aligned density maps.
struct SourceSet {
  std::vector<Image> images;
  std::vector<DensityMap> maps;
};

enum class PatchKind { kDme, kLocal };
enum class Augment : std::uint8_t { kNone, kFlip, kNoise };

inline constexpr int kCropsPerImage = 100;
inline constexpr double kNoiseAugmentSigma = 0.02;

/// A patch is stored as a recipe and cut out of its source on demand.
struct PatchItem {
  int source = 0;
  Rect rect;
  Augment augment = Augment::kNone;
  std::uint64_t noise_seed = 0;
  double count = 0.0;
  int label = -1;

  bool operator==(const PatchItem&) const = default;
};

struct Patch {
  Image image;
  DensityMap density;
  double count = 0.0;
  int label = -1;
};

class PatchDataset {
 public:
  PatchDataset(std::shared_ptr<const SourceSet> sources, PatchKind kind, std::vector<PatchItem> items);

  PatchKind kind() const { return kind_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<PatchItem>& items() const { return items_; }
  const SourceSet& sources() const { return *sources_; }

  /// Cuts, flips or adds noise as recorded. Noise never touches the density patch.
  Patch get(std::size_t i) const;

  std::vector<double> counts() const;
  void assign_labels(const ClassBoundaries& boundaries);

 private:
  std::shared_ptr<const SourceSet> sources_;
  PatchKind kind_;
  std::vector<PatchItem> items_;
};

/// Crop size used for training patches: half of each side, rounded down to a multiple of 4.
int dme_crop_extent(int extent);

/// Per image: 100 random half-size crops, 100 flipped fresh crops and 100 fresh
/// crops with additive noise (sigma 0.02, clamped), in that order.
PatchDataset build_dme_dataset(std::shared_ptr<const SourceSet> sources, std::mt19937_64& rng);

/// Per image: 100 random P x P crops. Items carry their density count; labels
/// are assigned from `boundaries`, or from quintiles of these counts when absent.
PatchDataset build_local_dataset(std::shared_ptr<const SourceSet> sources, std::mt19937_64& rng, int patch,
                                 const ClassBoundaries* boundaries = nullptr);

}  // namespace cpcnn
