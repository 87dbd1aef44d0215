// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cpcnn {

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) fail(ErrorCode::kInvalidArgument, "SceneSpec: non-positive size");
  if (spec.count_min < 0 || spec.count_max < spec.count_min) {
    fail(ErrorCode::kInvalidArgument, "SceneSpec: invalid count range [" + std::to_string(spec.count_min) + "," +
                                          std::to_string(spec.count_max) + "]");
  }
  if (spec.cluster_count < 0 || spec.cluster_spread < 0.0 || spec.blob_sigma <= 0.0 || spec.noise_sigma < 0.0) {
    fail(ErrorCode::kInvalidArgument, "SceneSpec: negative layout or rendering parameter");
  }
  const int w = spec.width, h = spec.height;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> count_dist(spec.count_min, spec.count_max);
  const int n = count_dist(rng);

  SyntheticScene out;
  out.scene.width = w;
  out.scene.height = h;
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  std::vector<Dot> centres;
  for (int c = 0; c < std::max(spec.cluster_count, 1); ++c) centres.push_back({ux(rng), uy(rng)});
  std::uniform_int_distribution<std::size_t> pick(0, centres.size() - 1);
  std::uniform_real_distribution<double> offset(-spec.cluster_spread, spec.cluster_spread);
  for (int i = 0; i < n; ++i) {
    Dot d;
    if (spec.cluster_count == 0) {
      d = {ux(rng), uy(rng)};
    } else {
      const Dot& c = centres[pick(rng)];
      // clusters are clipped by the image border, so resample until inside
      int tries = 0;
      do {
        d = {c.x + offset(rng), c.y + offset(rng)};
      } while (!(d.x >= 0.0 && d.x < w && d.y >= 0.0 && d.y < h) && ++tries < 1000);
      if (tries == 1000) d = {std::clamp(c.x, 0.0, w - 1e-6), std::clamp(c.y, 0.0, h - 1e-6)};
    }
    out.scene.dots.push_back(d);
  }

  // Blob rendering: unnormalised Gaussians of peak `blob_amplitude`.
  std::vector<double> acc(static_cast<std::size_t>(w) * h, spec.background);
  const double radius = 3.0 * spec.blob_sigma;
  const double inv_two_var = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
  for (const Dot& d : out.scene.dots) {
    const int x0 = std::max(0, static_cast<int>(std::floor(d.x - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(d.x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(d.y - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(d.y + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - d.x, dy = y + 0.5 - d.y;
        acc[static_cast<std::size_t>(y) * w + x] += spec.blob_amplitude * std::exp(-(dx * dx + dy * dy) * inv_two_var);
      }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  out.image = Image({1, h, w});
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double v = std::min(acc[i], 1.0) + spec.noise_sigma * noise(rng);
    out.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

PatchDataset::PatchDataset(std::shared_ptr<const SourceSet> sources, PatchKind kind, std::vector<PatchItem> items)
    : sources_(std::move(sources)), kind_(kind), items_(std::move(items)) {
  if (!sources_) fail(ErrorCode::kInvalidArgument, "PatchDataset: null source set");
}

Patch PatchDataset::get(std::size_t i) const {
  const PatchItem& it = items_.at(i);
  Patch p;
  p.image = crop(sources_->images.at(static_cast<std::size_t>(it.source)), it.rect);
  p.density = crop_density(sources_->maps.at(static_cast<std::size_t>(it.source)), it.rect);
  if (it.augment == Augment::kFlip) {
    p.image = flip_horizontal(p.image);
    p.density = flip_horizontal(p.density);
  } else if (it.augment == Augment::kNoise) {
    std::mt19937_64 rng(it.noise_seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(kNoiseAugmentSigma));
    for (float& v : p.image.data()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  }
  p.count = it.count;
  p.label = it.label;
  return p;
}

std::vector<double> PatchDataset::counts() const {
  std::vector<double> c;
  c.reserve(items_.size());
  for (const PatchItem& it : items_) c.push_back(it.count);
  return c;
}

void PatchDataset::assign_labels(const ClassBoundaries& boundaries) {
  for (PatchItem& it : items_) it.label = boundaries.classify(it.count);
}

namespace {

void check_sources(const SourceSet& s) {
  if (s.images.size() != s.maps.size()) {
    fail(ErrorCode::kInvalidArgument, "source set: " + std::to_string(s.images.size()) + " images but " +
                                          std::to_string(s.maps.size()) + " density maps");
  }
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    require_same_shape(s.images[i].shape(), s.maps[i].shape(), "source image vs density map");
  }
}

Rect random_rect(std::mt19937_64& rng, int w, int h, int cw, int ch) {
  std::uniform_int_distribution<int> ux(0, w - cw), uy(0, h - ch);
  const int x = ux(rng);
  const int y = uy(rng);
  return {x, y, cw, ch};
}

double rect_count(const SourceSet& s, int source, const Rect& r) {
  return count_of(crop_density(s.maps[static_cast<std::size_t>(source)], r));
}

}  // namespace

int dme_crop_extent(int extent) { return (extent / 2) / 4 * 4; }

PatchDataset build_dme_dataset(std::shared_ptr<const SourceSet> sources, std::mt19937_64& rng) {
  if (!sources) fail(ErrorCode::kInvalidArgument, "build_dme_dataset: null source set");
  check_sources(*sources);
  std::vector<PatchItem> items;
  for (std::size_t s = 0; s < sources->images.size(); ++s) {
    const int h = image_height(sources->images[s]), w = image_width(sources->images[s]);
    if (w < 8 || h < 8) {
      fail(ErrorCode::kInvalidArgument, "build_dme_dataset: image " + std::to_string(s) + " is " + std::to_string(w) +
                                            "x" + std::to_string(h) + ", smaller than 8x8");
    }
    const int cw = dme_crop_extent(w), ch = dme_crop_extent(h);
    for (Augment aug : {Augment::kNone, Augment::kFlip, Augment::kNoise}) {
      for (int i = 0; i < kCropsPerImage; ++i) {
        PatchItem it;
        it.source = static_cast<int>(s);
        it.rect = random_rect(rng, w, h, cw, ch);
        it.augment = aug;
        if (aug == Augment::kNoise) it.noise_seed = rng();
        it.count = rect_count(*sources, it.source, it.rect);
        items.push_back(it);
      }
    }
  }
  return PatchDataset(std::move(sources), PatchKind::kDme, std::move(items));
}

PatchDataset build_local_dataset(std::shared_ptr<const SourceSet> sources, std::mt19937_64& rng, int patch,
                                 const ClassBoundaries* boundaries) {
  if (!sources) fail(ErrorCode::kInvalidArgument, "build_local_dataset: null source set");
  check_sources(*sources);
  if (patch <= 0) fail(ErrorCode::kInvalidArgument, "build_local_dataset: patch size must be positive");
  std::vector<PatchItem> items;
  for (std::size_t s = 0; s < sources->images.size(); ++s) {
    const int h = image_height(sources->images[s]), w = image_width(sources->images[s]);
    if (patch > std::min(w, h)) {
      fail(ErrorCode::kInvalidArgument, "build_local_dataset: patch " + std::to_string(patch) + " exceeds image " +
                                            std::to_string(w) + "x" + std::to_string(h));
    }
    for (int i = 0; i < kCropsPerImage; ++i) {
      PatchItem it;
      it.source = static_cast<int>(s);
      it.rect = random_rect(rng, w, h, patch, patch);
      it.count = rect_count(*sources, it.source, it.rect);
      items.push_back(it);
    }
  }
  PatchDataset ds(std::move(sources), PatchKind::kLocal, std::move(items));
  ds.assign_labels(boundaries ? *boundaries : fit_class_boundaries(ds.counts()));
  return ds;
}

}  // namespace cpcnn
