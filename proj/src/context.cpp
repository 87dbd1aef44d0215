// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/context.hpp"

#include <algorithm>

namespace cpcnn {

namespace {

std::pair<int, int> quarter_dims(const Image& image, const char* what) {
  const int h = image_height(image), w = image_width(image);
  if (h % 4 != 0 || w % 4 != 0) {
    fail(ErrorCode::kShapeMismatch, std::string(what) + ": image " + std::to_string(w) + "x" + std::to_string(h) +
                                        " must have dims divisible by 4");
  }
  return {h / 4, w / 4};
}

}  // namespace

ContextMap build_global_context_train(const Image& image, const ScoreFn& score) {
  const auto [qh, qw] = quarter_dims(image, "global context");
  const Scores s = score(image);
  ContextMap map({kNumClasses, qh, qw});
  for (int c = 0; c < kNumClasses; ++c)
    std::fill_n(&map.at(c, 0, 0), static_cast<std::size_t>(qh) * qw, s[static_cast<std::size_t>(c)]);
  return map;
}

ContextMap build_global_context_train(const Image& image, const ClassifierModel& gce) {
  return build_global_context_train(image, [&](const Image& im) { return classify_image(gce, im); });
}

ContextMap build_global_context_infer(const Image& image, const ScoreFn& score) {
  const auto [qh, qw] = quarter_dims(image, "global context");
  const int h = image_height(image), w = image_width(image);
  const int bh = h / 4, bw = w / 4;
  ContextMap map({kNumClasses, qh, qw});
  Scores block[4][4];
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx) block[by][bx] = score(crop(image, {bx * bw, by * bh, bw, bh}));
  // A quarter-resolution cell belongs to the block holding its centre pixel.
  for (int y = 0; y < qh; ++y) {
    const int by = std::min(3, (4 * y + 2) / bh);
    for (int x = 0; x < qw; ++x) {
      const int bx = std::min(3, (4 * x + 2) / bw);
      for (int c = 0; c < kNumClasses; ++c) map.at(c, y, x) = block[by][bx][static_cast<std::size_t>(c)];
    }
  }
  return map;
}

ContextMap build_global_context_infer(const Image& image, const ClassifierModel& gce) {
  return build_global_context_infer(image, [&](const Image& im) { return classify_image(gce, im); });
}

std::vector<int> window_origins(int extent, int window, int stride) {
  std::vector<int> o;
  for (int p = 0; p + window <= extent; p += stride) o.push_back(p);
  if (o.empty() || o.back() != extent - window) o.push_back(extent - window);
  return o;
}

ContextMap build_local_context(const Image& image, const ScoreFn& score, int window, int stride) {
  quarter_dims(image, "local context");
  const int h = image_height(image), w = image_width(image);
  if (window <= 0 || window > std::min(h, w)) {
    fail(ErrorCode::kInvalidArgument, "local context: window " + std::to_string(window) + " does not fit image " +
                                          std::to_string(w) + "x" + std::to_string(h));
  }
  if (stride <= 0) stride = std::max(1, window / 2);
  if (stride > window) fail(ErrorCode::kInvalidArgument, "local context: stride larger than window leaves gaps");
  Tensor<float> acc({kNumClasses, h, w});
  std::vector<int> cover(static_cast<std::size_t>(h) * w, 0);
  for (int y0 : window_origins(h, window, stride)) {
    for (int x0 : window_origins(w, window, stride)) {
      const Scores s = score(crop(image, {x0, y0, window, window}));
      for (int y = y0; y < y0 + window; ++y)
        for (int x = x0; x < x0 + window; ++x) {
          ++cover[static_cast<std::size_t>(y) * w + x];
          for (int c = 0; c < kNumClasses; ++c) acc.at(c, y, x) += s[static_cast<std::size_t>(c)];
        }
    }
  }
  for (int c = 0; c < kNumClasses; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) acc.at(c, y, x) /= static_cast<float>(cover[static_cast<std::size_t>(y) * w + x]);
  return box_downsample(acc, 4);
}

ContextMap build_local_context(const Image& image, const ClassifierModel& lce, int stride) {
  return build_local_context(image, [&](const Image& im) { return classifier_scores(lce, im); },
                             lce.arch.input_size, stride);
}

}  // namespace cpcnn
