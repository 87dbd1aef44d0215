// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/classes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "cpcnn/error.hpp"

namespace cpcnn {

int ClassBoundaries::classify(double count) const {
  int c = 0;
  for (double t : thresholds) c += count > t ? 1 : 0;
  return c;
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::kInvalidArgument, "percentile of an empty list");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

ClassBoundaries quintiles(const std::vector<double>& sorted) {
  ClassBoundaries b;
  for (int i = 0; i < kNumClasses - 1; ++i) b.thresholds[i] = percentile(sorted, (i + 1) / double(kNumClasses));
  return b;
}

bool strictly_increasing(const ClassBoundaries& b) {
  return std::adjacent_find(b.thresholds.begin(), b.thresholds.end(), std::greater_equal<>()) == b.thresholds.end();
}

}  // namespace

ClassBoundaries fit_class_boundaries(std::vector<double> counts) {
  for (double c : counts) {
    if (!std::isfinite(c)) fail(ErrorCode::kInvalidArgument, "fit_class_boundaries: non-finite count");
  }
  std::sort(counts.begin(), counts.end());
  std::vector<double> distinct = counts;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<std::size_t>(kNumClasses)) {
    fail(ErrorCode::kInvalidArgument, "fit_class_boundaries: need at least 5 distinct counts, got " +
                                          std::to_string(distinct.size()));
  }
  ClassBoundaries b = quintiles(counts);
  if (!strictly_increasing(b)) b = quintiles(distinct);
  return b;
}

}  // namespace cpcnn
