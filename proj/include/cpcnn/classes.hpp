// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

namespace cpcnn {

/// Density levels: extremely low, low, medium, high, extremely high.
inline constexpr int kNumClasses = 5;

struct ClassBoundaries {
  /// Strictly increasing count thresholds.
  std::array<double, kNumClasses - 1> thresholds{};

  /// Number of thresholds strictly below `count`.
  int classify(double count) const;
  bool operator==(const ClassBoundaries&) const = default;
};

/// Linear-interpolation percentile (q in [0,1]) of an ascending list.
double percentile(const std::vector<double>& sorted, double q);

/// 20/40/60/80th percentiles of the counts. When ties make them non-increasing,
/// the percentiles are taken over the distinct counts instead.
/// Throws when there are fewer than 5 distinct counts.
ClassBoundaries fit_class_boundaries(std::vector<double> counts);

}  // namespace cpcnn
