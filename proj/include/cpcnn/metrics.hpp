// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cpcnn/density.hpp"

namespace cpcnn {

struct CountErrors {
  double mae = 0.0;
  /// Root of the mean squared error.
  double mse = 0.0;
};

/// MAE = mean |y - y'|, MSE = sqrt(mean |y - y'|^2).
CountErrors mae_mse(const std::vector<double>& gt, const std::vector<double>& est);

inline constexpr double kPsnrCap = 100.0;

/// Both maps are scaled by 1 / max(gt) and clamped to [0,1] before comparison.
/// Identical maps give kPsnrCap.
double psnr(const DensityMap& pred, const DensityMap& gt);

/// Mean SSIM over every valid 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// L 1, on the maps as given.
double ssim_raw(const DensityMap& a, const DensityMap& b);

/// SSIM after the same joint scaling as psnr().
double ssim(const DensityMap& pred, const DensityMap& gt);

struct EvalReport {
  int n = 0;
  double mae = 0.0;
  double mse = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Accumulates per-image results into a report.
class EvalAccumulator {
 public:
  void add(double gt_count, double est_count, double psnr_db, double ssim_value);
  EvalReport report() const;

 private:
  std::vector<double> gt_;
  std::vector<double> est_;
  double psnr_sum_ = 0.0;
  double ssim_sum_ = 0.0;
};

/// "n,mae,mse,psnr,ssim" header plus one row, 6 significant digits.
std::string eval_csv(const EvalReport& r);
std::string eval_csv_row(const EvalReport& r);

}  // namespace cpcnn
