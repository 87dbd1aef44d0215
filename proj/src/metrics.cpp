// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace cpcnn {

CountErrors mae_mse(const std::vector<double>& gt, const std::vector<double>& est) {
  if (gt.empty() || gt.size() != est.size()) {
    fail(ErrorCode::kInvalidArgument, "mae_mse: need equal non-empty lists, got " + std::to_string(gt.size()) +
                                          " and " + std::to_string(est.size()));
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double e = std::abs(gt[i] - est[i]);
    abs_sum += e;
    sq_sum += e * e;
  }
  const double n = static_cast<double>(gt.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

namespace {

std::pair<DensityMap, DensityMap> jointly_scaled(const DensityMap& pred, const DensityMap& gt, const char* what) {
  require_same_shape(pred.shape(), gt.shape(), what);
  float peak = 0.0f;
  for (float v : gt.data()) peak = std::max(peak, v);
  if (!(peak > 0.0f)) fail(ErrorCode::kInvalidArgument, std::string(what) + ": ground truth is identically zero");
  DensityMap a = pred, b = gt;
  const double inv = 1.0 / peak;
  for (float& v : a.data()) v = static_cast<float>(std::clamp(v * inv, 0.0, 1.0));
  for (float& v : b.data()) v = static_cast<float>(std::clamp(v * inv, 0.0, 1.0));
  return {std::move(a), std::move(b)};
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double s = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    s += g[i];
  }
  for (double& v : g) v /= s;
  return g;
}

// Separable weighted sum over every valid window: rows then columns.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::array<double, kWindow>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const DensityMap& pred, const DensityMap& gt) {
  const auto [a, b] = jointly_scaled(pred, gt, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_raw(const DensityMap& a, const DensityMap& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const int h = image_height(a), w = image_width(a);
  if (h < kWindow || w < kWindow) {
    fail(ErrorCode::kInvalidArgument, "ssim: map " + std::to_string(w) + "x" + std::to_string(h) +
                                          " is smaller than the 11x11 window");
  }
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i];
    y[i] = b[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_taps();
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const DensityMap& pred, const DensityMap& gt) {
  const auto [a, b] = jointly_scaled(pred, gt, "ssim");
  return ssim_raw(a, b);
}

void EvalAccumulator::add(double gt_count, double est_count, double psnr_db, double ssim_value) {
  gt_.push_back(gt_count);
  est_.push_back(est_count);
  psnr_sum_ += psnr_db;
  ssim_sum_ += ssim_value;
}

EvalReport EvalAccumulator::report() const {
  const CountErrors e = mae_mse(gt_, est_);
  const double n = static_cast<double>(gt_.size());
  return {static_cast<int>(gt_.size()), e.mae, e.mse, psnr_sum_ / n, ssim_sum_ / n};
}

std::string eval_csv_row(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.6g,%.6g,%.6g,%.6g", r.n, r.mae, r.mse, r.mean_psnr, r.mean_ssim);
  return buf;
}

std::string eval_csv(const EvalReport& r) { return "n,mae,mse,psnr,ssim\n" + eval_csv_row(r) + "\n"; }

}  // namespace cpcnn
