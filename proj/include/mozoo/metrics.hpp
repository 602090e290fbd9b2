#pragma once

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "mozoo/zoodata.hpp"

namespace mozoo {

/// Returned by psnr for identical inputs.
inline constexpr double kPsnrIdentical = 99.0;

/// 10 log10(255^2 / MSE) over every byte. Throws DimensionError on a shape
/// mismatch.
double psnr(const Video& a, const Video& b);
/// MSE restricted to pixels where `masks` (frames x H x W x 1, nonzero = in)
/// is set; the sentinel is returned when the mask is empty.
double psnr_masked(const Video& a, const Video& b, const Video& masks);

/// Single-scale SSIM on BT.601 luma with an 11x11 Gaussian window
/// (sigma 1.5), averaged over valid window positions and frames.
double ssim(const Video& a, const Video& b);
/// Same, averaged only over windows whose center lies inside the mask.
double ssim_masked(const Video& a, const Video& b, const Video& masks);

/// Mean absolute difference between consecutive frames, scaled to [0, 1].
double temporal_smoothness(const Video& v);

/// Normalized histogram of masked RGB pixels, each channel quantized to four
/// levels (64 bins).
std::array<double, 64> palette_histogram(const Video& rgb, const Video& masks);
/// 0.5 * sum (p - q)^2 / (p + q) over bins where p + q > 0.
double chi_squared(const std::array<double, 64>& p, const std::array<double, 64>& q);

struct MetricRow {
  std::string sample_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double smoothness = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  MetricRow mean() const;
  /// Header, one row per sample, then a "mean" row.
  void write_csv(std::ostream& out) const;
};

/// Scores one prediction against its ground truth.
MetricRow evaluate_pair(const std::string& id, const Video& pred, const Video& truth, const Video* masks = nullptr);

}  // namespace mozoo
