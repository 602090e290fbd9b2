#include "mozoo/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "mozoo/errors.hpp"

namespace mozoo {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

std::string dims(const Video& v) {
  return std::to_string(v.frames) + "x" + std::to_string(v.height) + "x" + std::to_string(v.width) + "x" +
         std::to_string(v.channels);
}

void require_same(const Video& a, const Video& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": " + dims(a) + " vs " + dims(b));
}

void require_mask(const Video& v, const Video& masks, const char* what) {
  if (masks.frames != v.frames || masks.height != v.height || masks.width != v.width || masks.channels != 1) {
    throw DimensionError(std::string(what) + ": mask " + dims(masks) + " for video " + dims(v));
  }
}

double psnr_from_mse(double mse) { return mse == 0.0 ? kPsnrIdentical : 10.0 * std::log10(255.0 * 255.0 / mse); }

std::vector<double> luma(const Video& v, std::size_t f) {
  std::vector<double> y(v.height * v.width);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::uint8_t* p = v.data.data() + f * v.frame_size() + i * v.channels;
    y[i] = v.channels >= 3 ? 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] : static_cast<double>(p[0]);
  }
  return y;
}

std::array<double, kWindow * kWindow> gaussian_window() {
  std::array<double, kWindow * kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    for (int j = 0; j < kWindow; ++j) {
      const double di = i - kWindow / 2, dj = j - kWindow / 2;
      w[i * kWindow + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      total += w[i * kWindow + j];
    }
  }
  for (auto& x : w) x /= total;
  return w;
}

double ssim_impl(const Video& a, const Video& b, const Video* masks) {
  require_same(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow) {
    throw ContractError("ssim: frame " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                        " is smaller than the 11x11 window");
  }
  if (masks) require_mask(a, *masks, "ssim");
  static const auto window = gaussian_window();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < a.frames; ++f) {
    const auto ya = luma(a, f), yb = luma(b, f);
    for (std::size_t y0 = 0; y0 + kWindow <= a.height; ++y0) {
      for (std::size_t x0 = 0; x0 + kWindow <= a.width; ++x0) {
        if (masks && !masks->at(f, y0 + kWindow / 2, x0 + kWindow / 2)) continue;
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWindow; ++i) {
          for (int j = 0; j < kWindow; ++j) {
            const double w = window[i * kWindow + j];
            const std::size_t idx = (y0 + i) * a.width + x0 + j;
            ma += w * ya[idx];
            mb += w * yb[idx];
            saa += w * ya[idx] * ya[idx];
            sbb += w * yb[idx] * yb[idx];
            sab += w * ya[idx] * yb[idx];
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  }
  if (count == 0) return 1.0;
  return total / static_cast<double>(count);
}

}  // namespace

double psnr(const Video& a, const Video& b) {
  require_same(a, b, "psnr");
  std::uint64_t sq = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const std::int64_t d = static_cast<std::int64_t>(a.data[i]) - b.data[i];
    sq += static_cast<std::uint64_t>(d * d);
  }
  return psnr_from_mse(static_cast<double>(sq) / static_cast<double>(a.data.size()));
}

double psnr_masked(const Video& a, const Video& b, const Video& masks) {
  require_same(a, b, "psnr");
  require_mask(a, masks, "psnr");
  std::uint64_t sq = 0, n = 0;
  const std::size_t pixels = a.frames * a.height * a.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!masks.data[p]) continue;
    for (std::size_t c = 0; c < a.channels; ++c) {
      const std::int64_t d = static_cast<std::int64_t>(a.data[p * a.channels + c]) - b.data[p * a.channels + c];
      sq += static_cast<std::uint64_t>(d * d);
      ++n;
    }
  }
  if (n == 0) return kPsnrIdentical;
  return psnr_from_mse(static_cast<double>(sq) / static_cast<double>(n));
}

double ssim(const Video& a, const Video& b) { return ssim_impl(a, b, nullptr); }
double ssim_masked(const Video& a, const Video& b, const Video& masks) { return ssim_impl(a, b, &masks); }

double temporal_smoothness(const Video& v) {
  if (v.frames < 2) throw ContractError("temporal_smoothness needs at least two frames");
  std::uint64_t acc = 0;
  const std::size_t n = v.frame_size();
  for (std::size_t f = 0; f + 1 < v.frames; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      acc += static_cast<std::uint64_t>(std::abs(static_cast<int>(v.data[(f + 1) * n + i]) - v.data[f * n + i]));
    }
  }
  return static_cast<double>(acc) / (255.0 * static_cast<double>(n * (v.frames - 1)));
}

std::array<double, 64> palette_histogram(const Video& rgb, const Video& masks) {
  if (rgb.channels != 3) throw DimensionError("palette_histogram expects RGB, got " + dims(rgb));
  require_mask(rgb, masks, "palette_histogram");
  std::array<double, 64> h{};
  std::size_t n = 0;
  const std::size_t pixels = rgb.frames * rgb.height * rgb.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!masks.data[p]) continue;
    const std::uint8_t* c = rgb.data.data() + 3 * p;
    h[(c[0] >> 6) * 16 + (c[1] >> 6) * 4 + (c[2] >> 6)] += 1.0;
    ++n;
  }
  if (n == 0) throw ContractError("palette_histogram: mask is empty");
  for (auto& x : h) x /= static_cast<double>(n);
  return h;
}

double chi_squared(const std::array<double, 64>& p, const std::array<double, 64>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = p[i] + q[i];
    if (s > 0) acc += (p[i] - q[i]) * (p[i] - q[i]) / s;
  }
  return 0.5 * acc;
}

MetricRow MetricReport::mean() const {
  MetricRow m{"mean"};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr_db += r.psnr_db;
    m.ssim += r.ssim;
    m.smoothness += r.smoothness;
  }
  const double n = static_cast<double>(rows.size());
  m.psnr_db /= n;
  m.ssim /= n;
  m.smoothness /= n;
  return m;
}

void MetricReport::write_csv(std::ostream& out) const {
  out << "sample_id,psnr_db,ssim,smoothness\n";
  auto line = [&out](const MetricRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", r.psnr_db, r.ssim, r.smoothness);
    out << r.sample_id << buf;
  };
  for (const auto& r : rows) line(r);
  line(mean());
}

MetricRow evaluate_pair(const std::string& id, const Video& pred, const Video& truth, const Video* masks) {
  MetricRow r{id};
  r.psnr_db = masks ? psnr_masked(pred, truth, *masks) : psnr(pred, truth);
  r.ssim = masks ? ssim_masked(pred, truth, *masks) : ssim(pred, truth);
  r.smoothness = pred.frames >= 2 ? temporal_smoothness(pred) : 0.0;
  return r;
}

}  // namespace mozoo
