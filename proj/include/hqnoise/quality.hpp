#pragma once
// Image-quality metrics over latent tensors: PSNR, Gaussian-windowed SSIM, a
// scaled (1 - SSIM) / 2 stand-in for a learned perceptual distance, and the
// margin filter that keeps only pairs whose enriched noise actually generated
// a better result.

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hqnoise {

// 20*log10(max) - 10*log10(MSE); +inf for identical inputs.
inline double psnr(const Tensor& pred, const Tensor& gt, double max_value) {
  pred.require_same_shape(gt, "psnr");
  if (!(max_value > 0.0)) throw ConfigError("psnr: max_value must be > 0");
  double mse = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(max_value) - 10.0 * std::log10(mse);
}

namespace detail {
// 11-tap Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    const int n = 11;
    std::vector<double> g(n * n);
    double sum = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dy = y - (n - 1) / 2.0, dx = x - (n - 1) / 2.0;
        g[y * n + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
        sum += g[y * n + x];
      }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}
}  // namespace detail

// Mean local SSIM: Gaussian-weighted 11x11 windows (sigma 1.5) at every valid
// position of every channel, K1 = 0.01, K2 = 0.03 on the given dynamic range.
inline double ssim(const Tensor& pred, const Tensor& gt, double dynamic_range) {
  pred.require_same_shape(gt, "ssim");
  if (pred.ndim() != 3) throw ShapeError("ssim: expected rank-3 tensors");
  if (!(dynamic_range > 0.0)) throw ConfigError("ssim: dynamic_range must be > 0");
  const int n = 11;
  const int C = pred.dim(0), H = pred.dim(1), W = pred.dim(2);
  if (H < n || W < n)
    throw ShapeError("ssim: spatial dims " + shape_str(pred.shape()) +
                     " smaller than the 11-tap window");
  const std::vector<double>& win = detail::ssim_window();
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double acc = 0.0;
  size_t count = 0;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y + n <= H; ++y)
      for (int x = 0; x + n <= W; ++x) {
        double mua = 0.0, mub = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int wy = 0; wy < n; ++wy)
          for (int wx = 0; wx < n; ++wx) {
            const double w = win[wy * n + wx];
            const double a = pred.at(c, y + wy, x + wx);
            const double b = gt.at(c, y + wy, x + wx);
            mua += w * a;
            mub += w * b;
            saa += w * a * a;
            sbb += w * b * b;
            sab += w * a * b;
          }
        const double va = saa - mua * mua;
        const double vb = sbb - mub * mub;
        const double cov = sab - mua * mub;
        acc += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) /
               ((mua * mua + mub * mub + c1) * (va + vb + c2));
        ++count;
      }
  return acc / static_cast<double>(count);
}

// Perceptual-distance stand-in: (1 - SSIM) / 2, in [0, 1], 0 iff identical.
inline double lpips_proxy(const Tensor& pred, const Tensor& gt, double dynamic_range) {
  return (1.0 - ssim(pred, gt, dynamic_range)) / 2.0;
}

using ViewMetric = std::function<double(const Tensor&, const Tensor&)>;

// Mean per-view distance across a generated orbit. The metric is pluggable so
// an externally computed perceptual distance can replace the SSIM proxy.
inline double perceptual_score(const std::vector<Tensor>& views,
                               const std::vector<Tensor>& gts, const ViewMetric& metric) {
  if (views.empty()) throw DataError("perceptual_score: no views");
  if (views.size() != gts.size())
    throw ShapeError("perceptual_score: got " + std::to_string(views.size()) +
                     " views but " + std::to_string(gts.size()) + " references");
  double acc = 0.0;
  for (size_t i = 0; i < views.size(); ++i) acc += metric(views[i], gts[i]);
  return acc / static_cast<double>(views.size());
}

inline double perceptual_score(const std::vector<Tensor>& views,
                               const std::vector<Tensor>& gts, double dynamic_range) {
  return perceptual_score(views, gts, [dynamic_range](const Tensor& a, const Tensor& b) {
    return lpips_proxy(a, b, dynamic_range);
  });
}

// Retention rule: keep the pair iff the enriched noise scored strictly better
// by more than the margin. Scores are distances, lower is better, and s_rd is
// the score of the plain random-noise generation.
inline bool filter_retains(double s_rd, double s_hq, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("filter: margin must be >= 0");
  if (!std::isfinite(s_rd) || !std::isfinite(s_hq))
    throw DataError("filter: non-finite scores");
  return s_rd > s_hq + margin;
}

inline double filtering_rate(size_t retained, size_t total) {
  if (total == 0) throw DataError("filtering_rate: total must be > 0");
  if (retained > total) throw DataError("filtering_rate: retained exceeds total");
  return 100.0 * static_cast<double>(retained) / static_cast<double>(total);
}

// Fixed two-decimal formatting used in filter reports: 359/1765 -> "20.34".
inline std::string format_rate(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", percent);
  return std::string(buf);
}

}  // namespace hqnoise
