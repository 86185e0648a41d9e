#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

/// Affine remap of [-1, 1] onto [0, 1] with clamping, applied before metrics.
template <typename S>
Tensor<double> to_unit_range(const Tensor<S>& img) {
  Tensor<double> out = Tensor<double>::zeros(img.shape());
  for (Index i = 0; i < img.numel(); ++i) {
    const double v = (static_cast<double>(img.at(i)) + 1.0) / 2.0;
    out.data()[i] = std::min(1.0, std::max(0.0, v));
  }
  return out;
}

inline constexpr double kPsnrExactSentinel = 99.0;

struct PsnrResult {
  double db = 0;
  bool exact_match = false;
};

/// 10 log10(1 / MSE) for images in [0, 1]; identical images report the
/// documented 99 dB sentinel with the exact-match flag set.
template <typename S>
PsnrResult psnr(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "psnr: shape mismatch ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
  double mse = 0;
  for (Index i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.at(i)) - static_cast<double>(b.at(i));
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return {kPsnrExactSentinel, true};
  return {10.0 * std::log10(1.0 / mse), false};
}

namespace ssim_detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

/// Separable valid-region filtering with a 1-D window.
inline std::vector<double> filter_valid(const std::vector<double>& img, Index h, Index w,
                                        const std::vector<double>& win, Index& oh, Index& ow) {
  const Index k = static_cast<Index>(win.size());
  const Index hw = w - k + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h * hw));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < hw; ++j) {
      double acc = 0;
      for (Index t = 0; t < k; ++t)
        acc += win[static_cast<std::size_t>(t)] * img[static_cast<std::size_t>(i * w + j + t)];
      horiz[static_cast<std::size_t>(i * hw + j)] = acc;
    }
  oh = h - k + 1;
  ow = hw;
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (Index i = 0; i < oh; ++i)
    for (Index j = 0; j < ow; ++j) {
      double acc = 0;
      for (Index t = 0; t < k; ++t)
        acc += win[static_cast<std::size_t>(t)] * horiz[static_cast<std::size_t>((i + t) * hw + j)];
      out[static_cast<std::size_t>(i * ow + j)] = acc;
    }
  return out;
}

}  // namespace ssim_detail

/// Mean local SSIM over valid window positions: 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.
template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "ssim: shape mismatch ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
  require(a.ndim() == 2, "ssim: expected 2-D images, got shape ", shape_str(a.shape()));
  const Index h = a.dim(0), w = a.dim(1);
  constexpr int kWin = 11;
  require(h >= kWin && w >= kWin, "ssim: image ", h, "x", w, " smaller than the ", kWin, "x",
          kWin, " window");

  const std::vector<double> win = ssim_detail::gaussian_window(kWin, 1.5);
  const Index n = h * w;
  std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n)),
      xx(static_cast<std::size_t>(n)), yy(static_cast<std::size_t>(n)),
      xy(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double xi = static_cast<double>(a.at(i)), yi = static_cast<double>(b.at(i));
    x[static_cast<std::size_t>(i)] = xi;
    y[static_cast<std::size_t>(i)] = yi;
    xx[static_cast<std::size_t>(i)] = xi * xi;
    yy[static_cast<std::size_t>(i)] = yi * yi;
    xy[static_cast<std::size_t>(i)] = xi * yi;
  }
  Index oh = 0, ow = 0;
  const auto mx = ssim_detail::filter_valid(x, h, w, win, oh, ow);
  const auto my = ssim_detail::filter_valid(y, h, w, win, oh, ow);
  const auto mxx = ssim_detail::filter_valid(xx, h, w, win, oh, ow);
  const auto myy = ssim_detail::filter_valid(yy, h, w, win, oh, ow);
  const auto mxy = ssim_detail::filter_valid(xy, h, w, win, oh, ow);

  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double mux = mx[i], muy = my[i];
    const double vx = mxx[i] - mux * mux;
    const double vy = myy[i] - muy * muy;
    const double cov = mxy[i] - mux * muy;
    total += ((2 * mux * muy + c1) * (2 * cov + c2)) /
             ((mux * mux + muy * muy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

/// Tight axis-aligned bounding box of the mask foreground (> 0.5) applied to
/// a 2-D image.
template <typename S>
Tensor<S> crop_to_bbox(const Tensor<S>& image, const Tensor<S>& mask) {
  require(image.ndim() == 2 && mask.ndim() == 2, "crop_to_bbox: expected 2-D inputs");
  require(image.shape() == mask.shape(), "crop_to_bbox: image ", shape_str(image.shape()),
          " and mask ", shape_str(mask.shape()), " differ");
  const Index h = image.dim(0), w = image.dim(1);
  Index r0 = h, r1 = -1, c0 = w, c1 = -1;
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      if (static_cast<double>(mask.at(i * w + j)) > 0.5) {
        r0 = std::min(r0, i);
        r1 = std::max(r1, i);
        c0 = std::min(c0, j);
        c1 = std::max(c1, j);
      }
  require(r1 >= 0, "crop_to_bbox: empty mask");
  Tensor<S> out = Tensor<S>::zeros({r1 - r0 + 1, c1 - c0 + 1});
  for (Index i = r0; i <= r1; ++i)
    for (Index j = c0; j <= c1; ++j)
      out.data()[(i - r0) * (c1 - c0 + 1) + (j - c0)] = image.at(i * w + j);
  return out;
}

struct MetricRow {
  std::string image_id;
  double psnr_db = 0;
  double ssim = 0;
  double cropped_psnr_db = 0;
  double cropped_ssim = 0;
};

struct MetricSummary {
  double mean = 0;
  double stddev = 0;
};

inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "metrics csv: cannot open '", path, "'");
  out << "image_id,psnr_db,ssim,cropped_psnr_db,cropped_ssim\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (const auto& r : rows)
    out << r.image_id << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << ','
        << fmt(r.cropped_psnr_db) << ',' << fmt(r.cropped_ssim) << '\n';
  require(out.good(), "metrics csv: write failed for '", path, "'");
}

}  // namespace cones
