#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

using Complex = std::complex<double>;
using SpectrumMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace fft_detail {

inline bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 Cooley-Tukey, unnormalized forward transform.
inline void fft_pow2(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const Complex wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Direct O(n^2) transform for non-power-of-two lengths.
inline void dft_naive(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc(0, 0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += a[t] * Complex(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

inline void fft_line(std::vector<Complex>& a) {
  if (is_pow2(static_cast<Index>(a.size())))
    fft_pow2(a);
  else
    dft_naive(a);
}

}  // namespace fft_detail

/// Unnormalized forward 2-D DFT of a real image (rows, then columns).
template <typename S>
SpectrumMatrix fft2d(const Tensor<S>& image) {
  require(image.ndim() == 2, "fft2d: expected a 2-D image, got shape ",
          shape_str(image.shape()));
  const Index h = image.dim(0), w = image.dim(1);
  SpectrumMatrix m(h, w);
  std::vector<Complex> line;
  for (Index i = 0; i < h; ++i) {
    line.assign(static_cast<std::size_t>(w), Complex(0, 0));
    for (Index j = 0; j < w; ++j)
      line[static_cast<std::size_t>(j)] = Complex(static_cast<double>(image.at(i * w + j)), 0);
    fft_detail::fft_line(line);
    for (Index j = 0; j < w; ++j) m(i, j) = line[static_cast<std::size_t>(j)];
  }
  for (Index j = 0; j < w; ++j) {
    line.assign(static_cast<std::size_t>(h), Complex(0, 0));
    for (Index i = 0; i < h; ++i) line[static_cast<std::size_t>(i)] = m(i, j);
    fft_detail::fft_line(line);
    for (Index i = 0; i < h; ++i) m(i, j) = line[static_cast<std::size_t>(i)];
  }
  return m;
}

/// Moves the DC bin to (floor(H/2), floor(W/2)).
inline SpectrumMatrix fftshift(const SpectrumMatrix& m) {
  const Index h = m.rows(), w = m.cols();
  SpectrumMatrix out(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) out((i + h / 2) % h, (j + w / 2) % w) = m(i, j);
  return out;
}

/// 1-D azimuthal profile: omega_k bin centers with the per-bin magnitude
/// sums (raw) and their log(1 + .) transform used for reporting.
struct SpectrumProfile {
  std::vector<double> omega;       // k = 0 .. M/2 - 1
  std::vector<double> raw;         // sum of |F| over the annulus round(r) == k
  std::vector<double> log_values;  // log1p(raw)
};

/// Discrete stand-in for the polar integral: bins every spectrum element by
/// its rounded distance from the DC-centered origin and sums magnitudes.
/// Elements rounding past M/2 - 1 (the square's corners) are outside the
/// profile. Input must be square and DC-centered.
inline SpectrumProfile azimuthal_integration(const SpectrumMatrix& centered) {
  const Index m = centered.rows();
  require(centered.cols() == m, "azimuthal integration: expected a square spectrum, got ",
          centered.rows(), "x", centered.cols());
  const Index bins = m / 2;
  require(bins >= 1, "azimuthal integration: spectrum too small");
  SpectrumProfile profile;
  profile.omega.resize(static_cast<std::size_t>(bins));
  profile.raw.assign(static_cast<std::size_t>(bins), 0.0);
  const Index c = m / 2;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      const double radius = std::hypot(static_cast<double>(i - c), static_cast<double>(j - c));
      const Index k = static_cast<Index>(std::llround(radius));
      if (k < bins) profile.raw[static_cast<std::size_t>(k)] += std::abs(centered(i, j));
    }
  profile.log_values.resize(static_cast<std::size_t>(bins));
  for (Index k = 0; k < bins; ++k) {
    profile.omega[static_cast<std::size_t>(k)] = static_cast<double>(k);
    profile.log_values[static_cast<std::size_t>(k)] =
        std::log1p(profile.raw[static_cast<std::size_t>(k)]);
  }
  return profile;
}

/// Largest centered square of a 2-D image.
template <typename S>
Tensor<S> center_crop_square(const Tensor<S>& image) {
  require(image.ndim() == 2, "center_crop_square: expected a 2-D image");
  const Index h = image.dim(0), w = image.dim(1);
  const Index side = std::min(h, w);
  if (h == w) return image.clone();
  const Index top = (h - side) / 2, left = (w - side) / 2;
  Tensor<S> out = Tensor<S>::zeros({side, side});
  for (Index i = 0; i < side; ++i)
    for (Index j = 0; j < side; ++j) out.data()[i * side + j] = image.at((top + i) * w + left + j);
  return out;
}

/// Dataset-averaged profile: each image is square-cropped, transformed,
/// DC-centered, azimuthally integrated, and the log profiles are averaged.
template <typename S>
SpectrumProfile spectrum_profile(const std::vector<Tensor<S>>& images) {
  require(!images.empty(), "spectrum profile: no images");
  SpectrumProfile acc;
  Index side = -1;
  for (const auto& img : images) {
    Tensor<S> sq = center_crop_square(img);
    if (side < 0) side = sq.dim(0);
    require(sq.dim(0) == side, "spectrum profile: mixed image sizes, ", sq.dim(0), " vs ",
            side);
    SpectrumProfile p = azimuthal_integration(fftshift(fft2d(sq)));
    if (acc.omega.empty()) {
      acc = p;
    } else {
      for (std::size_t k = 0; k < p.raw.size(); ++k) {
        acc.raw[k] += p.raw[k];
        acc.log_values[k] += p.log_values[k];
      }
    }
  }
  const double n = static_cast<double>(images.size());
  for (std::size_t k = 0; k < acc.raw.size(); ++k) {
    acc.raw[k] /= n;
    acc.log_values[k] /= n;
  }
  return acc;
}

inline void write_spectrum_csv(const std::string& path, const SpectrumProfile& profile) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "spectrum csv: cannot open '", path, "'");
  out << "omega_k,mean_log_magnitude\n";
  char buf[64];
  for (std::size_t k = 0; k < profile.omega.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%g,%.10g\n", profile.omega[k], profile.log_values[k]);
    out << buf;
  }
  require(out.good(), "spectrum csv: write failed for '", path, "'");
}

}  // namespace cones
