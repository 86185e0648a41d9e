#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cones/random.hpp"
#include "cones/tensor.hpp"

namespace cones {

/// Synthetic paired "phantom" settings. Each sample shares one anatomy field
/// across channels; source channels see it through channel-specific monotone
/// transfer curves, the target additionally carries lesion contrast and a
/// high-frequency texture field so spectral fidelity is measurable.
struct PhantomSpec {
  Index size = 64;
  Index n_source = 3;
  Index n_target = 1;
  int min_lesions = 1;
  int max_lesions = 3;
  double texture_amplitude = 0.15;
  double lesion_contrast = 0.6;
  std::uint64_t seed = 1234;
};

template <typename S>
struct PairedSample {
  Tensor<S> source;  // [n_source, H, W]
  Tensor<S> target;  // [n_target, H, W]
  Tensor<S> mask;    // [H, W], lesion foreground in {0, 1}
};

/// Affine map of [lo, hi] onto [-1, 1]; out-of-range inputs are clamped.
template <typename S>
Tensor<S> normalize_intensity(const Tensor<S>& image, double lo, double hi) {
  require(hi > lo, "normalize_intensity: need hi > lo, got [", lo, ", ", hi, "]");
  Tensor<S> out = Tensor<S>::zeros(image.shape());
  const double scale = 2.0 / (hi - lo);
  for (Index i = 0; i < image.numel(); ++i) {
    double v = (static_cast<double>(image.at(i)) - lo) * scale - 1.0;
    out.data()[i] = static_cast<S>(std::min(1.0, std::max(-1.0, v)));
  }
  return out;
}

namespace phantom_detail {

struct Ellipse {
  double cy, cx, ry, rx, angle;
  /// Normalized quadratic form; <= 1 inside the ellipse.
  double q(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double u = ca * dx + sa * dy;
    const double v = -sa * dx + ca * dy;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry);
  }
};

inline double soft_inside(double q, double sharpness) {
  return 1.0 / (1.0 + std::exp((q - 1.0) * sharpness));
}

/// Coarse normal noise bilinearly upsampled to the full lattice.
inline std::vector<double> band_limited_noise(Index n, Index coarse, Rng& rng) {
  std::vector<double> grid(static_cast<std::size_t>((coarse + 1) * (coarse + 1)));
  for (auto& v : grid) v = rng.normal();
  std::vector<double> out(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double fy = static_cast<double>(i) * coarse / static_cast<double>(n);
      const double fx = static_cast<double>(j) * coarse / static_cast<double>(n);
      const Index gy = static_cast<Index>(fy), gx = static_cast<Index>(fx);
      const double ty = fy - gy, tx = fx - gx;
      const auto g = [&](Index a, Index b) {
        return grid[static_cast<std::size_t>(a * (coarse + 1) + b)];
      };
      out[static_cast<std::size_t>(i * n + j)] =
          (1 - ty) * ((1 - tx) * g(gy, gx) + tx * g(gy, gx + 1)) +
          ty * ((1 - tx) * g(gy + 1, gx) + tx * g(gy + 1, gx + 1));
    }
  return out;
}

/// Monotone per-channel transfer curve on [0, 1]. Shapes alternate between
/// power laws and sigmoids, increasing and decreasing, so no channel pair is
/// close to an identity remap (pairwise correlation stays below 0.99).
inline double transfer(double v, Index channel) {
  v = std::min(1.0, std::max(0.0, v));
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  auto s_curve = [&](double k) {
    return (sig(k * (v - 0.5)) - sig(-k / 2)) / (sig(k / 2) - sig(-k / 2));
  };
  switch (channel % 6) {
    case 0: return std::pow(v, 0.5);
    case 1: return 1.0 - s_curve(6.0);
    case 2: return std::pow(v, 2.5);
    case 3: return 1.0 - std::pow(v, 0.8);
    case 4: return s_curve(10.0);
    default: return 1.0 - std::pow(v, 2.2);
  }
}

}  // namespace phantom_detail

/// Deterministic in (spec.seed, index): the same pair regenerates bit for bit.
template <typename S>
PairedSample<S> generate_phantom(const PhantomSpec& spec, Index index) {
  using namespace phantom_detail;
  require(spec.size >= 16, "phantom: size must be >= 16, got ", spec.size);
  require(spec.n_source >= 1 && spec.n_target >= 1, "phantom: need at least one source and one target channel");
  require(spec.min_lesions >= 1 && spec.max_lesions >= spec.min_lesions,
          "phantom: bad lesion count range [", spec.min_lesions, ", ", spec.max_lesions, "]");

  const Index n = spec.size;
  Rng rng(mix_seed(spec.seed, 0x9e3779b9u + static_cast<std::uint64_t>(index) * 2654435761u));

  // head region and anatomy ellipses
  Ellipse head{0.5 * n + rng.uniform(-0.03, 0.03) * n, 0.5 * n + rng.uniform(-0.03, 0.03) * n,
               rng.uniform(0.34, 0.42) * n, rng.uniform(0.34, 0.42) * n, rng.uniform(0.0, 3.14)};
  const int n_ellipses = 3 + static_cast<int>(rng.uniform_int(3));
  std::vector<Ellipse> blobs;
  std::vector<double> blob_w;
  for (int e = 0; e < n_ellipses; ++e) {
    blobs.push_back({rng.uniform(0.3, 0.7) * n, rng.uniform(0.3, 0.7) * n,
                     rng.uniform(0.08, 0.3) * n, rng.uniform(0.08, 0.3) * n,
                     rng.uniform(0.0, 3.14)});
    blob_w.push_back(rng.uniform(0.35, 1.0));
  }
  std::vector<double> noise = band_limited_noise(n, 8, rng);

  // lesions: hard masks plus a smooth contrast bump
  const int lesions =
      spec.min_lesions + static_cast<int>(rng.uniform_int(spec.max_lesions - spec.min_lesions + 1));
  std::vector<Ellipse> lesion_shapes;
  for (int l = 0; l < lesions; ++l)
    lesion_shapes.push_back({rng.uniform(0.32, 0.68) * n, rng.uniform(0.32, 0.68) * n,
                             rng.uniform(0.05, 0.11) * n, rng.uniform(0.05, 0.11) * n,
                             rng.uniform(0.0, 3.14)});

  // oriented high-frequency texture carriers
  struct Carrier {
    double fy, fx, phase;
  };
  std::vector<Carrier> carriers;
  for (int k = 0; k < 2; ++k) {
    const double freq = rng.uniform(static_cast<double>(n) / 6.0, static_cast<double>(n) / 3.5);
    const double th = rng.uniform(0.0, 3.14159);
    carriers.push_back({freq * std::sin(th), freq * std::cos(th), rng.uniform(0.0, 6.28)});
  }

  std::vector<double> anatomy(static_cast<std::size_t>(n * n));
  std::vector<double> lesion_field(static_cast<std::size_t>(n * n), 0.0);
  std::vector<double> texture(static_cast<std::size_t>(n * n), 0.0);
  Tensor<S> mask = Tensor<S>::zeros({n, n});

  double amin = 1e30, amax = -1e30;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double y = i + 0.5, x = j + 0.5;
      const double inside = soft_inside(head.q(y, x), 8.0);
      double a = 0.35 * inside;
      for (std::size_t e = 0; e < blobs.size(); ++e)
        a += blob_w[e] * soft_inside(blobs[e].q(y, x), 5.0);
      a = a * inside + 0.12 * noise[static_cast<std::size_t>(i * n + j)] * inside;
      anatomy[static_cast<std::size_t>(i * n + j)] = a;
      amin = std::min(amin, a);
      amax = std::max(amax, a);

      for (const auto& les : lesion_shapes) {
        const double q = les.q(y, x);
        if (q <= 1.0) mask.data()[i * n + j] = S(1);
        lesion_field[static_cast<std::size_t>(i * n + j)] += std::max(0.0, 1.0 - q);
      }
      double t = 0;
      for (const auto& c : carriers)
        t += std::sin(2.0 * 3.14159265358979323846 * (c.fy * y + c.fx * x) /
                          static_cast<double>(n) +
                      c.phase);
      texture[static_cast<std::size_t>(i * n + j)] = t * inside;
    }

  for (auto& a : anatomy) a = (a - amin) / (amax - amin);

  PairedSample<S> out;
  out.mask = mask;
  out.source = Tensor<S>::zeros({spec.n_source, n, n});
  out.target = Tensor<S>::zeros({spec.n_target, n, n});

  for (Index c = 0; c < spec.n_source; ++c) {
    Tensor<S> ch = Tensor<S>::zeros({n, n});
    for (Index i = 0; i < n * n; ++i)
      ch.data()[i] =
          static_cast<S>(phantom_detail::transfer(anatomy[static_cast<std::size_t>(i)], c));
    ch = normalize_intensity(ch, 0.0, 1.0);
    std::copy(ch.data(), ch.data() + n * n, out.source.data() + c * n * n);
  }
  for (Index c = 0; c < spec.n_target; ++c) {
    Tensor<S> ch = Tensor<S>::zeros({n, n});
    for (Index i = 0; i < n * n; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const double base = phantom_detail::transfer(anatomy[ii], spec.n_source + c);
      const double v = base + spec.lesion_contrast * std::min(1.0, lesion_field[ii]) +
                       spec.texture_amplitude * texture[ii];
      ch.data()[i] = static_cast<S>(v);
    }
    ch = normalize_intensity(ch, 0.0, 1.0);
    std::copy(ch.data(), ch.data() + n * n, out.target.data() + c * n * n);
  }
  return out;
}

}  // namespace cones
