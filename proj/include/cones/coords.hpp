#pragma once

#include <cmath>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

/// Normalized pixel-center coordinates over an image lattice. Each axis of
/// length N maps index i to (2*i + 1)/N - 1, so coordinates live in (-1, 1)
/// and are symmetric under flips.
struct CoordGrid {
  Index height = 0;
  Index width = 0;
  std::vector<double> coords;  // per pixel, row-major: (row_coord, col_coord)

  static constexpr int kDims = 2;
};

inline double axis_coord(Index i, Index n) {
  return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

inline CoordGrid make_coord_grid(Index height, Index width) {
  require(height >= 1 && width >= 1, "coord grid: dimensions must be positive, got ", height,
          "x", width);
  CoordGrid g;
  g.height = height;
  g.width = width;
  g.coords.resize(static_cast<std::size_t>(height * width * CoordGrid::kDims));
  std::size_t at = 0;
  for (Index r = 0; r < height; ++r) {
    const double rc = axis_coord(r, height);
    for (Index c = 0; c < width; ++c) {
      g.coords[at++] = rc;
      g.coords[at++] = axis_coord(c, width);
    }
  }
  return g;
}

/// Sinusoidal feature map settings. `m` counts features per coordinate
/// component (m/2 sin/cos pairs at frequencies pi * 2^j); with m = 0 and
/// include_raw the features are the raw coordinates, which is the
/// encoding-free ablation.
struct EncodingConfig {
  int m = 6;
  bool include_raw = false;

  Index features_per_component() const { return m; }
  Index feature_dim() const {
    return CoordGrid::kDims * static_cast<Index>(m) +
           (include_raw ? CoordGrid::kDims : 0);
  }
};

/// Encodes every grid point: for each scalar coordinate x the features are
/// [sin(pi x), cos(pi x), sin(2 pi x), cos(2 pi x), sin(4 pi x), ...], i.e.
/// m/2 octaves, components concatenated, optionally followed by the raw
/// coordinates. Output shape is [H*W, feature_dim].
template <typename S>
Tensor<S> positional_encoding(const CoordGrid& grid, const EncodingConfig& cfg) {
  require(cfg.m >= 0 && cfg.m % 2 == 0, "positional encoding: m must be even, got ", cfg.m);
  const Index dims = CoordGrid::kDims;
  const Index fdim = cfg.feature_dim();
  require(fdim > 0, "positional encoding: no features (m = 0 and raw coordinates disabled)");
  const Index pixels = grid.height * grid.width;
  constexpr double kPi = 3.14159265358979323846;

  Tensor<S> out = Tensor<S>::zeros({pixels, fdim});
  S* ov = out.data();
  for (Index p = 0; p < pixels; ++p) {
    S* row = ov + p * fdim;
    Index at = 0;
    for (Index d = 0; d < dims; ++d) {
      const double x = grid.coords[static_cast<std::size_t>(p * dims + d)];
      double freq = kPi;
      for (int j = 0; j < cfg.m / 2; ++j) {
        row[at++] = static_cast<S>(std::sin(freq * x));
        row[at++] = static_cast<S>(std::cos(freq * x));
        freq *= 2.0;
      }
    }
    if (cfg.include_raw)
      for (Index d = 0; d < dims; ++d)
        row[at++] = static_cast<S>(grid.coords[static_cast<std::size_t>(p * dims + d)]);
  }
  return out;
}

/// Encodes a single coordinate vector; handy for tests and oracles.
template <typename S>
std::vector<S> encode_point(const std::vector<double>& x, const EncodingConfig& cfg) {
  CoordGrid g;
  g.height = 1;
  g.width = 1;
  g.coords = x;
  require(static_cast<Index>(x.size()) == CoordGrid::kDims,
          "positional encoding: expected ", CoordGrid::kDims, " components");
  Tensor<S> t = positional_encoding<S>(g, cfg);
  return t.values();
}

}  // namespace cones
