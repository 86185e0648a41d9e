#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

/// Maps [-1, 1] onto [0, 65535] with round-half-up; inputs are clamped.
std::uint16_t png_quantize_16(double v);

/// Writes a 16-bit grayscale PNG (uncompressed deflate stream).
void write_gray16_png(const std::string& path, const std::vector<std::uint16_t>& pixels,
                      int height, int width);

/// Exports a 2-D tensor with values in [-1, 1] as a 16-bit grayscale PNG.
template <typename S>
void export_png(const Tensor<S>& image, const std::string& path) {
  require(image.ndim() == 2, "export_png: expected a 2-D single-channel image, got shape ",
          shape_str(image.shape()));
  const int h = static_cast<int>(image.dim(0));
  const int w = static_cast<int>(image.dim(1));
  std::vector<std::uint16_t> px(static_cast<std::size_t>(h) * w);
  for (Index i = 0; i < image.numel(); ++i)
    px[static_cast<std::size_t>(i)] = png_quantize_16(static_cast<double>(image.at(i)));
  write_gray16_png(path, px, h, w);
}

/// Renders value series as a simple line plot and writes it as a PNG.
/// Each series is drawn in a distinct gray level on a white background.
void write_line_plot_png(const std::string& path,
                         const std::vector<std::vector<double>>& series, int height = 240,
                         int width = 480);

}  // namespace cones
