#include "cones/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cones/error.hpp"

namespace cones {

namespace {

std::uint32_t crc32_table_entry(std::uint32_t n) {
  std::uint32_t c = n;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t n = 0; n < 256; ++n) table[n] = crc32_table_entry(n);
    init = true;
  }
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& data) {
  push_u32_be(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body;
  body.insert(body.end(), type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  push_u32_be(out, crc32(body.data(), body.size()));
}

/// zlib stream with stored (uncompressed) deflate blocks.
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> out;
  out.push_back(0x78);
  out.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t n = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final = pos + n == raw.size();
    out.push_back(final ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(n & 0xff));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(~n & 0xff));
    out.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
               raw.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  } while (pos < raw.size());
  push_u32_be(out, adler32(raw.data(), raw.size()));
  return out;
}

}  // namespace

std::uint16_t png_quantize_16(double v) {
  v = std::min(1.0, std::max(-1.0, v));
  const double scaled = (v + 1.0) / 2.0 * 65535.0;
  const double rounded = std::floor(scaled + 0.5);  // round half up
  return static_cast<std::uint16_t>(std::min(65535.0, std::max(0.0, rounded)));
}

void write_gray16_png(const std::string& path, const std::vector<std::uint16_t>& pixels,
                      int height, int width) {
  require(height > 0 && width > 0, "png: empty image ", height, "x", width);
  require(pixels.size() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
          "png: pixel count ", pixels.size(), " does not match ", height, "x", width);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 2 * static_cast<std::size_t>(width)));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < width; ++x) {
      const std::uint16_t p = pixels[static_cast<std::size_t>(y) * width + x];
      raw.push_back(static_cast<std::uint8_t>(p >> 8));
      raw.push_back(static_cast<std::uint8_t>(p & 0xff));
    }
  }

  std::vector<std::uint8_t> out{137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  push_u32_be(ihdr, static_cast<std::uint32_t>(width));
  push_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(16);  // bit depth
  ihdr.push_back(0);   // grayscale
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // adaptive filtering
  ihdr.push_back(0);   // no interlace
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", zlib_stored(raw));
  push_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "png: cannot open '", path, "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require(f.good(), "png: write failed for '", path, "'");
}

void write_line_plot_png(const std::string& path,
                         const std::vector<std::vector<double>>& series, int height,
                         int width) {
  require(!series.empty(), "plot: no series given");
  double lo = 0, hi = 1;
  bool first = true;
  for (const auto& s : series)
    for (double v : s) {
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-12) hi = lo + 1.0;

  std::vector<std::uint16_t> canvas(static_cast<std::size_t>(height) * width, 65535);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.size() < 2) continue;
    const std::uint16_t shade =
        static_cast<std::uint16_t>(series.size() == 1 ? 0 : si * 40000 / (series.size() - 1));
    auto to_y = [&](double v) {
      const double t = (v - lo) / (hi - lo);
      return std::clamp<int>(static_cast<int>((1.0 - t) * (height - 1)), 0, height - 1);
    };
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const int x0 = static_cast<int>(i * static_cast<std::size_t>(width - 1) / (s.size() - 1));
      const int x1 =
          static_cast<int>((i + 1) * static_cast<std::size_t>(width - 1) / (s.size() - 1));
      const int y0 = to_y(s[i]), y1 = to_y(s[i + 1]);
      const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
      for (int t = 0; t <= steps; ++t) {
        const int x = x0 + (x1 - x0) * t / steps;
        const int y = y0 + (y1 - y0) * t / steps;
        canvas[static_cast<std::size_t>(y) * width + x] = shade;
      }
    }
  }
  write_gray16_png(path, canvas, height, width);
}

}  // namespace cones
