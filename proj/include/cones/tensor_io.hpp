#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "cones/tensor.hpp"

namespace cones {

// Raw tensor container: magic "CNSF", then little-endian u32 fields
// version (= 1), dtype code (0 = f32, 1 = f64), ndim, dims..., followed by
// the row-major little-endian payload.
inline constexpr std::uint32_t kCnsfVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

template <typename S>
constexpr std::uint32_t cnsf_dtype_code() {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>,
                "unsupported scalar type");
  return std::is_same_v<S, float> ? 0u : 1u;
}

template <typename S>
void write_tensor(const std::string& path, const Tensor<S>& t) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "tensor file: cannot open '", path, "' for writing");
  out.write("CNSF", 4);
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  put_u32(kCnsfVersion);
  put_u32(cnsf_dtype_code<S>());
  put_u32(static_cast<std::uint32_t>(t.ndim()));
  for (Index d : t.shape()) put_u32(static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.numel())));
  require(out.good(), "tensor file: write failed for '", path, "'");
}

template <typename S>
Tensor<S> read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "tensor file: cannot open '", path, "'");
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "CNSF", 4) == 0,
          "tensor file '", path, "': bad magic bytes");
  auto get_u32 = [&](const char* what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    require(in.gcount() == 4, "tensor file '", path, "': truncated while reading ", what);
    return v;
  };
  const std::uint32_t version = get_u32("version");
  require(version == kCnsfVersion, "tensor file '", path, "': unsupported version ", version);
  const std::uint32_t dtype = get_u32("dtype");
  require(dtype == cnsf_dtype_code<S>(), "tensor file '", path, "': dtype code ", dtype,
          " does not match the requested scalar type (expected ", cnsf_dtype_code<S>(), ")");
  const std::uint32_t ndim = get_u32("rank");
  require(ndim <= 8, "tensor file '", path, "': implausible rank ", ndim);
  Shape shape;
  Index numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32("dims");
    require(d >= 1 && d <= (1u << 24), "tensor file '", path, "': bad dimension ", d);
    shape.push_back(static_cast<Index>(d));
    numel *= static_cast<Index>(d);
  }
  std::vector<S> values(static_cast<std::size_t>(numel));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(sizeof(S) * values.size()));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(S) * values.size()),
          "tensor file '", path, "': truncated payload");
  in.peek();
  require(in.eof(), "tensor file '", path, "': trailing bytes after payload");
  return Tensor<S>::from(std::move(shape), std::move(values));
}

}  // namespace cones
