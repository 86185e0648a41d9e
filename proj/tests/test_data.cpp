#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "cones/config.hpp"
#include "cones/dataset.hpp"
#include "cones/phantom.hpp"
#include "cones/png_io.hpp"
#include "cones/tensor_io.hpp"

using namespace cones;

namespace {
std::string temp_dir(const std::string& name) {
  const std::string dir = "/tmp/cones_test_" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("phantom generation is deterministic in (seed, index)") {
  PhantomSpec spec;
  auto a = generate_phantom<float>(spec, 3);
  auto b = generate_phantom<float>(spec, 3);
  CHECK(a.source.values() == b.source.values());
  CHECK(a.target.values() == b.target.values());
  CHECK(a.mask.values() == b.mask.values());

  auto c = generate_phantom<float>(spec, 4);
  CHECK(a.target.values() != c.target.values());

  PhantomSpec other = spec;
  other.seed = spec.seed + 1;
  CHECK(generate_phantom<float>(other, 3).target.values() != a.target.values());
}

TEST_CASE("phantom samples satisfy their constructive guarantees") {
  PhantomSpec spec;
  for (Index idx = 0; idx < 10; ++idx) {
    auto s = generate_phantom<float>(spec, idx);
    // mask non-empty, binary
    double mask_sum = 0;
    for (Index i = 0; i < s.mask.numel(); ++i) {
      CHECK((s.mask.at(i) == 0.0f || s.mask.at(i) == 1.0f));
      mask_sum += s.mask.at(i);
    }
    CHECK(mask_sum > 0);
    // intensities normalized
    for (Index i = 0; i < s.source.numel(); ++i) {
      CHECK(s.source.at(i) <= 1.0f);
      CHECK(s.source.at(i) >= -1.0f);
    }
    for (Index i = 0; i < s.target.numel(); ++i) {
      CHECK(s.target.at(i) <= 1.0f);
      CHECK(s.target.at(i) >= -1.0f);
    }
  }
}

TEST_CASE("source and target share structural edges") {
  PhantomSpec spec;
  double corr_sum = 0;
  for (Index idx = 0; idx < 20; ++idx) {
    auto s = generate_phantom<float>(spec, idx);
    const Index n = spec.size;
    // per-channel gradient magnitudes averaged over source channels (the
    // channels carry opposite contrast polarities) vs the target's
    std::vector<double> gs, gt;
    for (Index i = 0; i + 1 < n; ++i)
      for (Index j = 0; j + 1 < n; ++j) {
        double g = 0;
        for (Index c = 0; c < spec.n_source; ++c) {
          const double v = s.source.at((c * n + i) * n + j);
          g += std::hypot(s.source.at((c * n + i) * n + j + 1) - v,
                          s.source.at((c * n + i + 1) * n + j) - v);
        }
        gs.push_back(g / static_cast<double>(spec.n_source));
        const double t0 = s.target.at(i * n + j);
        gt.push_back(std::hypot(s.target.at(i * n + j + 1) - t0,
                                s.target.at((i + 1) * n + j) - t0));
      }
    double mean_s = 0, mean_t = 0;
    for (std::size_t k = 0; k < gs.size(); ++k) {
      mean_s += gs[k];
      mean_t += gt[k];
    }
    mean_s /= gs.size();
    mean_t /= gt.size();
    double num = 0, den_s = 0, den_t = 0;
    for (std::size_t k = 0; k < gs.size(); ++k) {
      num += (gs[k] - mean_s) * (gt[k] - mean_t);
      den_s += (gs[k] - mean_s) * (gs[k] - mean_s);
      den_t += (gt[k] - mean_t) * (gt[k] - mean_t);
    }
    corr_sum += num / std::sqrt(den_s * den_t);
  }
  CHECK(corr_sum / 20.0 > 0.5);
}

TEST_CASE("channel transfer curves are distinct") {
  const int samples = 101;
  for (Index c1 = 0; c1 < 6; ++c1)
    for (Index c2 = c1 + 1; c2 < 6; ++c2) {
      std::vector<double> a, b;
      for (int i = 0; i < samples; ++i) {
        const double v = i / 100.0;
        a.push_back(phantom_detail::transfer(v, c1));
        b.push_back(phantom_detail::transfer(v, c2));
      }
      double ma = 0, mb = 0;
      for (int i = 0; i < samples; ++i) {
        ma += a[static_cast<std::size_t>(i)];
        mb += b[static_cast<std::size_t>(i)];
      }
      ma /= samples;
      mb /= samples;
      double num = 0, da = 0, db = 0;
      for (int i = 0; i < samples; ++i) {
        num += (a[static_cast<std::size_t>(i)] - ma) * (b[static_cast<std::size_t>(i)] - mb);
        da += (a[static_cast<std::size_t>(i)] - ma) * (a[static_cast<std::size_t>(i)] - ma);
        db += (b[static_cast<std::size_t>(i)] - mb) * (b[static_cast<std::size_t>(i)] - mb);
      }
      CHECK(num / std::sqrt(da * db) < 0.99);
    }
}

TEST_CASE("normalize_intensity") {
  auto img = Tensor<float>::from({4}, {0.0f, 0.5f, 1.0f, 1.7f});
  auto out = normalize_intensity(img, 0.0, 1.0);
  CHECK(out.at(0) == doctest::Approx(-1.0));
  CHECK(out.at(1) == doctest::Approx(0.0));
  CHECK(out.at(2) == doctest::Approx(1.0));
  CHECK(out.at(3) == doctest::Approx(1.0));  // clamped
  CHECK_THROWS_AS(normalize_intensity(img, 1.0, 1.0), Error);
}

TEST_CASE("tensor files round-trip bit for bit") {
  const std::string dir = temp_dir("cnsf");
  Rng rng(5);
  auto t32 = Tensor<float>::uniform({3, 5, 7}, rng, -2, 2);
  write_tensor(dir + "/a.cnsf", t32);
  auto back = read_tensor<float>(dir + "/a.cnsf");
  CHECK(back.shape() == t32.shape());
  CHECK(back.values() == t32.values());

  auto t64 = Tensor<double>::uniform({4, 4}, rng, -2, 2);
  write_tensor(dir + "/b.cnsf", t64);
  CHECK(read_tensor<double>(dir + "/b.cnsf").values() == t64.values());

  // wrong dtype request
  CHECK_THROWS_WITH_AS(read_tensor<float>(dir + "/b.cnsf"), doctest::Contains("dtype"), Error);

  // truncated payload
  auto bytes = slurp(dir + "/a.cnsf");
  std::ofstream trunc(dir + "/trunc.cnsf", std::ios::binary);
  trunc.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size() - 9));
  trunc.close();
  CHECK_THROWS_WITH_AS(read_tensor<float>(dir + "/trunc.cnsf"), doctest::Contains("truncated"),
                       Error);

  // bad magic
  bytes[0] = 'X';
  std::ofstream bad(dir + "/bad.cnsf", std::ios::binary);
  bad.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  bad.close();
  CHECK_THROWS_WITH_AS(read_tensor<float>(dir + "/bad.cnsf"), doctest::Contains("magic"), Error);
}

TEST_CASE("dataset layout round-trips and regenerates identically") {
  const std::string root = temp_dir("dataset");
  DatasetInfo info;
  info.spec.size = 16;
  info.spec.n_source = 2;
  info.n_train = 3;
  info.n_val = 2;
  write_dataset<float>(root, info);

  auto loaded = read_dataset_manifest(root);
  CHECK(loaded.spec.size == 16);
  CHECK(loaded.n_train == 3);

  auto train_dirs = list_sample_dirs(root, "train");
  auto val_dirs = list_sample_dirs(root, "val");
  CHECK(train_dirs.size() == 3);
  CHECK(val_dirs.size() == 2);

  auto split = load_split<float>(root, "val");
  CHECK(split.size() == 2);
  CHECK(split[0].source.shape() == Shape{2, 16, 16});
  // val index v corresponds to phantom index n_train + v
  auto expect = generate_phantom<float>(info.spec, 3);
  CHECK(split[0].target.values() == expect.target.values());

  // regeneration writes identical bytes
  const std::string root2 = temp_dir("dataset2");
  write_dataset<float>(root2, info);
  CHECK(slurp(root + "/train/1/tgt_0.cnsf") == slurp(root2 + "/train/1/tgt_0.cnsf"));
  CHECK(slurp(root + "/manifest.txt") == slurp(root2 + "/manifest.txt"));
}

TEST_CASE("png quantization rule") {
  CHECK(png_quantize_16(-1.0) == 0);
  CHECK(png_quantize_16(1.0) == 65535);
  CHECK(png_quantize_16(0.0) == 32768);  // round half up
  CHECK(png_quantize_16(-2.0) == 0);     // clamped
  CHECK(png_quantize_16(2.0) == 65535);
}

namespace {

/// Minimal reader for the PNGs this project writes (16-bit gray, filter 0,
/// stored deflate blocks). Test-side only.
std::vector<std::uint16_t> parse_gray16_png(const std::string& path, Index& h, Index& w) {
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 8);
  const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  for (int i = 0; i < 8; ++i) REQUIRE(bytes[static_cast<std::size_t>(i)] == sig[i]);
  auto u32 = [&](std::size_t at) {
    return (static_cast<std::uint32_t>(bytes[at]) << 24) |
           (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[at + 3]);
  };
  std::size_t at = 8;
  std::vector<std::uint8_t> idat;
  h = w = 0;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t len = u32(at);
    const std::string type(bytes.begin() + static_cast<std::ptrdiff_t>(at + 4),
                           bytes.begin() + static_cast<std::ptrdiff_t>(at + 8));
    const std::size_t data = at + 8;
    if (type == "IHDR") {
      w = static_cast<Index>(u32(data));
      h = static_cast<Index>(u32(data + 4));
      REQUIRE(bytes[data + 8] == 16);  // bit depth
      REQUIRE(bytes[data + 9] == 0);   // grayscale
    } else if (type == "IDAT") {
      idat.insert(idat.end(), bytes.begin() + static_cast<std::ptrdiff_t>(data),
                  bytes.begin() + static_cast<std::ptrdiff_t>(data + len));
    }
    at = data + len + 4;  // skip crc
  }
  // zlib with stored blocks
  REQUIRE(idat.size() > 6);
  std::vector<std::uint8_t> raw;
  std::size_t p = 2;
  while (true) {
    const std::uint8_t header = idat[p++];
    REQUIRE((header & 6) == 0);  // stored
    const std::size_t n = idat[p] | (idat[p + 1] << 8);
    p += 4;
    raw.insert(raw.end(), idat.begin() + static_cast<std::ptrdiff_t>(p),
               idat.begin() + static_cast<std::ptrdiff_t>(p + n));
    p += n;
    if (header & 1) break;
  }
  std::vector<std::uint16_t> px;
  std::size_t rp = 0;
  for (Index i = 0; i < h; ++i) {
    REQUIRE(raw[rp] == 0);  // filter none
    ++rp;
    for (Index j = 0; j < w; ++j) {
      px.push_back(static_cast<std::uint16_t>((raw[rp] << 8) | raw[rp + 1]));
      rp += 2;
    }
  }
  return px;
}

}  // namespace

TEST_CASE("png export round-trips through a reference parse") {
  const std::string dir = temp_dir("png");
  Rng rng(8);
  auto img = Tensor<float>::uniform({20, 31}, rng, -1, 1);
  img.data()[0] = -1.0f;
  img.data()[1] = 1.0f;
  img.data()[2] = 0.0f;
  export_png(img, dir + "/img.png");

  Index h = 0, w = 0;
  auto px = parse_gray16_png(dir + "/img.png", h, w);
  REQUIRE(h == 20);
  REQUIRE(w == 31);
  for (Index i = 0; i < img.numel(); ++i)
    CHECK(px[static_cast<std::size_t>(i)] == png_quantize_16(img.at(i)));

  CHECK_THROWS_AS(export_png(Tensor<float>::zeros({2, 2, 2}), dir + "/bad.png"), Error);
}

TEST_CASE("config files parse, serialize, and reject unknown keys") {
  auto kv = KeyValues::parse_string(
      "# comment\n"
      "steps = 120\n"
      "lr=0.0004\n"
      "mode=shift\n"
      "flag = true\n");
  CHECK(kv.get_long("steps") == 120);
  CHECK(kv.get_double("lr") == doctest::Approx(4e-4));
  CHECK(kv.get("mode") == "shift");
  CHECK(kv.get_bool("flag"));
  CHECK(kv.get_long_or("missing", 7) == 7);
  kv.fail_on_unconsumed("test config");  // everything consumed above

  auto kv2 = KeyValues::parse_string("a=1\nmystery=2\n");
  (void)kv2.get_long("a");
  CHECK_THROWS_WITH_AS(kv2.fail_on_unconsumed("test config"), doctest::Contains("mystery"),
                       Error);

  CHECK_THROWS_AS(KeyValues::parse_string("not a pair\n"), Error);
  CHECK_THROWS_AS(kv.get("nope"), Error);
  CHECK_THROWS_AS(kv.get_long("mode"), Error);

  KeyValues out;
  out.set("b", "2");
  out.set_double("x", 0.5);
  out.set_bool("flag", false);
  CHECK(out.serialize() == "b=2\nx=0.5\nflag=false\n");

  CHECK(parse_int_list("1,1,2,1") == std::vector<int>{1, 1, 2, 1});
  CHECK(format_int_list({2, 4, 23, 3}) == "2,4,23,3");
  CHECK_THROWS_AS(parse_int_list("1,x"), Error);
}
