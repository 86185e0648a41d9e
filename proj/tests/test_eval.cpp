#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "cones/metrics.hpp"
#include "cones/random.hpp"
#include "cones/spectral.hpp"
#include "cones/wilcoxon.hpp"

using namespace cones;

TEST_CASE("psnr closed forms") {
  auto zeros = Tensor<double>::zeros({8, 8});
  auto r = psnr(zeros, zeros);
  CHECK(r.exact_match);
  CHECK(r.db == kPsnrExactSentinel);

  auto off = Tensor<double>::full({8, 8}, 0.1);  // MSE 0.01 -> 20 dB
  CHECK(psnr(zeros, off).db == doctest::Approx(20.0).epsilon(1e-9));
  auto one = Tensor<double>::full({8, 8}, 1.0);  // MSE 1 -> 0 dB
  CHECK(psnr(zeros, one).db == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(psnr(zeros, Tensor<double>::zeros({4, 4})), Error);
}

TEST_CASE("psnr decreases strictly with added noise variance") {
  Rng rng(2024);
  auto img = Tensor<double>::uniform({16, 16}, rng, 0.2, 0.8);
  double prev = 1e9;
  for (double sigma : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    auto noisy = img.clone();
    Rng nrng(7);  // same noise shape, growing amplitude
    for (Index i = 0; i < noisy.numel(); ++i) noisy.data()[i] += sigma * nrng.normal();
    const double db = psnr(img, noisy).db;
    CHECK(db < prev);
    prev = db;
  }
}

namespace {

/// Direct sliding-window SSIM, written independently of the shipped
/// separable implementation.
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const Index h = a.dim(0), w = a.dim(1);
  const int win = 11;
  const double sigma = 1.5;
  double weights[11][11];
  double wsum = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      weights[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) /
                               (2.0 * sigma * sigma));
      wsum += weights[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) weights[i][j] /= wsum;

  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  long count = 0;
  for (Index top = 0; top + win <= h; ++top)
    for (Index left = 0; left + win <= w; ++left) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double x = a.at((top + i) * w + left + j);
          const double y = b.at((top + i) * w + left + j);
          mx += weights[i][j] * x;
          my += weights[i][j] * y;
          mxx += weights[i][j] * x * x;
          myy += weights[i][j] * y * y;
          mxy += weights[i][j] * x * y;
        }
      const double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("ssim identity, symmetry, oracle agreement") {
  Rng rng(11);
  auto a = Tensor<double>::uniform({32, 32}, rng, 0.0, 1.0);
  auto b = Tensor<double>::uniform({32, 32}, rng, 0.0, 1.0);

  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-8);

  // structured pair too, not just noise
  auto s = Tensor<double>::zeros({32, 32});
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 32; ++j)
      s.data()[i * 32 + j] = 0.5 + 0.5 * std::sin(0.3 * i) * std::cos(0.2 * j);
  auto t = s.clone();
  for (Index i = 0; i < t.numel(); ++i) t.data()[i] = std::min(1.0, t.at(i) * 0.9 + 0.05);
  CHECK(std::abs(ssim(s, t) - ssim_oracle(s, t)) < 1e-8);

  CHECK_THROWS_AS(ssim(Tensor<double>::zeros({8, 8}), Tensor<double>::zeros({8, 8})), Error);
}

TEST_CASE("crop_to_bbox") {
  Rng rng(4);
  auto img = Tensor<double>::uniform({12, 10}, rng, 0, 1);

  auto full = Tensor<double>::full({12, 10}, 1.0);
  CHECK(crop_to_bbox(img, full).values() == img.values());

  auto single = Tensor<double>::zeros({12, 10});
  single.data()[5 * 10 + 7] = 1.0;
  auto c = crop_to_bbox(img, single);
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.at(0) == img.at(5 * 10 + 7));

  // random blob: extents must match a brute-force scan
  auto mask = Tensor<double>::zeros({12, 10});
  for (int t = 0; t < 12; ++t)
    mask.data()[rng.uniform_int(12) * 10 + rng.uniform_int(10)] = 1.0;
  Index r0 = 12, r1 = -1, c0 = 10, c1 = -1;
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 10; ++j)
      if (mask.at(i * 10 + j) > 0.5) {
        r0 = std::min(r0, i);
        r1 = std::max(r1, i);
        c0 = std::min(c0, j);
        c1 = std::max(c1, j);
      }
  auto cropped = crop_to_bbox(img, mask);
  CHECK(cropped.dim(0) == r1 - r0 + 1);
  CHECK(cropped.dim(1) == c1 - c0 + 1);

  CHECK_THROWS_WITH_AS(crop_to_bbox(img, Tensor<double>::zeros({12, 10})),
                       doctest::Contains("empty mask"), Error);
}

TEST_CASE("fft2d: constant image concentrates at DC") {
  for (Index m : {16, 12}) {  // power of two and not
    auto img = Tensor<double>::full({m, m}, 0.7);
    auto spec = fft2d(img);
    CHECK(std::abs(spec(0, 0) - Complex(0.7 * m * m, 0)) < 1e-9);
    double off_dc = 0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j)
        if (i || j) off_dc = std::max(off_dc, std::abs(spec(i, j)));
    CHECK(off_dc < 1e-9);
  }
}

TEST_CASE("fft2d: integer-frequency cosine lands in two bins") {
  const Index m = 32, f = 5;
  auto img = Tensor<double>::zeros({m, m});
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      img.data()[i * m + j] = std::cos(2.0 * 3.14159265358979323846 * f * j / m);
  auto spec = fft2d(img);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      const double mag = std::abs(spec(i, j));
      if (i == 0 && (j == f || j == m - f))
        CHECK(mag == doctest::Approx(m * m / 2.0).epsilon(1e-9));
      else
        CHECK(mag < 1e-8);
    }
}

TEST_CASE("fft2d satisfies Parseval") {
  for (Index m : {64, 48}) {
    Rng rng(m);
    auto img = Tensor<double>::uniform({m, m}, rng, -1, 1);
    double spatial = 0;
    for (Index i = 0; i < img.numel(); ++i) spatial += img.at(i) * img.at(i);
    auto spec = fft2d(img);
    double freq = 0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) freq += std::norm(spec(i, j));
    freq /= static_cast<double>(m * m);
    CHECK(std::abs(spatial - freq) / spatial < 1e-6);
  }
}

TEST_CASE("azimuthal integration equals the brute-force loop exactly") {
  for (int t = 0; t < 5; ++t) {
    Rng rng(100 + t);
    auto img = Tensor<double>::uniform({64, 64}, rng, -1, 1);
    auto centered = fftshift(fft2d(img));
    auto profile = azimuthal_integration(centered);
    REQUIRE(profile.raw.size() == 32);

    std::vector<double> brute(32, 0.0);
    const Index c = 32;
    for (Index i = 0; i < 64; ++i)
      for (Index j = 0; j < 64; ++j) {
        const double r = std::sqrt(static_cast<double>((i - c) * (i - c)) +
                                   static_cast<double>((j - c) * (j - c)));
        const auto k = static_cast<Index>(std::llround(r));
        if (k < 32) brute[static_cast<std::size_t>(k)] += std::abs(centered(i, j));
      }
    for (std::size_t k = 0; k < 32; ++k) CHECK(profile.raw[k] == brute[k]);
    for (std::size_t k = 0; k < 32; ++k)
      CHECK(profile.log_values[k] == std::log1p(profile.raw[k]));
  }
}

TEST_CASE("azimuthal integration: constant and impulse images") {
  auto constant = Tensor<double>::full({32, 32}, 0.4);
  auto p = azimuthal_integration(fftshift(fft2d(constant)));
  CHECK(p.raw[0] == doctest::Approx(0.4 * 32 * 32).epsilon(1e-12));
  for (std::size_t k = 1; k < p.raw.size(); ++k) {
    CHECK(p.raw[k] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(p.log_values[k] == doctest::Approx(0.0).epsilon(1e-9));
  }

  // impulse -> |F| = 1 everywhere -> profile equals the annulus bin counts
  auto impulse = Tensor<double>::zeros({32, 32});
  impulse.data()[0] = 1.0;
  auto pi = azimuthal_integration(fftshift(fft2d(impulse)));
  std::vector<long> counts(16, 0);
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 32; ++j) {
      const double r = std::hypot(static_cast<double>(i - 16), static_cast<double>(j - 16));
      const auto k = static_cast<Index>(std::llround(r));
      if (k < 16) counts[static_cast<std::size_t>(k)]++;
    }
  for (std::size_t k = 0; k < 16; ++k)
    CHECK(pi.raw[k] == doctest::Approx(static_cast<double>(counts[k])).epsilon(1e-9));

  // completeness: annulus sums add up to the masked spectrum total
  Rng rng(9);
  auto img = Tensor<double>::uniform({32, 32}, rng, -1, 1);
  auto centered = fftshift(fft2d(img));
  auto prof = azimuthal_integration(centered);
  double total_in_mask = 0;
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 32; ++j) {
      const double r = std::hypot(static_cast<double>(i - 16), static_cast<double>(j - 16));
      if (std::llround(r) < 16) total_in_mask += std::abs(centered(i, j));
    }
  double prof_sum = 0;
  for (double v : prof.raw) prof_sum += v;
  CHECK(prof_sum == doctest::Approx(total_in_mask).epsilon(1e-12));

  SpectrumMatrix bad(4, 6);
  CHECK_THROWS_AS(azimuthal_integration(bad), Error);
}

TEST_CASE("spectrum profiles over datasets") {
  Rng rng(31);
  auto a = Tensor<double>::uniform({32, 32}, rng, -1, 1);
  auto b = Tensor<double>::uniform({32, 32}, rng, -1, 1);

  auto pa = spectrum_profile<double>({a});
  auto single = azimuthal_integration(fftshift(fft2d(a)));
  CHECK(pa.log_values == single.log_values);

  auto twice = spectrum_profile<double>({a, a});
  for (std::size_t k = 0; k < twice.log_values.size(); ++k)
    CHECK(twice.log_values[k] == doctest::Approx(pa.log_values[k]).epsilon(1e-12));

  auto pb = spectrum_profile<double>({b});
  auto both = spectrum_profile<double>({a, b});
  for (std::size_t k = 0; k < both.log_values.size(); ++k)
    CHECK(both.log_values[k] ==
          doctest::Approx(0.5 * (pa.log_values[k] + pb.log_values[k])).epsilon(1e-12));

  // non-square images are center-cropped to the largest square
  auto wide = Tensor<double>::zeros({32, 40});
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 40; ++j) wide.data()[i * 40 + j] = a.at(i * 32 + (j % 32));
  auto manual = center_crop_square(wide);
  CHECK(spectrum_profile<double>({wide}).log_values ==
        azimuthal_integration(fftshift(fft2d(manual))).log_values);

  CHECK_THROWS_WITH_AS((spectrum_profile<double>(
                           {a, Tensor<double>::zeros({16, 16})})),
                       doctest::Contains("mixed"), Error);
}

namespace {

/// Independent exhaustive sign enumeration for the Wilcoxon oracle.
WilcoxonResult wilcoxon_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const int n = static_cast<int>(d.size());
  std::vector<int> idx(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<std::int64_t> rank2(d.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && std::abs(d[idx[j]]) == std::abs(d[idx[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) rank2[idx[k]] = static_cast<std::int64_t>(i + 1 + j);
    i = j;
  }
  std::int64_t w2p = 0, t2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    t2 += rank2[i];
    if (d[i] > 0) w2p += rank2[i];
  }
  const std::int64_t wmin = std::min(w2p, t2 - w2p), wmax = std::max(w2p, t2 - w2p);
  std::uint64_t le = 0, ge = 0;
  const std::uint64_t total = 1ull << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    std::int64_t s = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1ull << i)) s += rank2[static_cast<std::size_t>(i)];
    if (s <= wmin) ++le;
    if (s >= wmax) ++ge;
  }
  WilcoxonResult r;
  r.statistic = static_cast<double>(wmin) / 2.0;
  r.p_value = std::min(1.0, static_cast<double>(le + ge) / static_cast<double>(total));
  r.n_used = n;
  r.exact = true;
  return r;
}

}  // namespace

TEST_CASE("wilcoxon signed-rank closed cases") {
  std::vector<double> a{2, 3, 4, 5, 6}, b{1, 2, 3, 4, 5};  // all positive differences
  auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.statistic == 0.0);  // W- = 0
  CHECK(r.n_used == 5);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(2.0 / 32.0));

  CHECK_THROWS_WITH_AS(wilcoxon_signed_rank(a, a), doctest::Contains("degenerate"), Error);
  std::vector<double> s1{1, 2, 3}, s2{0, 0, 0};
  CHECK_THROWS_AS(wilcoxon_signed_rank(s1, s2), Error);  // n < 5
}

TEST_CASE("wilcoxon matches exhaustive enumeration exactly for n <= 12") {
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    const int n = 8 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(rng.uniform(0, 1));
      // quantize to force ties occasionally
      b.push_back(a.back() + std::round(rng.uniform(-3, 3)) * 0.125);
    }
    bool all_zero = true;
    int nonzero = 0;
    for (int i = 0; i < n; ++i)
      if (a[i] != b[i]) {
        all_zero = false;
        ++nonzero;
      }
    if (all_zero || nonzero < 5) continue;
    auto got = wilcoxon_signed_rank(a, b);
    auto want = wilcoxon_oracle(a, b);
    CHECK(got.statistic == want.statistic);
    CHECK(got.p_value == want.p_value);  // exact rational counts, same doubles
  }
}

TEST_CASE("wilcoxon normal approximation tracks the exact tail") {
  Rng rng(123);
  std::vector<double> a, b;
  for (int i = 0; i < 18; ++i) {
    a.push_back(rng.uniform(0, 1));
    b.push_back(rng.uniform(0, 1));
  }
  auto approx = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(approx.exact);
  auto exact = wilcoxon_oracle(a, b);  // enumeration still feasible at n=18
  CHECK(approx.p_value == doctest::Approx(exact.p_value).epsilon(0.15));
  CHECK(approx.p_value > 0.0);
  CHECK(approx.p_value <= 1.0);
}
