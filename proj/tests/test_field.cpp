#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include <filesystem>

#include "cones/checkpoint.hpp"
#include "cones/coords.hpp"
#include "cones/discriminator.hpp"
#include "cones/field.hpp"
#include "cones/generator.hpp"
#include "cones/hypernet.hpp"

using namespace cones;

TEST_CASE("pixel-center coordinates") {
  CHECK(axis_coord(0, 1) == doctest::Approx(0.0));
  CHECK(axis_coord(0, 2) == doctest::Approx(-0.5));
  CHECK(axis_coord(1, 2) == doctest::Approx(0.5));
  const double expect4[] = {-0.75, -0.25, 0.25, 0.75};
  for (int i = 0; i < 4; ++i) CHECK(axis_coord(i, 4) == doctest::Approx(expect4[i]));

  auto g = make_coord_grid(2, 3);
  CHECK(g.coords.size() == 12);
  // coordinates strictly increasing along each axis
  CHECK(g.coords[0] < g.coords[6 + 0]);  // row coord grows down rows
  CHECK(g.coords[1] < g.coords[3]);      // col coord grows along a row
  CHECK_THROWS_AS(make_coord_grid(0, 4), Error);
}

TEST_CASE("positional encoding worked examples") {
  EncodingConfig cfg;  // m = 6
  auto at0 = encode_point<double>({0.0, 0.0}, cfg);
  REQUIRE(at0.size() == 12);
  const double expect0[] = {0, 1, 0, 1, 0, 1};
  for (int i = 0; i < 6; ++i) {
    CHECK(at0[i] == doctest::Approx(expect0[i]).epsilon(1e-9));
    CHECK(at0[6 + i] == doctest::Approx(expect0[i]).epsilon(1e-9));
  }

  auto at1 = encode_point<double>({1.0, 0.0}, cfg);
  const double expect1[] = {0, -1, 0, 1, 0, 1};
  for (int i = 0; i < 6; ++i) CHECK(at1[i] == doctest::Approx(expect1[i]).epsilon(1e-6));

  auto ath = encode_point<double>({0.5, 0.0}, cfg);
  const double expecth[] = {1, 0, 0, -1, 0, 1};
  for (int i = 0; i < 6; ++i) CHECK(ath[i] == doctest::Approx(expecth[i]).epsilon(1e-6));
}

TEST_CASE("positional encoding contract") {
  EncodingConfig odd;
  odd.m = 5;
  auto grid = make_coord_grid(2, 2);
  CHECK_THROWS_AS(positional_encoding<double>(grid, odd), Error);

  EncodingConfig none;
  none.m = 0;
  CHECK_THROWS_AS(positional_encoding<double>(grid, none), Error);
  none.include_raw = true;  // encoding-free ablation: raw coordinates only
  auto raw = positional_encoding<double>(grid, none);
  CHECK(raw.shape() == Shape{4, 2});

  EncodingConfig with_raw;
  with_raw.include_raw = true;
  CHECK(with_raw.feature_dim() == 14);

  // all features within [-1, 1]
  auto enc = positional_encoding<double>(make_coord_grid(16, 16), with_raw);
  for (Index i = 0; i < enc.numel(); ++i) {
    CHECK(enc.at(i) <= 1.0);
    CHECK(enc.at(i) >= -1.0);
  }
}

TEST_CASE("encoding is injective on the grid") {
  // Component features separate by axis, so grid injectivity reduces to
  // per-axis injectivity; check axes up to 512 and a full small grid.
  for (Index n : {512, 257}) {
    EncodingConfig cfg;
    cfg.m = 2;
    std::set<std::pair<double, double>> seen;
    for (Index i = 0; i < n; ++i) {
      const double x = axis_coord(i, n);
      constexpr double kPi = 3.14159265358979323846;
      seen.insert({std::sin(kPi * x), std::cos(kPi * x)});
    }
    CHECK(seen.size() == static_cast<std::size_t>(n));
  }
  EncodingConfig cfg;
  auto enc = positional_encoding<double>(make_coord_grid(64, 64), cfg);
  std::set<std::vector<double>> rows;
  for (Index p = 0; p < enc.dim(0); ++p)
    rows.insert(std::vector<double>(enc.data() + p * enc.dim(1),
                                    enc.data() + (p + 1) * enc.dim(1)));
  CHECK(rows.size() == 64u * 64u);
}

TEST_CASE("generated parameter counts") {
  const std::vector<int> widths{64, 64, 64, 64, 1};
  CHECK(generated_param_count(widths, ConditioningMode::ShiftModulation, 15) == 256);
  CHECK(generated_param_count(widths, ConditioningMode::ShiftModulation, 29) == 256);
  CHECK(generated_param_count(widths, ConditioningMode::FiLM, 15) == 512);
  // frozen regression values for the full hypernetwork counting formula
  CHECK(generated_param_count(widths, ConditioningMode::FullHyper, 15) == 13569);
  CHECK(generated_param_count(widths, ConditioningMode::FullHyper, 29) == 14465);

  // parameter economy: shift < film < full for any spec with >= 1 hidden layer
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> w;
    const int layers = 2 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < layers; ++i) w.push_back(1 + static_cast<int>(rng.uniform_int(64)));
    const Index in = 1 + rng.uniform_int(32);
    const Index s = generated_param_count(w, ConditioningMode::ShiftModulation, in);
    const Index f = generated_param_count(w, ConditioningMode::FiLM, in);
    const Index h = generated_param_count(w, ConditioningMode::FullHyper, in);
    CHECK(s < f);
    CHECK(f < h);
    CHECK(f == 2 * s);
  }
}

namespace {

Tensor<double> random_rows(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor<double>::uniform({rows, cols}, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("zero modulation reproduces the bare MLP bit for bit") {
  Rng rng(21);
  auto mlp = make_mlp<double>(12, {16, 16, 2}, rng);
  auto encoded = random_rows(40, 12, 7);

  auto bare = mlp_forward(encoded, nullptr, mlp);

  auto shift_plan = make_modulation_plan({16, 16, 2}, 12, ConditioningMode::ShiftModulation);
  auto shift_latent = make_latent_field(
      Tensor<double>::zeros({40, shift_plan.total_channels}), shift_plan);
  auto shifted = mlp_forward_shift(encoded, nullptr, mlp, shift_latent);
  CHECK(shifted.values() == bare.values());

  auto film_plan = make_modulation_plan({16, 16, 2}, 12, ConditioningMode::FiLM);
  auto film_rows = Tensor<double>::zeros({40, film_plan.total_channels});
  for (const auto& ls : film_plan.layers)
    if (ls.alpha_offset >= 0)
      for (Index r = 0; r < 40; ++r)
        for (Index c = 0; c < ls.width; ++c)
          film_rows.data()[r * film_plan.total_channels + ls.alpha_offset + c] = 1.0;
  auto filmed = mlp_forward_film(encoded, nullptr, mlp, make_latent_field(film_rows, film_plan));
  CHECK(filmed.values() == bare.values());
}

TEST_CASE("toy single-layer shift: 0.25 + 0.5 -> 0.75") {
  MlpParams<double> mlp;
  mlp.weights = {Tensor<double>::from({1, 1}, {1.0})};
  mlp.biases = {Tensor<double>::from({1}, {0.0})};
  mlp.hidden_act = mlp.output_act = Activation::Identity;
  auto plan = make_modulation_plan({1}, 1, ConditioningMode::ShiftModulation,
                                   /*modulate_output=*/true);
  auto latent = make_latent_field(Tensor<double>::from({1, 1}, {0.5}), plan);
  auto x = Tensor<double>::from({1, 1}, {0.25});
  CHECK(mlp_forward_shift(x, nullptr, mlp, latent).value() == doctest::Approx(0.75));
}

TEST_CASE("toy single-layer FiLM: alpha 2, beta -1 on input 0.5 -> 0") {
  MlpParams<double> mlp;
  mlp.weights = {Tensor<double>::from({1, 1}, {1.0})};
  mlp.biases = {Tensor<double>::from({1}, {0.0})};
  mlp.hidden_act = mlp.output_act = Activation::Identity;
  auto plan = make_modulation_plan({1}, 1, ConditioningMode::FiLM, true);
  auto latent = make_latent_field(Tensor<double>::from({1, 2}, {2.0, -1.0}), plan);
  auto x = Tensor<double>::from({1, 1}, {0.5});
  CHECK(mlp_forward_film(x, nullptr, mlp, latent).value() == doctest::Approx(0.0));
}

TEST_CASE("toy two-layer full hypernetwork composition") {
  // layer 1: w=2, b=0.5; layer 2: w=-1, b=0.25; identity activations
  auto plan = make_modulation_plan({1, 1}, 1, ConditioningMode::FullHyper);
  REQUIRE(plan.total_channels == 4);
  auto latent = make_latent_field(Tensor<double>::from({1, 4}, {2.0, 0.5, -1.0, 0.25}), plan);
  auto x = Tensor<double>::from({1, 1}, {0.3});
  const double by_hand = -(2.0 * 0.3 + 0.5) + 0.25;
  auto y = mlp_forward_hyper(x, nullptr, latent, Activation::Identity, Activation::Identity,
                             0.2);
  CHECK(y.value() == doctest::Approx(by_hand));

  // all-zero latent with identity activations -> 0
  auto zero = make_latent_field(Tensor<double>::zeros({1, 4}), plan);
  CHECK(mlp_forward_hyper(x, nullptr, zero, Activation::Identity, Activation::Identity, 0.2)
            .value() == doctest::Approx(0.0));
}

TEST_CASE("equal encodings and latents give equal outputs") {
  Rng rng(3);
  auto mlp = make_mlp<double>(6, {8, 1}, rng);
  auto plan = make_modulation_plan({8, 1}, 6, ConditioningMode::ShiftModulation);
  auto enc_row = random_rows(1, 6, 11);
  auto lat_row = random_rows(1, plan.total_channels, 13);
  Tensor<double> enc = Tensor<double>::zeros({2, 6});
  Tensor<double> lat = Tensor<double>::zeros({2, plan.total_channels});
  for (Index r = 0; r < 2; ++r) {
    std::copy(enc_row.data(), enc_row.data() + 6, enc.data() + r * 6);
    std::copy(lat_row.data(), lat_row.data() + plan.total_channels,
              lat.data() + r * plan.total_channels);
  }
  auto y = mlp_forward_shift(enc, nullptr, mlp, make_latent_field(lat, plan));
  CHECK(y.at(0) == y.at(1));
}

TEST_CASE("latent locality: one pixel's latent only moves that pixel") {
  Rng rng(17);
  auto mlp = make_mlp<double>(6, {8, 8, 1}, rng);
  auto plan = make_modulation_plan({8, 8, 1}, 6, ConditioningMode::ShiftModulation);
  auto enc = random_rows(10, 6, 19);
  auto lat = random_rows(10, plan.total_channels, 23);
  auto base = mlp_forward_shift(enc, nullptr, mlp, make_latent_field(lat, plan));
  auto lat2 = lat.clone();
  lat2.data()[5 * plan.total_channels + 3] += 0.37;
  auto moved = mlp_forward_shift(enc, nullptr, mlp, make_latent_field(lat2, plan));
  for (Index p = 0; p < 10; ++p) {
    if (p == 5)
      CHECK(moved.at(p) != base.at(p));
    else
      CHECK(moved.at(p) == base.at(p));
  }
}

TEST_CASE("latent shortfall errors name the layer") {
  auto plan = make_modulation_plan({8, 8, 1}, 6, ConditioningMode::ShiftModulation);
  CHECK(plan.total_channels == 16);
  CHECK_THROWS_WITH_AS(make_latent_field(Tensor<double>::zeros({4, 10}), plan),
                       doctest::Contains("layer 1"), Error);
  CHECK_THROWS_AS(make_latent_field(Tensor<double>::zeros({4, 20}), plan), Error);
}

TEST_CASE("tanh head keeps outputs in range in every mode") {
  Rng rng(31);
  GeneratorConfig cfg;
  cfg.n_source = 2;
  cfg.n_target = 1;
  cfg.mlp_hidden = {16, 16};
  cfg.hypernet.blocks_per_stage = {1, 1};
  cfg.hypernet.stage_widths = {8, 12};
  cfg.hypernet.fusion_width = 8;
  for (auto mode : {ConditioningMode::ShiftModulation, ConditioningMode::FiLM,
                    ConditioningMode::FullHyper}) {
    cfg.mode = mode;
    auto gen = make_generator<float>(cfg, rng);
    auto src = Tensor<float>::uniform({1, 2, 16, 16}, rng, -1.0f, 1.0f);
    auto out = translate(src, gen).images;
    CHECK(out.shape() == Shape{1, 1, 16, 16});
    for (Index i = 0; i < out.numel(); ++i) {
      CHECK(out.at(i) <= 1.0f);
      CHECK(out.at(i) >= -1.0f);
    }
  }
}

TEST_CASE("translate: spatial dims preserved, deterministic, zero-start identity") {
  Rng rng(41);
  GeneratorConfig cfg;
  cfg.n_source = 3;
  cfg.n_target = 1;
  auto gen = make_generator<float>(cfg, rng);
  Rng drng(42);
  auto src = Tensor<float>::uniform({1, 3, 32, 32}, drng, -1.0f, 1.0f);

  auto a = translate(src, gen).images;
  auto b = translate(src, gen).images;
  CHECK(a.shape() == Shape{1, 1, 32, 32});
  CHECK(a.values() == b.values());  // bit-identical

  // zero-initialized projection -> latent is exactly zero -> output equals
  // the bare MLP applied to (encoding, intensities)
  auto enc = positional_encoding<float>(make_coord_grid(32, 32), cfg.encoding);
  auto intens = nchw_to_rows(src);
  auto bare = mlp_forward(enc, &intens, gen.mlp);
  CHECK(rows_to_nchw(bare, 1, 32, 32).values() == a.values());

  // latent channel count for the default shift configuration
  CHECK(gen.plan.total_channels == 256);

  // dims not divisible by the stage stride product
  auto bad = Tensor<float>::uniform({1, 3, 30, 30}, drng, -1.0f, 1.0f);
  CHECK_THROWS_WITH_AS(translate(bad, gen), doctest::Contains("pad or crop"), Error);
}

TEST_CASE("hypernet: batch order permutes outputs identically") {
  Rng rng(55);
  GeneratorConfig cfg;
  cfg.n_source = 2;
  cfg.mlp_hidden = {8, 8};
  cfg.hypernet.blocks_per_stage = {1, 1};
  cfg.hypernet.stage_widths = {6, 8};
  cfg.hypernet.fusion_width = 6;
  auto gen = make_generator<float>(cfg, rng);
  auto a = Tensor<float>::uniform({1, 2, 16, 16}, rng, -1.0f, 1.0f);
  auto b = Tensor<float>::uniform({1, 2, 16, 16}, rng, -1.0f, 1.0f);

  auto ab = Tensor<float>::zeros({2, 2, 16, 16});
  std::copy(a.data(), a.data() + a.numel(), ab.data());
  std::copy(b.data(), b.data() + b.numel(), ab.data() + a.numel());
  auto ba = Tensor<float>::zeros({2, 2, 16, 16});
  std::copy(b.data(), b.data() + b.numel(), ba.data());
  std::copy(a.data(), a.data() + a.numel(), ba.data() + b.numel());

  auto zab = hypernet_forward(ab, gen.hyper);
  auto zba = hypernet_forward(ba, gen.hyper);
  const Index half = zab.numel() / 2;
  for (Index i = 0; i < half; ++i) {
    CHECK(zab.at(i) == zba.at(half + i));
    CHECK(zab.at(half + i) == zba.at(i));
  }
}

TEST_CASE("hypernet translation covariance at the stage stride") {
  // Instance norm couples pixels through global statistics, so covariance is
  // probed with normalization off.
  Rng rng(77);
  HypernetConfig hc;
  hc.blocks_per_stage = {1, 1, 1};
  hc.stage_widths = {6, 8, 10};
  hc.fusion_width = 6;
  hc.latent_channels = 4;
  hc.use_instance_norm = false;
  auto plan = make_modulation_plan({2, 1}, 2, ConditioningMode::ShiftModulation);
  REQUIRE(plan.total_channels == 2);
  hc.latent_channels = 2;
  auto hp = make_hypernet<float>(1, hc, plan, rng);
  // make the projection non-trivial so the output is informative
  hp.projection.w = Tensor<float>::uniform({2, 6, 1, 1}, rng, -0.5f, 0.5f);

  const Index n = 48;
  auto x = Tensor<float>::uniform({1, 1, n, n}, rng, -1.0f, 1.0f);
  for (int stage : {1, 2}) {
    const Index stride = Index(1) << stage;
    auto shifted = Tensor<float>::zeros({1, 1, n, n});
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const Index si = i - stride, sj = j - stride;
        if (si >= 0 && sj >= 0)
          shifted.data()[i * n + j] = x.data()[si * n + sj];
      }
    std::vector<Tensor<float>> f1, f2;
    hypernet_forward(x, hp, &f1);
    hypernet_forward(shifted, hp, &f2);
    const auto& a = f1[static_cast<std::size_t>(stage)];
    const auto& b = f2[static_cast<std::size_t>(stage)];
    const Index fh = a.dim(2), fw = a.dim(3), margin = 8;
    for (Index c = 0; c < a.dim(1); ++c)
      for (Index i = margin; i < fh - margin; ++i)
        for (Index j = margin; j < fw - margin; ++j) {
          const float va = a.at((c * fh + i - 1) * fw + j - 1);
          const float vb = b.at((c * fh + i) * fw + j);
          CHECK(std::abs(va - vb) < 1e-5f);
        }
  }
}

TEST_CASE("hypernet receptive field bound") {
  // With normalization off, a single-pixel change may only touch a bounded
  // output neighbourhood; the bound follows from each stage's conv chain.
  Rng rng(99);
  HypernetConfig hc;
  hc.blocks_per_stage = {1, 1};
  hc.stage_widths = {6, 8};
  hc.fusion_width = 6;
  hc.use_instance_norm = false;
  auto plan = make_modulation_plan({2, 1}, 2, ConditioningMode::ShiftModulation);
  hc.latent_channels = static_cast<int>(plan.total_channels);
  auto hp = make_hypernet<float>(1, hc, plan, rng);
  hp.projection.w =
      Tensor<float>::uniform({plan.total_channels, 6, 1, 1}, rng, -0.5f, 0.5f);

  const Index n = 32;
  auto x = Tensor<float>::uniform({1, 1, n, n}, rng, -1.0f, 1.0f);
  auto base = hypernet_forward(x, hp);
  auto x2 = x.clone();
  const Index pi = 16, pj = 16;
  x2.data()[pi * n + pj] += 0.5f;
  auto moved = hypernet_forward(x2, hp);

  // union over stages of the output pixels whose receptive field contains p;
  // stage s consumes the outputs of stages 0..s-1, so its chain accumulates
  std::vector<int> kernels, strides, pads;
  Index lo_i = n, hi_i = -1, lo_j = n, hi_j = -1;
  for (int s = 0; s < hc.stages(); ++s) {
    kernels.push_back(3);
    strides.push_back(s == 0 ? 1 : 2);
    pads.push_back(1);
    for (int b = 0; b < hc.blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
      kernels.insert(kernels.end(), {3, 3});
      strides.insert(strides.end(), {1, 1});
      pads.insert(pads.end(), {1, 1});
    }
    auto tapped_k = kernels;
    auto tapped_s = strides;
    auto tapped_p = pads;
    tapped_k.push_back(3);
    tapped_s.push_back(1);
    tapped_p.push_back(1);
    const auto rf = conv_chain_receptive_field(tapped_k, tapped_s, tapped_p);
    const Index up = Index(1) << s;
    auto touch = [&](Index p, Index& lo, Index& hi) {
      // feature q sees input [rf.start + q*jump, rf.start + q*jump + rf.size)
      const Index qlo = (p - rf.start - rf.size + rf.jump) / rf.jump;  // ceil
      const Index qhi = (p - rf.start) / rf.jump;
      lo = std::min(lo, std::max<Index>(0, qlo * up));
      hi = std::max(hi, (qhi + 1) * up - 1);
    };
    touch(pi, lo_i, hi_i);
    touch(pj, lo_j, hi_j);
  }
  for (Index c = 0; c < base.dim(1); ++c)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const bool inside = i >= lo_i && i <= hi_i && j >= lo_j && j <= hi_j;
        if (!inside)
          CHECK(base.at((c * n + i) * n + j) == moved.at((c * n + i) * n + j));
      }
  // and the perturbation does move something
  bool any = false;
  for (Index i = 0; i < base.numel(); ++i) any = any || base.at(i) != moved.at(i);
  CHECK(any);
}

TEST_CASE("discriminator shapes and taps") {
  Rng rng(123);
  auto d = make_discriminator<float>(1, 3, rng);
  auto cand = Tensor<float>::uniform({1, 1, 64, 64}, rng, -1, 1);
  auto cond = Tensor<float>::uniform({1, 3, 64, 64}, rng, -1, 1);
  auto out = discriminate(cand, cond, d);
  CHECK(out.logits.shape() == Shape{1, 1, 6, 6});
  CHECK(out.features.size() == 4);

  auto misaligned = Tensor<float>::uniform({1, 3, 32, 64}, rng, -1, 1);
  CHECK_THROWS_WITH_AS(discriminate(cand, misaligned, d), doctest::Contains("misaligned"),
                       Error);
}

TEST_CASE("discriminator with zero parameters emits a flat logit map") {
  Rng rng(5);
  auto d = make_discriminator<float>(1, 2, rng);
  for (auto& blk : d.blocks) {
    blk.w = Tensor<float>::zeros(blk.w.shape());
    blk.b = Tensor<float>::zeros(blk.b.shape());
  }
  d.blocks.back().b.data()[0] = 0.75f;
  auto out = discriminate(Tensor<float>::uniform({1, 1, 32, 32}, rng, -1, 1),
                          Tensor<float>::uniform({1, 2, 32, 32}, rng, -1, 1), d);
  for (Index i = 0; i < out.logits.numel(); ++i) CHECK(out.logits.at(i) == 0.75f);
}

TEST_CASE("patch independence radius") {
  Rng rng(7);
  auto d = make_discriminator<float>(1, 1, rng);
  const auto rf = conv_chain_receptive_field({4, 4, 4, 4, 4}, {2, 2, 2, 1, 1}, {1, 1, 1, 1, 1});
  CHECK(rf.jump == 8);
  CHECK(rf.size == 70);
  CHECK(rf.start == -23);

  const Index n = 160;
  auto cand = Tensor<float>::uniform({1, 1, n, n}, rng, -1, 1);
  auto cond = Tensor<float>::uniform({1, 1, n, n}, rng, -1, 1);
  auto base = discriminate(cand, cond, d);

  const Index q = 2;  // probe logit (2, 2)
  const Index in_lo = rf.start + q * rf.jump, in_hi = in_lo + rf.size - 1;

  // a perturbation outside the patch's receptive field leaves it unchanged
  auto cand2 = cand.clone();
  cand2.data()[140 * n + 140] += 1.0f;
  REQUIRE(140 > in_hi);
  auto moved = discriminate(cand2, cond, d);
  const Index lw = base.logits.dim(3);
  CHECK(base.logits.at(q * lw + q) == moved.logits.at(q * lw + q));

  // a perturbation inside it does not
  auto cand3 = cand.clone();
  const Index inside = std::max<Index>(0, in_lo) + 5;
  cand3.data()[inside * n + inside] += 1.0f;
  auto moved3 = discriminate(cand3, cond, d);
  CHECK(base.logits.at(q * lw + q) != moved3.logits.at(q * lw + q));
}

TEST_CASE("gradient reaches both discriminator inputs") {
  Rng rng(9);
  auto d = make_discriminator<float>(1, 2, rng);
  Tape<float> tape;
  auto cand = Tensor<float>::uniform({1, 1, 32, 32}, rng, -1, 1).set_requires_grad(true);
  auto cond = Tensor<float>::uniform({1, 2, 32, 32}, rng, -1, 1).set_requires_grad(true);
  auto out = discriminate(cand, cond, d);
  tape.backward(mean(out.logits));
  auto nonzero = [](const std::vector<float>& g) {
    for (float v : g)
      if (v != 0.0f) return true;
    return false;
  };
  CHECK(nonzero(cand.grad()));
  CHECK(nonzero(cond.grad()));
}

TEST_CASE("checkpoints round-trip generators and discriminators") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/cones_test_ckpt";
  fs::remove_all(dir);

  Rng rng(63);
  GeneratorConfig cfg;
  cfg.mode = ConditioningMode::FiLM;
  cfg.n_source = 2;
  cfg.mlp_hidden = {8, 8};
  cfg.encoding.include_raw = true;
  cfg.hypernet.blocks_per_stage = {1, 1};
  cfg.hypernet.stage_widths = {4, 6};
  cfg.hypernet.fusion_width = 4;
  auto gen = make_generator<float>(cfg, rng);
  auto src = Tensor<float>::uniform({1, 2, 16, 16}, rng, -1, 1);
  auto before = translate(src, gen).images;

  save_generator(dir + "/gen", gen, cfg);
  GeneratorConfig loaded_cfg;
  auto loaded = load_generator<float>(dir + "/gen", &loaded_cfg);
  CHECK(loaded_cfg.mode == ConditioningMode::FiLM);
  CHECK(loaded_cfg.encoding.include_raw);
  auto after = translate(src, loaded).images;
  CHECK(after.values() == before.values());

  auto disc = make_discriminator<float>(1, 2, rng, {8, 8, 8, 8, 1});
  auto cand = Tensor<float>::uniform({1, 1, 32, 32}, rng, -1, 1);
  auto cond = Tensor<float>::uniform({1, 2, 32, 32}, rng, -1, 1);
  auto logits_before = discriminate(cand, cond, disc).logits;
  save_discriminator(dir + "/disc", disc);
  auto disc2 = load_discriminator<float>(dir + "/disc");
  CHECK(discriminate(cand, cond, disc2).logits.values() == logits_before.values());

  CHECK_THROWS_AS(load_generator<float>(dir + "/disc"), Error);
}

TEST_CASE("deep hypernet preset") {
  auto cfg = HypernetConfig::deep_preset();
  CHECK(cfg.blocks_per_stage == std::vector<int>{2, 4, 23, 3});
  CHECK(cfg.spatial_divisor() == 8);
  Rng rng(3);
  auto plan = make_modulation_plan({64, 64, 64, 64, 1}, 15,
                                   ConditioningMode::ShiftModulation);
  cfg.latent_channels = static_cast<int>(plan.total_channels);
  auto hp = make_hypernet<float>(3, cfg, plan, rng);
  CHECK(hp.stages.size() == 4);
  CHECK(hp.stages[2].blocks.size() == 23);
  auto z = hypernet_forward(Tensor<float>::uniform({1, 3, 16, 16}, rng, -1, 1), hp);
  CHECK(z.shape() == Shape{1, 256, 16, 16});
}
