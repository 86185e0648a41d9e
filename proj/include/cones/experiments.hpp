#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cones/metrics.hpp"
#include "cones/spectral.hpp"
#include "cones/trainer.hpp"

namespace cones {

// ---------------------------------------------------------------------------
// Model evaluation over a validation split
// ---------------------------------------------------------------------------

struct EvalResult {
  std::vector<MetricRow> rows;  // one per (sample, target channel)
  MetricSummary psnr, ssim, cropped_psnr, cropped_ssim;
};

/// Lesion bounding box grown to a workable metric window (SSIM needs at
/// least 11x11) and clamped to the image.
template <typename S>
Tensor<double> metric_crop(const Tensor<double>& img, const Tensor<S>& mask, Index min_side) {
  const Index h = img.dim(0), w = img.dim(1);
  Index r0 = h, r1 = -1, c0 = w, c1 = -1;
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      if (static_cast<double>(mask.at(i * w + j)) > 0.5) {
        r0 = std::min(r0, i);
        r1 = std::max(r1, i);
        c0 = std::min(c0, j);
        c1 = std::max(c1, j);
      }
  require(r1 >= 0, "metric crop: empty mask");
  auto grow = [&](Index& lo, Index& hi, Index limit) {
    while (hi - lo + 1 < std::min(min_side, limit)) {
      if (lo > 0) --lo;
      if (hi - lo + 1 >= min_side) break;
      if (hi < limit - 1) ++hi;
    }
  };
  grow(r0, r1, h);
  grow(c0, c1, w);
  Tensor<double> out = Tensor<double>::zeros({r1 - r0 + 1, c1 - c0 + 1});
  for (Index i = r0; i <= r1; ++i)
    for (Index j = c0; j <= c1; ++j)
      out.data()[(i - r0) * (c1 - c0 + 1) + (j - c0)] = img.at(i * w + j);
  return out;
}

template <typename S>
Tensor<S> channel_of(const Tensor<S>& stack, Index c) {
  const Index h = stack.dim(stack.ndim() - 2), w = stack.dim(stack.ndim() - 1);
  Tensor<S> out = Tensor<S>::zeros({h, w});
  std::copy(stack.data() + c * h * w, stack.data() + (c + 1) * h * w, out.data());
  return out;
}

/// Translates every validation sample and reports PSNR/SSIM for the full
/// frame and for the lesion window.
template <typename S>
EvalResult evaluate_model(const GeneratorParams<S>& gen,
                          const std::vector<PairedSample<S>>& val) {
  EvalResult res;
  std::vector<double> psnrs, ssims, cpsnrs, cssims;
  for (std::size_t idx = 0; idx < val.size(); ++idx) {
    const auto& sample = val[idx];
    Tensor<S> src = Tensor<S>::zeros({1, sample.source.dim(0), sample.source.dim(1),
                                      sample.source.dim(2)});
    std::copy(sample.source.data(), sample.source.data() + sample.source.numel(), src.data());
    Tensor<S> fake;
    {
      NoGradGuard ng;
      fake = translate(src, gen).images;
    }
    for (Index c = 0; c < sample.target.dim(0); ++c) {
      Tensor<double> pred = to_unit_range(channel_of(fake, c));
      Tensor<double> real =
          to_unit_range(channel_of(sample.target, c));
      MetricRow row;
      row.image_id = std::to_string(idx) + ":" + std::to_string(c);
      row.psnr_db = psnr(pred, real).db;
      row.ssim = ssim(pred, real);
      Tensor<double> pc = metric_crop(pred, sample.mask, 16);
      Tensor<double> rc = metric_crop(real, sample.mask, 16);
      row.cropped_psnr_db = psnr(pc, rc).db;
      row.cropped_ssim = ssim(pc, rc);
      res.rows.push_back(row);
      psnrs.push_back(row.psnr_db);
      ssims.push_back(row.ssim);
      cpsnrs.push_back(row.cropped_psnr_db);
      cssims.push_back(row.cropped_ssim);
    }
  }
  res.psnr = summarize(psnrs);
  res.ssim = summarize(ssims);
  res.cropped_psnr = summarize(cpsnrs);
  res.cropped_ssim = summarize(cssims);
  return res;
}

// ---------------------------------------------------------------------------
// Ablation grid (shift modulation on/off x intensity on/off)
// ---------------------------------------------------------------------------

struct AblationOptions {
  long steps = 600;
  Index crop = 32;
  std::uint64_t seed = 1234;
  double gen_lr = 1e-4;
  double disc_lr = 4e-4;
  LossWeights weights;
  AdvLossVariant adv_variant = AdvLossVariant::Hinge;
  HypernetConfig hypernet;
  EncodingConfig encoding;
};

struct AblationRunResult {
  bool shift = true;
  bool intensity = true;
  Index param_generated = 0;
  bool diverged = false;
  long steps_done = 0;
  EvalResult eval;
  std::vector<LossRecord> history;
};

/// Trains one grid cell and evaluates on the validation split. "shift off"
/// means the full hypernetwork generates every MLP parameter. A divergence
/// abort is recorded, not rethrown; the run keeps its loss history and is
/// evaluated with whatever parameters it reached.
template <typename S>
AblationRunResult run_ablation_config(const std::vector<PairedSample<S>>& train_split,
                                      const std::vector<PairedSample<S>>& val_split,
                                      bool shift_mode, bool intensity,
                                      const AblationOptions& opts) {
  AblationRunResult out;
  out.shift = shift_mode;
  out.intensity = intensity;

  GeneratorConfig gc;
  gc.mode = shift_mode ? ConditioningMode::ShiftModulation : ConditioningMode::FullHyper;
  gc.use_intensity = intensity;
  gc.encoding = opts.encoding;
  gc.n_source = static_cast<int>(train_split.front().source.dim(0));
  gc.n_target = static_cast<int>(train_split.front().target.dim(0));
  gc.hypernet = opts.hypernet;

  Rng rng(mix_seed(opts.seed, 0x9000 + (shift_mode ? 2 : 0) + (intensity ? 1 : 0)));
  GeneratorParams<S> gen = make_generator<S>(gc, rng);
  DiscriminatorParams<S> disc =
      make_discriminator<S>(gc.n_target, gc.n_source, rng);
  out.param_generated = gen.plan.total_channels;

  TrainConfig tc;
  tc.gen_lr = opts.gen_lr;
  tc.disc_lr = opts.disc_lr;
  tc.total_steps = opts.steps;
  tc.crop_h = tc.crop_w = opts.crop;
  tc.seed = opts.seed;
  tc.weights = opts.weights;
  tc.adv_variant = opts.adv_variant;

  TrainLoop<S> loop(gen, disc, tc);
  try {
    for (long t = 1; t <= tc.total_steps; ++t) {
      out.history.push_back(loop.step(train_split, t));
      out.steps_done = t;
    }
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.history.push_back(e.record);
  }
  out.eval = evaluate_model(gen, val_split);
  return out;
}

template <typename S>
std::vector<AblationRunResult> run_ablation_grid(const std::vector<PairedSample<S>>& train_split,
                                                 const std::vector<PairedSample<S>>& val_split,
                                                 const AblationOptions& opts) {
  std::vector<AblationRunResult> rows;
  // Table layout: full hypernetwork rows first, the shift+intensity baseline last.
  for (auto [shift, intensity] : {std::pair{false, false}, {false, true},
                                  {true, false}, {true, true}})
    rows.push_back(run_ablation_config(train_split, val_split, shift, intensity, opts));
  return rows;
}

inline void write_ablation_csv(const std::string& path,
                               const std::vector<AblationRunResult>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "ablation csv: cannot open '", path, "'");
  out << "shift_modulation,intensity,param_generated,psnr,ssim\n";
  for (const auto& r : rows)
    out << (r.shift ? "yes" : "no") << ',' << (r.intensity ? "yes" : "no") << ','
        << r.param_generated << ',' << format_csv_double(r.eval.psnr.mean) << ','
        << format_csv_double(r.eval.ssim.mean) << '\n';
  require(out.good(), "ablation csv: write failed for '", path, "'");
}

// ---------------------------------------------------------------------------
// Coordinate-MLP image fitting (spectral-bias probe)
// ---------------------------------------------------------------------------

/// Oriented sinusoid test image: sin(2 pi cycles u + phase), u in [0, 1)
/// along the given direction. Values lie in [-1, 1].
inline Tensor<float> sinusoid_image(Index n, double cycles, double angle, double phase = 0.3) {
  Tensor<float> img = Tensor<float>::zeros({n, n});
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double u = ((axis_coord(i, n) + 1.0) / 2.0) * sa +
                       ((axis_coord(j, n) + 1.0) / 2.0) * ca;
      img.data()[i * n + j] =
          static_cast<float>(std::sin(2.0 * 3.14159265358979323846 * cycles * u + phase));
    }
  return img;
}

struct FieldFitResult {
  double final_mse = 0;
  std::vector<double> mse_curve;
};

/// Fits a bare coordinate MLP (no hypernetwork, no modulation) to one image
/// with full-batch Adam on the MSE; the encoding config decides whether the
/// MLP sees raw coordinates or sinusoidal features.
inline FieldFitResult fit_field_to_image(const Tensor<float>& target, const EncodingConfig& enc,
                                         long steps, double lr, std::uint64_t seed) {
  require(target.ndim() == 2, "field fit: expected a 2-D target image");
  const Index h = target.dim(0), w = target.dim(1);
  Tensor<float> encoded = positional_encoding<float>(make_coord_grid(h, w), enc);
  Tensor<float> target_rows = Tensor<float>::from({h * w, 1}, target.values());

  Rng rng(mix_seed(seed, 0xf17));
  MlpParams<float> mlp = make_mlp<float>(encoded.dim(1), {64, 64, 64, 64, 1}, rng);
  ParamSet<float> params;
  mlp.collect_parameters("mlp", params);
  for (auto& p : params) p.tensor.set_requires_grad(true);
  AdamState<float> opt(lr, 0.9, 0.999, 1e-8);  // plain fitting, not adversarial

  FieldFitResult res;
  for (long t = 0; t < steps; ++t) {
    zero_grads(params);
    Tape<float> tape;
    Tensor<float> pred = mlp_forward(encoded, nullptr, mlp);
    Tensor<float> loss = mse(pred, target_rows);
    res.final_mse = static_cast<double>(loss.value());
    res.mse_curve.push_back(res.final_mse);
    tape.backward(loss);
    opt.step(params);
  }
  // loss after the final update
  {
    NoGradGuard ng;
    Tensor<float> pred = mlp_forward(encoded, nullptr, mlp);
    res.final_mse = static_cast<double>(mse(pred, target_rows).value());
  }
  return res;
}

/// Mean absolute gap between two log-magnitude profiles over the top-quartile
/// frequency bins (k >= 3K/4).
inline double high_band_profile_gap(const SpectrumProfile& a, const SpectrumProfile& b) {
  require(a.log_values.size() == b.log_values.size(), "profile gap: bin counts differ");
  const std::size_t k0 = a.log_values.size() * 3 / 4;
  double acc = 0;
  for (std::size_t k = k0; k < a.log_values.size(); ++k)
    acc += std::abs(a.log_values[k] - b.log_values[k]);
  return acc / static_cast<double>(a.log_values.size() - k0);
}

}  // namespace cones
