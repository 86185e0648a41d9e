#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cones/adam.hpp"
#include "cones/discriminator.hpp"
#include "cones/generator.hpp"
#include "cones/losses.hpp"
#include "cones/phantom.hpp"

namespace cones {

struct TrainConfig {
  double gen_lr = 1e-4;
  double disc_lr = 4e-4;  // TTUR: the discriminator runs at 4x the generator rate
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long total_steps = 2000;
  long decay_start = 0;  // decay disabled while decay_end <= decay_start
  long decay_end = 0;
  Index crop_h = 64;
  Index crop_w = 64;
  Index batch_size = 1;
  std::uint64_t seed = 1234;
  LossWeights weights;
  AdvLossVariant adv_variant = AdvLossVariant::Hinge;
  double divergence_threshold = 1e6;
};

/// Factor applied to both learning rates at a 1-based step: 1 until
/// decay_start, then (decay_end - t) / (decay_end - decay_start), floored at 0.
inline double lr_decay_factor(long step, long decay_start, long decay_end) {
  if (decay_end <= decay_start) return 1.0;
  if (step <= decay_start) return 1.0;
  if (step >= decay_end) return 0.0;
  return static_cast<double>(decay_end - step) /
         static_cast<double>(decay_end - decay_start);
}

struct LossRecord {
  long step = 0;
  double d = 0, rec = 0, adv = 0, fm = 0, reg = 0, total = 0;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, LossRecord rec) : Error(msg), record(rec) {}
  LossRecord record;
};

inline std::string format_csv_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "loss csv: cannot open '", path, "'");
  out << "step,L_D,L_rec,L_adv,L_fm,L_reg,L_total\n";
  for (const auto& r : history)
    out << r.step << ',' << format_csv_double(r.d) << ',' << format_csv_double(r.rec) << ','
        << format_csv_double(r.adv) << ',' << format_csv_double(r.fm) << ','
        << format_csv_double(r.reg) << ',' << format_csv_double(r.total) << '\n';
  require(out.good(), "loss csv: write failed for '", path, "'");
}

/// Same window across every channel of source, target, and mask.
template <typename S>
PairedSample<S> random_crop(const PairedSample<S>& sample, Index h, Index w, Rng& rng) {
  const Index H = sample.source.dim(1), W = sample.source.dim(2);
  require(h >= 1 && w >= 1 && h <= H && w <= W, "random_crop: window ", h, "x", w,
          " does not fit image ", H, "x", W);
  const Index top = rng.uniform_int(H - h + 1);
  const Index left = rng.uniform_int(W - w + 1);
  auto crop_stack = [&](const Tensor<S>& stack) {
    const Index C = stack.dim(0);
    Tensor<S> out = Tensor<S>::zeros({C, h, w});
    for (Index c = 0; c < C; ++c)
      for (Index i = 0; i < h; ++i)
        std::copy(stack.data() + (c * H + top + i) * W + left,
                  stack.data() + (c * H + top + i) * W + left + w,
                  out.data() + (c * h + i) * w);
    return out;
  };
  PairedSample<S> out;
  out.source = crop_stack(sample.source);
  out.target = crop_stack(sample.target);
  Tensor<S> mask = Tensor<S>::zeros({h, w});
  for (Index i = 0; i < h; ++i)
    std::copy(sample.mask.data() + (top + i) * W + left,
              sample.mask.data() + (top + i) * W + left + w, mask.data() + i * w);
  out.mask = mask;
  return out;
}

/// Alternating TTUR optimization: one discriminator update then one generator
/// update per iteration. The discriminator phase sees the generator output as
/// a constant; the generator phase reads the discriminator but only the
/// generator optimizer steps, so neither loss updates the other network.
template <typename S>
class TrainLoop {
 public:
  TrainLoop(GeneratorParams<S>& gen, DiscriminatorParams<S>& disc, const TrainConfig& cfg)
      : gen_(gen),
        disc_(disc),
        cfg_(cfg),
        gen_params_(gen.parameters()),
        disc_params_(disc.parameters()),
        opt_g_(cfg.gen_lr, cfg.beta1, cfg.beta2, cfg.adam_eps),
        opt_d_(cfg.disc_lr, cfg.beta1, cfg.beta2, cfg.adam_eps),
        data_rng_(mix_seed(cfg.seed, 0xda7a)),
        crop_rng_(mix_seed(cfg.seed, 0xc409)) {
    gen_.set_requires_grad(true);
    disc_.set_requires_grad(true);
  }

  /// The discriminator participates whenever any of its losses is weighted.
  bool adversarial_active() const { return cfg_.weights.adv != 0 || cfg_.weights.fm != 0; }

  void next_batch(const std::vector<PairedSample<S>>& dataset, Tensor<S>& src, Tensor<S>& tgt) {
    require(!dataset.empty(), "train: empty dataset");
    const Index B = cfg_.batch_size;
    for (Index b = 0; b < B; ++b) {
      const auto idx =
          static_cast<std::size_t>(data_rng_.uniform_int(static_cast<long>(dataset.size())));
      PairedSample<S> cropped = random_crop(dataset[idx], cfg_.crop_h, cfg_.crop_w, crop_rng_);
      if (b == 0) {
        src = Tensor<S>::zeros({B, cropped.source.dim(0), cfg_.crop_h, cfg_.crop_w});
        tgt = Tensor<S>::zeros({B, cropped.target.dim(0), cfg_.crop_h, cfg_.crop_w});
      }
      std::copy(cropped.source.data(), cropped.source.data() + cropped.source.numel(),
                src.data() + b * cropped.source.numel());
      std::copy(cropped.target.data(), cropped.target.data() + cropped.target.numel(),
                tgt.data() + b * cropped.target.numel());
    }
  }

  double discriminator_phase(const Tensor<S>& src, const Tensor<S>& tgt) {
    Tensor<S> fake;
    {
      NoGradGuard ng;
      fake = translate(src, gen_).images;
    }
    zero_grads(disc_params_);
    Tape<S> tape;
    auto real_out = discriminate(tgt, src, disc_);
    auto fake_out = discriminate(fake, src, disc_);
    Tensor<S> ld = loss_discriminator(real_out.logits, fake_out.logits);
    const double value = static_cast<double>(ld.value());
    tape.backward(ld);
    opt_d_.step(disc_params_);
    return value;
  }

  LossRecord generator_phase(const Tensor<S>& src, const Tensor<S>& tgt) {
    zero_grads(gen_params_);
    zero_grads(disc_params_);
    Tape<S> tape;
    TranslateResult<S> tr = translate(src, gen_);
    GeneratorLossParts<S> parts;
    parts.rec = loss_reconstruction(tr.images, tgt);
    parts.reg = loss_latent_reg(tr.latent_rows);
    if (adversarial_active()) {
      auto fake_out = discriminate(tr.images, src, disc_);
      parts.adv = cfg_.weights.adv != 0
                      ? loss_adversarial_gen(fake_out.logits, cfg_.adv_variant)
                      : Tensor<S>::scalar(0);
      if (cfg_.weights.fm != 0) {
        std::vector<Tensor<S>> real_features;
        {
          NoGradGuard ng;
          real_features = discriminate(tgt, src, disc_).features;
        }
        parts.fm = loss_feature_matching(real_features, fake_out.features);
      } else {
        parts.fm = Tensor<S>::scalar(0);
      }
    } else {
      parts.adv = Tensor<S>::scalar(0);
      parts.fm = Tensor<S>::scalar(0);
    }
    Tensor<S> total = total_generator_loss(parts, cfg_.weights);

    LossRecord rec;
    rec.rec = static_cast<double>(parts.rec.value());
    rec.adv = static_cast<double>(parts.adv.value());
    rec.fm = static_cast<double>(parts.fm.value());
    rec.reg = static_cast<double>(parts.reg.value());
    rec.total = static_cast<double>(total.value());
    tape.backward(total);
    opt_g_.step(gen_params_);
    return rec;
  }

  /// One iteration: schedule, one discriminator update (when active), one
  /// generator update, divergence guard.
  LossRecord step(const std::vector<PairedSample<S>>& dataset, long t) {
    const double factor = lr_decay_factor(t, cfg_.decay_start, cfg_.decay_end);
    opt_g_.set_lr(cfg_.gen_lr * factor);
    opt_d_.set_lr(cfg_.disc_lr * factor);

    Tensor<S> src, tgt;
    next_batch(dataset, src, tgt);
    const double d_loss = adversarial_active() ? discriminator_phase(src, tgt) : 0.0;
    LossRecord rec = generator_phase(src, tgt);
    rec.step = t;
    rec.d = d_loss;

    const double parts[] = {rec.d, rec.rec, rec.adv, rec.fm, rec.reg, rec.total};
    for (double v : parts)
      if (std::isnan(v) || std::abs(v) > cfg_.divergence_threshold)
        throw DivergenceError(
            "train: divergence guard tripped at step " + std::to_string(t) + " (L_D=" +
                format_csv_double(rec.d) + ", L_total=" + format_csv_double(rec.total) + ")",
            rec);
    return rec;
  }

  std::vector<LossRecord> run(const std::vector<PairedSample<S>>& dataset,
                              const std::function<void(long)>& on_step = {}) {
    std::vector<LossRecord> history;
    history.reserve(static_cast<std::size_t>(cfg_.total_steps));
    for (long t = 1; t <= cfg_.total_steps; ++t) {
      history.push_back(step(dataset, t));
      if (on_step) on_step(t);
    }
    return history;
  }

  double gen_lr_now() const { return opt_g_.lr(); }
  double disc_lr_now() const { return opt_d_.lr(); }

 private:
  GeneratorParams<S>& gen_;
  DiscriminatorParams<S>& disc_;
  TrainConfig cfg_;
  ParamSet<S> gen_params_, disc_params_;
  AdamState<S> opt_g_, opt_d_;
  Rng data_rng_, crop_rng_;
};

/// Convenience wrapper mirroring the one-call training entry point.
template <typename S>
std::vector<LossRecord> train(const std::vector<PairedSample<S>>& dataset,
                              GeneratorParams<S>& gen, DiscriminatorParams<S>& disc,
                              const TrainConfig& cfg,
                              const std::function<void(long)>& on_step = {}) {
  TrainLoop<S> loop(gen, disc, cfg);
  return loop.run(dataset, on_step);
}

}  // namespace cones
