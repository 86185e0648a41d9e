#pragma once

#include <string>
#include <vector>

#include "cones/adam.hpp"
#include "cones/field.hpp"
#include "cones/ops.hpp"

namespace cones {

/// Bottom-up convolutional encoder configuration. The first stage keeps full
/// resolution, every later stage halves it; each stage's smoothed map is
/// upsampled back to full resolution, summed across stages, and projected
/// 1x1 onto the latent channels.
struct HypernetConfig {
  std::vector<int> blocks_per_stage{1, 1, 2, 1};
  std::vector<int> stage_widths{24, 32, 48, 64};
  int fusion_width = 32;
  int latent_channels = 256;
  bool use_instance_norm = true;
  double slope = 0.2;

  int stages() const { return static_cast<int>(blocks_per_stage.size()); }
  Index spatial_divisor() const { return Index(1) << (stages() - 1); }

  /// ResNet-101-scale residual stack; expensive, kept behind this preset.
  static HypernetConfig deep_preset() {
    HypernetConfig cfg;
    cfg.blocks_per_stage = {2, 4, 23, 3};
    cfg.stage_widths = {64, 128, 256, 512};
    cfg.fusion_width = 64;
    return cfg;
  }
};

template <typename S>
struct ConvLayer {
  Tensor<S> w;  // OIHW
  Tensor<S> b;  // [O]
};

template <typename S>
struct ResidualBlock {
  ConvLayer<S> conv1, conv2;
  ConvLayer<S> skip;  // 1x1 projection, only when widths differ
  bool projected_skip = false;
};

template <typename S>
struct HypernetStage {
  ConvLayer<S> entry;  // 3x3, stride 2 except for the first stage
  std::vector<ResidualBlock<S>> blocks;
  ConvLayer<S> smooth;  // 3x3 to the fusion width
};

template <typename S>
struct HypernetParams {
  HypernetConfig cfg;
  std::vector<HypernetStage<S>> stages;
  ConvLayer<S> projection;  // 1x1, fusion -> latent channels

  void collect_parameters(const std::string& prefix, ParamSet<S>& out) {
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const std::string sp = prefix + ".stage" + std::to_string(s);
      out.push_back({sp + ".entry.w", stages[s].entry.w});
      out.push_back({sp + ".entry.b", stages[s].entry.b});
      for (std::size_t b = 0; b < stages[s].blocks.size(); ++b) {
        const std::string bp = sp + ".block" + std::to_string(b);
        auto& blk = stages[s].blocks[b];
        out.push_back({bp + ".conv1.w", blk.conv1.w});
        out.push_back({bp + ".conv1.b", blk.conv1.b});
        out.push_back({bp + ".conv2.w", blk.conv2.w});
        out.push_back({bp + ".conv2.b", blk.conv2.b});
        if (blk.projected_skip) {
          out.push_back({bp + ".skip.w", blk.skip.w});
          out.push_back({bp + ".skip.b", blk.skip.b});
        }
      }
      out.push_back({sp + ".smooth.w", stages[s].smooth.w});
      out.push_back({sp + ".smooth.b", stages[s].smooth.b});
    }
    out.push_back({prefix + ".proj.w", projection.w});
    out.push_back({prefix + ".proj.b", projection.b});
  }
};

namespace detail {

template <typename S>
ConvLayer<S> make_conv(Index out_ch, Index in_ch, Index k, Rng& rng, double slope) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double fan_in = static_cast<double>(in_ch * k * k);
  const double bound = gain * std::sqrt(3.0 / fan_in);
  ConvLayer<S> layer;
  layer.w = Tensor<S>::uniform({out_ch, in_ch, k, k}, rng, static_cast<S>(-bound),
                               static_cast<S>(bound));
  layer.b = Tensor<S>::zeros({out_ch});
  return layer;
}

template <typename S>
Tensor<S> residual_block_forward(const Tensor<S>& x, const ResidualBlock<S>& blk,
                                 bool use_norm, double slope) {
  Tensor<S> h = bias_add_nchw(conv2d(x, blk.conv1.w, 1, 1), blk.conv1.b);
  if (use_norm) h = instance_norm(h);
  h = leaky_relu(h, slope);
  h = bias_add_nchw(conv2d(h, blk.conv2.w, 1, 1), blk.conv2.b);
  Tensor<S> skip =
      blk.projected_skip ? bias_add_nchw(conv2d(x, blk.skip.w, 1, 0), blk.skip.b) : x;
  return add(skip, h);
}

}  // namespace detail

/// Builds hypernetwork parameters. The final 1x1 projection starts the
/// training at the identity of the conditioning mode: zero shifts for shift
/// modulation, unit scales for FiLM. Fully generated layers cannot start at
/// zero (deeper layers would receive no gradient through the zero
/// activations), so that mode starts from a small random projection instead.
template <typename S>
HypernetParams<S> make_hypernet(Index n_source, const HypernetConfig& cfg,
                                const ModulationPlan& plan, Rng& rng) {
  require(cfg.stages() >= 1, "hypernet: need at least one stage");
  require(cfg.stage_widths.size() == static_cast<std::size_t>(cfg.stages()),
          "hypernet: ", cfg.stages(), " stages but ", cfg.stage_widths.size(), " widths");
  require(cfg.latent_channels == plan.total_channels, "hypernet: configured for ",
          cfg.latent_channels, " latent channels but the plan needs ", plan.total_channels);

  HypernetParams<S> hp;
  hp.cfg = cfg;
  Index in = n_source;
  for (int s = 0; s < cfg.stages(); ++s) {
    HypernetStage<S> stage;
    const Index w = cfg.stage_widths[static_cast<std::size_t>(s)];
    stage.entry = detail::make_conv<S>(w, in, 3, rng, cfg.slope);
    for (int b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
      ResidualBlock<S> blk;
      blk.conv1 = detail::make_conv<S>(w, w, 3, rng, cfg.slope);
      blk.conv2 = detail::make_conv<S>(w, w, 3, rng, cfg.slope);
      stage.blocks.push_back(blk);
    }
    stage.smooth = detail::make_conv<S>(cfg.fusion_width, w, 3, rng, cfg.slope);
    hp.stages.push_back(stage);
    in = w;
  }

  hp.projection.w = Tensor<S>::zeros({cfg.latent_channels, cfg.fusion_width, 1, 1});
  hp.projection.b = Tensor<S>::zeros({cfg.latent_channels});
  if (plan.mode == ConditioningMode::FullHyper) {
    hp.projection.w = Tensor<S>::uniform({cfg.latent_channels, cfg.fusion_width, 1, 1}, rng,
                                         S(-0.01), S(0.01));
    hp.projection.b = Tensor<S>::uniform({cfg.latent_channels}, rng, S(-0.01), S(0.01));
  } else if (plan.mode == ConditioningMode::FiLM) {
    for (const auto& ls : plan.layers)
      if (ls.alpha_offset >= 0)
        for (Index c = 0; c < ls.width; ++c) hp.projection.b.data()[ls.alpha_offset + c] = S(1);
  }
  return hp;
}

/// Runs the encoder. Returns the latent field as [N, latent, H, W]; when
/// stage_features is given, the per-stage smoothed maps (before upsampling)
/// are exposed for inspection.
template <typename S>
Tensor<S> hypernet_forward(const Tensor<S>& source, const HypernetParams<S>& hp,
                           std::vector<Tensor<S>>* stage_features = nullptr) {
  require(source.ndim() == 4, "hypernet: expected NCHW source stack, got shape ",
          shape_str(source.shape()));
  const Index H = source.dim(2), W = source.dim(3);
  const Index div = hp.cfg.spatial_divisor();
  require(H % div == 0 && W % div == 0, "hypernet: input ", H, "x", W,
          " is not divisible by ", div, "; pad or crop the images first");

  Tensor<S> x = source;
  Tensor<S> fused;
  Index up = 1;
  for (int s = 0; s < hp.cfg.stages(); ++s) {
    const auto& stage = hp.stages[static_cast<std::size_t>(s)];
    const Index stride = s == 0 ? 1 : 2;
    if (s > 0) up *= 2;
    x = leaky_relu(bias_add_nchw(conv2d(x, stage.entry.w, stride, 1), stage.entry.b),
                   hp.cfg.slope);
    for (const auto& blk : stage.blocks)
      x = detail::residual_block_forward(x, blk, hp.cfg.use_instance_norm, hp.cfg.slope);
    Tensor<S> smoothed = bias_add_nchw(conv2d(x, stage.smooth.w, 1, 1), stage.smooth.b);
    if (stage_features) stage_features->push_back(smoothed);
    Tensor<S> full = up == 1 ? smoothed : upsample_nearest(smoothed, up);
    fused = fused.defined() ? add(fused, full) : full;
  }
  return bias_add_nchw(conv2d(fused, hp.projection.w, 1, 0), hp.projection.b);
}

}  // namespace cones
