#pragma once

#include <string>
#include <vector>

#include "cones/coords.hpp"
#include "cones/field.hpp"
#include "cones/hypernet.hpp"

namespace cones {

/// Everything that defines the translation generator: the bottom-up encoder,
/// the shared coordinate MLP, and the conditioning wiring between them.
template <typename S>
struct GeneratorParams {
  ConditioningMode mode = ConditioningMode::ShiftModulation;
  bool use_intensity = true;
  EncodingConfig encoding;
  Index n_source = 3;
  Index n_target = 1;
  MlpParams<S> mlp;  // unused tensors in full-hypernetwork mode
  ModulationPlan plan;
  HypernetParams<S> hyper;

  Index mlp_input_dim() const {
    return encoding.feature_dim() + (use_intensity ? n_source : 0);
  }

  /// Trainable tensors. The shared MLP participates except in
  /// full-hypernetwork mode, where every MLP parameter is generated.
  ParamSet<S> parameters() {
    ParamSet<S> out;
    hyper.collect_parameters("hyper", out);
    if (mode != ConditioningMode::FullHyper) mlp.collect_parameters("mlp", out);
    return out;
  }

  void set_requires_grad(bool b) {
    ParamSet<S> ps = parameters();
    for (auto& p : ps) p.tensor.set_requires_grad(b);
  }
};

struct GeneratorConfig {
  ConditioningMode mode = ConditioningMode::ShiftModulation;
  bool use_intensity = true;
  EncodingConfig encoding;
  int n_source = 3;
  int n_target = 1;
  std::vector<int> mlp_hidden{64, 64, 64, 64};
  HypernetConfig hypernet;

  std::vector<int> mlp_widths() const {
    std::vector<int> w = mlp_hidden;
    w.push_back(n_target);
    return w;
  }
};

template <typename S>
GeneratorParams<S> make_generator(const GeneratorConfig& cfg, Rng& rng) {
  GeneratorParams<S> gen;
  gen.mode = cfg.mode;
  gen.use_intensity = cfg.use_intensity;
  gen.encoding = cfg.encoding;
  gen.n_source = cfg.n_source;
  gen.n_target = cfg.n_target;
  const Index input_dim =
      cfg.encoding.feature_dim() + (cfg.use_intensity ? cfg.n_source : 0);
  gen.mlp = make_mlp<S>(input_dim, cfg.mlp_widths(), rng);
  gen.plan = make_modulation_plan(cfg.mlp_widths(), input_dim, cfg.mode);
  HypernetConfig hc = cfg.hypernet;
  hc.latent_channels = static_cast<int>(gen.plan.total_channels);
  gen.hyper = make_hypernet<S>(cfg.n_source, hc, gen.plan, rng);
  return gen;
}

template <typename S>
struct TranslateResult {
  Tensor<S> images;       // [N, n_target, H, W]
  Tensor<S> latent_rows;  // [N*H*W, latent_channels]
};

namespace detail {
/// Positional encoding repeated across the batch so rows line up with
/// nchw_to_rows ordering. The encoding is a constant, never on the tape.
template <typename S>
Tensor<S> batched_encoding(Index n, Index h, Index w, const EncodingConfig& cfg) {
  const CoordGrid grid = make_coord_grid(h, w);
  Tensor<S> one = positional_encoding<S>(grid, cfg);
  if (n == 1) return one;
  const Index rows = one.dim(0), fdim = one.dim(1);
  Tensor<S> out = Tensor<S>::zeros({n * rows, fdim});
  for (Index i = 0; i < n; ++i)
    std::copy(one.data(), one.data() + rows * fdim, out.data() + i * rows * fdim);
  return out;
}
}  // namespace detail

/// Full translation pass: encoder -> per-pixel latent -> conditioned MLP over
/// the coordinate grid. Output spatial size equals the input size.
template <typename S>
TranslateResult<S> translate(const Tensor<S>& source, const GeneratorParams<S>& gen) {
  require(source.ndim() == 4, "translate: expected NCHW source stack, got shape ",
          shape_str(source.shape()));
  require(source.dim(1) == gen.n_source, "translate: expected ", gen.n_source,
          " source channels, got ", source.dim(1));
  const Index N = source.dim(0), H = source.dim(2), W = source.dim(3);

  Tensor<S> z = hypernet_forward(source, gen.hyper);
  Tensor<S> latent_rows = nchw_to_rows(z);
  LatentField<S> latent = make_latent_field(latent_rows, gen.plan);

  Tensor<S> encoded = detail::batched_encoding<S>(N, H, W, gen.encoding);
  Tensor<S> intensities;
  const Tensor<S>* intens_ptr = nullptr;
  if (gen.use_intensity) {
    intensities = nchw_to_rows(source);
    intens_ptr = &intensities;
  }

  Tensor<S> rows;
  switch (gen.mode) {
    case ConditioningMode::ShiftModulation:
      rows = mlp_forward_shift(encoded, intens_ptr, gen.mlp, latent);
      break;
    case ConditioningMode::FiLM:
      rows = mlp_forward_film(encoded, intens_ptr, gen.mlp, latent);
      break;
    case ConditioningMode::FullHyper:
      rows = mlp_forward_hyper(encoded, intens_ptr, latent, gen.mlp.hidden_act,
                               gen.mlp.output_act, gen.mlp.slope);
      break;
  }

  TranslateResult<S> res;
  res.images = rows_to_nchw(rows, N, H, W);
  res.latent_rows = latent.rows;
  return res;
}

}  // namespace cones
