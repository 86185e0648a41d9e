#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "cones/adam.hpp"
#include "cones/ops.hpp"

namespace cones {

enum class ConditioningMode { FullHyper, FiLM, ShiftModulation };

inline const char* to_string(ConditioningMode m) {
  switch (m) {
    case ConditioningMode::FullHyper: return "hyper";
    case ConditioningMode::FiLM: return "film";
    case ConditioningMode::ShiftModulation: return "shift";
  }
  return "?";
}

inline ConditioningMode conditioning_mode_from(const std::string& s) {
  if (s == "hyper") return ConditioningMode::FullHyper;
  if (s == "film") return ConditioningMode::FiLM;
  if (s == "shift") return ConditioningMode::ShiftModulation;
  fail("unknown conditioning mode '", s, "' (expected shift|film|hyper)");
}

enum class Activation { Identity, LeakyRelu, Tanh };

/// The shared coordinate MLP: weights w_i are [in, out], biases b_i are
/// [out]. Hidden layers use leaky-relu, the output layer tanh, unless a toy
/// configuration overrides the activations.
template <typename S>
struct MlpParams {
  std::vector<Tensor<S>> weights;
  std::vector<Tensor<S>> biases;
  double slope = 0.2;
  Activation hidden_act = Activation::LeakyRelu;
  Activation output_act = Activation::Tanh;

  Index layer_count() const { return static_cast<Index>(weights.size()); }
  Index input_dim() const { return weights.front().dim(0); }
  Index output_dim() const { return weights.back().dim(1); }

  std::vector<int> layer_widths() const {
    std::vector<int> w;
    for (const auto& t : weights) w.push_back(static_cast<int>(t.dim(1)));
    return w;
  }

  void collect_parameters(const std::string& prefix, ParamSet<S>& out) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.push_back({prefix + ".w" + std::to_string(i), weights[i]});
      out.push_back({prefix + ".b" + std::to_string(i), biases[i]});
    }
  }
};

namespace detail {
template <typename S>
Tensor<S> apply_activation(const Tensor<S>& x, Activation act, double slope) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::LeakyRelu: return leaky_relu(x, slope);
    case Activation::Tanh: return tanh_op(x);
  }
  fail("unknown activation");
}
}  // namespace detail

/// Kaiming-uniform initialized MLP. `widths` lists every layer's output
/// width, the last entry being the target channel count.
template <typename S>
MlpParams<S> make_mlp(Index input_dim, const std::vector<int>& widths, Rng& rng) {
  require(input_dim >= 1, "mlp: input dimension must be positive, got ", input_dim);
  require(!widths.empty(), "mlp: no layers specified");
  MlpParams<S> mlp;
  Index in = input_dim;
  for (int w : widths) {
    require(w >= 1, "mlp: layer widths must be positive, got ", w);
    const double gain = std::sqrt(2.0 / (1.0 + mlp.slope * mlp.slope));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    mlp.weights.push_back(Tensor<S>::uniform({in, w}, rng, static_cast<S>(-bound),
                                             static_cast<S>(bound)));
    const double bbound = 1.0 / std::sqrt(static_cast<double>(in));
    mlp.biases.push_back(
        Tensor<S>::uniform({w}, rng, static_cast<S>(-bbound), static_cast<S>(bbound)));
    in = w;
  }
  return mlp;
}

/// Where each layer's generated parameters live inside the latent vector.
/// Channels are assigned contiguously in layer order; within a FiLM layer the
/// scales come before the shifts, within a fully generated layer the weight
/// block comes before the bias.
struct LayerSlice {
  Index in_dim = 0;
  Index width = 0;
  Index alpha_offset = -1;   // FiLM scale, [width]
  Index beta_offset = -1;    // shift, [width]
  Index weight_offset = -1;  // full-hypernetwork weight block, [width * in_dim]
  bool modulated() const { return alpha_offset >= 0 || beta_offset >= 0 || weight_offset >= 0; }
};

struct ModulationPlan {
  ConditioningMode mode = ConditioningMode::ShiftModulation;
  std::vector<LayerSlice> layers;
  Index total_channels = 0;
};

/// Builds the slicing plan for a layer spec. Hidden layers are modulated;
/// the output layer stays unmodulated (except in full-hypernetwork mode,
/// which generates every parameter, or when modulate_output is forced on).
inline ModulationPlan make_modulation_plan(const std::vector<int>& widths, Index input_dim,
                                           ConditioningMode mode, bool modulate_output = false) {
  require(!widths.empty(), "modulation plan: no layers");
  ModulationPlan plan;
  plan.mode = mode;
  Index off = 0;
  Index in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    LayerSlice ls;
    ls.in_dim = in;
    ls.width = widths[i];
    const bool is_output = i + 1 == widths.size();
    const bool modulate = mode == ConditioningMode::FullHyper || !is_output || modulate_output;
    if (modulate) {
      if (mode == ConditioningMode::FullHyper) {
        ls.weight_offset = off;
        off += ls.width * ls.in_dim;
        ls.beta_offset = off;
        off += ls.width;
      } else if (mode == ConditioningMode::FiLM) {
        ls.alpha_offset = off;
        off += ls.width;
        ls.beta_offset = off;
        off += ls.width;
      } else {
        ls.beta_offset = off;
        off += ls.width;
      }
    }
    plan.layers.push_back(ls);
    in = ls.width;
  }
  plan.total_channels = off;
  return plan;
}

/// Exact number of per-pixel scalars the hypernetwork must generate for a
/// layer spec under the given conditioning mode.
inline Index generated_param_count(const std::vector<int>& widths, ConditioningMode mode,
                                   Index input_dim) {
  return make_modulation_plan(widths, input_dim, mode).total_channels;
}

/// Per-pixel latent codes in row layout [P, C] plus the plan that slices
/// them into per-layer modulations.
template <typename S>
struct LatentField {
  Tensor<S> rows;
  ModulationPlan plan;
};

template <typename S>
LatentField<S> make_latent_field(Tensor<S> rows, ModulationPlan plan) {
  require(rows.ndim() == 2, "latent field: expected [pixels, channels] rows, got shape ",
          shape_str(rows.shape()));
  const Index have = rows.dim(1);
  if (have != plan.total_channels) {
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
      const auto& ls = plan.layers[i];
      Index end = -1;
      if (ls.weight_offset >= 0) end = ls.beta_offset + ls.width;
      else if (ls.alpha_offset >= 0) end = ls.beta_offset + ls.width;
      else if (ls.beta_offset >= 0) end = ls.beta_offset + ls.width;
      if (end > have)
        fail("latent field: ", have, " channels cannot cover layer ", i, " (needs channels up to ",
             end, " of ", plan.total_channels, ")");
    }
    fail("latent field: expected exactly ", plan.total_channels, " channels, got ", have);
  }
  return LatentField<S>{std::move(rows), std::move(plan)};
}

namespace detail {

template <typename S>
Tensor<S> field_input(const Tensor<S>& encoded, const Tensor<std::type_identity_t<S>>* intensities) {
  if (intensities == nullptr) return encoded;
  require(intensities->dim(0) == encoded.dim(0),
          "field: intensity rows ", intensities->dim(0), " != encoded rows ", encoded.dim(0));
  return concat_cols(encoded, *intensities);
}

template <typename S>
Tensor<S> latent_slice(const LatentField<S>& latent, Index offset, Index width) {
  return slice_cols(latent.rows, offset, offset + width);
}

}  // namespace detail

/// Unconditioned forward pass of the shared MLP.
template <typename S>
Tensor<S> mlp_forward(const Tensor<S>& encoded, const Tensor<std::type_identity_t<S>>* intensities,
                      const MlpParams<S>& mlp) {
  Tensor<S> h = detail::field_input(encoded, intensities);
  const Index L = mlp.layer_count();
  for (Index i = 0; i < L; ++i) {
    Tensor<S> pre = add_rowvec(matmul(h, mlp.weights[i]), mlp.biases[i]);
    h = detail::apply_activation(pre, i + 1 == L ? mlp.output_act : mlp.hidden_act, mlp.slope);
  }
  return h;
}

/// Shift modulation: l_{i+1} = act(w_i l_i + b_i + beta_i(x)).
template <typename S>
Tensor<S> mlp_forward_shift(const Tensor<S>& encoded, const Tensor<std::type_identity_t<S>>* intensities,
                            const MlpParams<S>& mlp, const LatentField<S>& latent) {
  require(latent.plan.mode == ConditioningMode::ShiftModulation,
          "mlp_forward_shift: latent plan was built for mode '", to_string(latent.plan.mode),
          "'");
  Tensor<S> h = detail::field_input(encoded, intensities);
  const Index L = mlp.layer_count();
  require(static_cast<Index>(latent.plan.layers.size()) == L,
          "mlp_forward_shift: plan covers ", latent.plan.layers.size(), " layers, MLP has ", L);
  for (Index i = 0; i < L; ++i) {
    const auto& ls = latent.plan.layers[static_cast<std::size_t>(i)];
    Tensor<S> pre = add_rowvec(matmul(h, mlp.weights[i]), mlp.biases[i]);
    if (ls.beta_offset >= 0)
      pre = add(pre, detail::latent_slice(latent, ls.beta_offset, ls.width));
    h = detail::apply_activation(pre, i + 1 == L ? mlp.output_act : mlp.hidden_act, mlp.slope);
  }
  return h;
}

/// FiLM: l_{i+1} = alpha_i(x) * act(w_i l_i + b_i) + beta_i(x).
template <typename S>
Tensor<S> mlp_forward_film(const Tensor<S>& encoded, const Tensor<std::type_identity_t<S>>* intensities,
                           const MlpParams<S>& mlp, const LatentField<S>& latent) {
  require(latent.plan.mode == ConditioningMode::FiLM,
          "mlp_forward_film: latent plan was built for mode '", to_string(latent.plan.mode),
          "'");
  Tensor<S> h = detail::field_input(encoded, intensities);
  const Index L = mlp.layer_count();
  require(static_cast<Index>(latent.plan.layers.size()) == L,
          "mlp_forward_film: plan covers ", latent.plan.layers.size(), " layers, MLP has ", L);
  for (Index i = 0; i < L; ++i) {
    const auto& ls = latent.plan.layers[static_cast<std::size_t>(i)];
    Tensor<S> pre = add_rowvec(matmul(h, mlp.weights[i]), mlp.biases[i]);
    Tensor<S> act =
        detail::apply_activation(pre, i + 1 == L ? mlp.output_act : mlp.hidden_act, mlp.slope);
    if (ls.modulated()) {
      Tensor<S> alpha = detail::latent_slice(latent, ls.alpha_offset, ls.width);
      Tensor<S> beta = detail::latent_slice(latent, ls.beta_offset, ls.width);
      h = add(mul(alpha, act), beta);
    } else {
      h = act;
    }
  }
  return h;
}

/// Full hypernetwork: every weight matrix and bias comes from the latent,
/// a different MLP at every pixel. No shared parameters are involved.
template <typename S>
Tensor<S> mlp_forward_hyper(const Tensor<S>& encoded, const Tensor<std::type_identity_t<S>>* intensities,
                            const LatentField<S>& latent, Activation hidden_act,
                            Activation output_act, double slope) {
  require(latent.plan.mode == ConditioningMode::FullHyper,
          "mlp_forward_hyper: latent plan was built for mode '", to_string(latent.plan.mode),
          "'");
  Tensor<S> h = detail::field_input(encoded, intensities);
  const Index L = static_cast<Index>(latent.plan.layers.size());
  for (Index i = 0; i < L; ++i) {
    const auto& ls = latent.plan.layers[static_cast<std::size_t>(i)];
    require(h.dim(1) == ls.in_dim, "mlp_forward_hyper: layer ", i, " expects width ", ls.in_dim,
            ", got ", h.dim(1));
    Tensor<S> w = detail::latent_slice(latent, ls.weight_offset, ls.width * ls.in_dim);
    Tensor<S> beta = detail::latent_slice(latent, ls.beta_offset, ls.width);
    Tensor<S> pre = add(rowwise_matvec(w, h, ls.width), beta);
    h = detail::apply_activation(pre, i + 1 == L ? output_act : hidden_act, slope);
  }
  return h;
}

}  // namespace cones
