#pragma once

#include <string>
#include <vector>

#include "cones/adam.hpp"
#include "cones/hypernet.hpp"
#include "cones/ops.hpp"

namespace cones {

/// Conditional patch discriminator: five 4x4 conv blocks over the
/// channel-concatenated (candidate, condition) pair, strides [2,2,2,1,1],
/// filters [64,128,256,512,1], leaky-relu 0.2 after all but the last block,
/// padding 1 throughout. Downsamples by 8 and emits a patch logit map.
template <typename S>
struct DiscriminatorParams {
  std::vector<ConvLayer<S>> blocks;
  std::vector<int> strides{2, 2, 2, 1, 1};
  double slope = 0.2;
  Index n_candidate = 1;
  Index n_condition = 3;

  void collect_parameters(const std::string& prefix, ParamSet<S>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.push_back({prefix + ".block" + std::to_string(i) + ".w", blocks[i].w});
      out.push_back({prefix + ".block" + std::to_string(i) + ".b", blocks[i].b});
    }
  }

  ParamSet<S> parameters() {
    ParamSet<S> out;
    collect_parameters("disc", out);
    return out;
  }

  void set_requires_grad(bool b) {
    for (auto& blk : blocks) {
      blk.w.set_requires_grad(b);
      blk.b.set_requires_grad(b);
    }
  }
};

template <typename S>
DiscriminatorParams<S> make_discriminator(Index n_candidate, Index n_condition, Rng& rng,
                                          std::vector<int> filters = {64, 128, 256, 512, 1}) {
  DiscriminatorParams<S> d;
  d.n_candidate = n_candidate;
  d.n_condition = n_condition;
  require(filters.size() == d.strides.size(), "discriminator: expected ", d.strides.size(),
          " filter counts, got ", filters.size());
  Index in = n_candidate + n_condition;
  for (int f : filters) {
    d.blocks.push_back(detail::make_conv<S>(f, in, 4, rng, d.slope));
    in = f;
  }
  return d;
}

template <typename S>
struct DiscriminatorOutput {
  Tensor<S> logits;                  // [N, 1, h', w'] patch logit map
  std::vector<Tensor<S>> features;  // post-activation maps of blocks 1..4
};

template <typename S>
DiscriminatorOutput<S> discriminate(const Tensor<S>& candidate, const Tensor<S>& condition,
                                    const DiscriminatorParams<S>& params) {
  require(candidate.ndim() == 4 && condition.ndim() == 4,
          "discriminate: expected NCHW inputs");
  require(candidate.dim(0) == condition.dim(0) && candidate.dim(2) == condition.dim(2) &&
              candidate.dim(3) == condition.dim(3),
          "discriminate: candidate ", shape_str(candidate.shape()),
          " and condition ", shape_str(condition.shape()), " are misaligned");
  require(candidate.dim(1) == params.n_candidate, "discriminate: expected ",
          params.n_candidate, " candidate channels, got ", candidate.dim(1));
  require(condition.dim(1) == params.n_condition, "discriminate: expected ",
          params.n_condition, " condition channels, got ", condition.dim(1));

  DiscriminatorOutput<S> out;
  Tensor<S> x = concat_channels(candidate, condition);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    x = bias_add_nchw(conv2d(x, params.blocks[i].w, params.strides[i], 1), params.blocks[i].b);
    if (i + 1 < params.blocks.size()) {
      x = leaky_relu(x, params.slope);
      out.features.push_back(x);
    }
  }
  out.logits = x;
  return out;
}

/// Receptive-field box of one output pixel through a conv chain, measured on
/// the input lattice: start offset, step between neighbouring outputs, size.
struct ReceptiveField {
  Index start = 0;  // input index of the field's left edge for output 0
  Index jump = 1;   // input-pixel step between adjacent outputs
  Index size = 1;   // field extent in input pixels
};

inline ReceptiveField conv_chain_receptive_field(const std::vector<int>& kernels,
                                                 const std::vector<int>& strides,
                                                 const std::vector<int>& pads) {
  ReceptiveField rf;
  Index jump = 1, size = 1, start = 0;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    size += (kernels[i] - 1) * jump;
    start -= static_cast<Index>(pads[i]) * jump;
    jump *= strides[i];
  }
  rf.jump = jump;
  rf.size = size;
  rf.start = start;
  return rf;
}

}  // namespace cones
