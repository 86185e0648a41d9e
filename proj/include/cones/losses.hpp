#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cones/ops.hpp"

namespace cones {

struct LossWeights {
  double adv = 1.0;
  double rec = 100.0;
  double fm = 10.0;
  double reg = 10.0;
};

enum class AdvLossVariant { Hinge, LogSigmoid };

inline const char* to_string(AdvLossVariant v) {
  return v == AdvLossVariant::Hinge ? "hinge" : "log";
}

inline AdvLossVariant adv_variant_from(const std::string& s) {
  if (s == "hinge") return AdvLossVariant::Hinge;
  if (s == "log") return AdvLossVariant::LogSigmoid;
  fail("unknown adversarial loss variant '", s, "' (expected hinge|log)");
}

/// Hinge loss over patch logits: mean(max(0, 1 - D(real))) + mean(max(0, 1 + D(fake))).
template <typename S>
Tensor<S> loss_discriminator(const Tensor<S>& logits_real, const Tensor<S>& logits_fake) {
  detail::check_same_shape(logits_real, logits_fake, "loss_discriminator");
  Tensor<S> real_term = mean(relu(add_scalar(neg(logits_real), 1.0)));
  Tensor<S> fake_term = mean(relu(add_scalar(logits_fake, 1.0)));
  return add(real_term, fake_term);
}

/// Mean absolute error; with equally sized target images the global mean
/// equals the average of per-image means.
template <typename S>
Tensor<S> loss_reconstruction(const Tensor<S>& fake, const Tensor<S>& real) {
  detail::check_same_shape(fake, real, "loss_reconstruction");
  return mae(fake, real);
}

/// Generator adversarial term. The hinge companion -mean(D(fake)) is the
/// default; the log variant -mean(log sigmoid(D(fake))) is evaluated through
/// softplus(-x), which never saturates to -inf.
template <typename S>
Tensor<S> loss_adversarial_gen(const Tensor<S>& logits_fake,
                               AdvLossVariant variant = AdvLossVariant::Hinge) {
  if (variant == AdvLossVariant::Hinge) return neg(mean(logits_fake));
  return mean(softplus(neg(logits_fake)));
}

/// Sum over taps of size-normalized l1 gaps. The real branch is detached:
/// it acts as a constant teacher signal.
template <typename S>
Tensor<S> loss_feature_matching(const std::vector<Tensor<S>>& features_real,
                                const std::vector<Tensor<S>>& features_fake) {
  require(features_real.size() == features_fake.size(),
          "loss_feature_matching: tap counts differ, ", features_real.size(), " vs ",
          features_fake.size());
  require(!features_real.empty(), "loss_feature_matching: no feature taps");
  Tensor<S> total;
  for (std::size_t i = 0; i < features_real.size(); ++i) {
    detail::check_same_shape(features_real[i], features_fake[i], "loss_feature_matching");
    Tensor<S> term = mean(abs_op(sub(detach(features_real[i]), features_fake[i])));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

/// Size-normalized squared norm of the latent field, so the weight is
/// crop-size invariant.
template <typename S>
Tensor<S> loss_latent_reg(const Tensor<S>& latent_rows) {
  return mean(square(latent_rows));
}

template <typename S>
struct GeneratorLossParts {
  Tensor<S> rec, adv, fm, reg;
};

/// Weighted sum, evaluated in the fixed order rec, adv, fm, reg so the logged
/// total is reproducible to float associativity.
template <typename S>
Tensor<S> total_generator_loss(const GeneratorLossParts<S>& parts, const LossWeights& w) {
  const struct {
    const char* name;
    const Tensor<S>* part;
  } named[] = {{"rec", &parts.rec}, {"adv", &parts.adv}, {"fm", &parts.fm}, {"reg", &parts.reg}};
  for (const auto& [name, part] : named) {
    require(part->defined(), "total_generator_loss: missing '", name, "' term");
    require(!std::isnan(static_cast<double>(part->value())),
            "total_generator_loss: NaN in '", name, "' term");
  }
  Tensor<S> total = scale(parts.rec, w.rec);
  total = add(total, scale(parts.adv, w.adv));
  total = add(total, scale(parts.fm, w.fm));
  total = add(total, scale(parts.reg, w.reg));
  return total;
}

}  // namespace cones
