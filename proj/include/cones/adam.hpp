#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

/// A named trainable tensor; the name travels into checkpoints and errors.
template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
using ParamSet = std::vector<NamedParam<S>>;

template <typename S>
void zero_grads(ParamSet<S>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

/// Adam with the standard 1-indexed bias correction. Moment buffers are laid
/// out per parameter in the order the parameter set was registered.
template <typename S>
class AdamState {
 public:
  AdamState(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long step_count() const { return t_; }

  /// One update over the parameter set; parameters without a populated
  /// gradient are treated as zero-gradient.
  void step(ParamSet<S>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params[i].tensor.numel()), S(0));
        v_[i].assign(static_cast<std::size_t>(params[i].tensor.numel()), S(0));
      }
    }
    require(m_.size() == params.size(), "adam: parameter set size changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      require(m_[i].size() == static_cast<std::size_t>(p.tensor.numel()),
              "adam: shape of '", p.name, "' changed between steps");
      S* w = p.tensor.data();
      const bool has = p.tensor.has_grad();
      const S* g = has ? p.tensor.grad().data() : nullptr;
      for (std::size_t j = 0; j < m_[i].size(); ++j) {
        const double gj = has ? static_cast<double>(g[j]) : 0.0;
        require(!std::isnan(gj), "adam: NaN gradient in parameter '", p.name, "'");
        double mj = beta1_ * static_cast<double>(m_[i][j]) + (1.0 - beta1_) * gj;
        double vj = beta2_ * static_cast<double>(v_[i][j]) + (1.0 - beta2_) * gj * gj;
        m_[i][j] = static_cast<S>(mj);
        v_[i][j] = static_cast<S>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        w[j] = static_cast<S>(static_cast<double>(w[j]) -
                              lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

}  // namespace cones
