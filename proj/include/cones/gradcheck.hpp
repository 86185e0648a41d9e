#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cones/ops.hpp"
#include "cones/random.hpp"
#include "cones/tape.hpp"

namespace cones {

struct GradCheckReport {
  std::string op;
  int configs = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

namespace gradcheck_detail {

using Inputs = std::vector<Tensor<double>>;
using Forward = std::function<Tensor<double>(const Inputs&)>;

/// One randomized configuration: differentiable inputs plus a forward map
/// with any non-differentiable attributes (stride, factor, ...) baked in.
struct Config {
  Inputs inputs;
  Forward forward;
};

struct OpCheck {
  std::string name;
  std::function<Config(Rng&)> make;
};

inline Index rand_dim(Rng& rng, Index lo, Index hi) {
  return lo + rng.uniform_int(hi - lo + 1);
}

/// Uniform values kept away from the kinks of relu/abs-style functions.
inline Tensor<double> smooth_values(const Shape& shape, Rng& rng, double margin = 0.05) {
  Tensor<double> t = Tensor<double>::zeros(shape);
  for (auto& v : t.values()) {
    double x = rng.uniform(-2.0, 2.0);
    if (std::abs(x) < margin) x += (x >= 0 ? margin : -margin) * 2.0;
    v = x;
  }
  return t;
}

inline double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double acc = 0;
  for (Index i = 0; i < y.numel(); ++i) acc += y.at(i) * w.at(i);
  return acc;
}

/// Central-difference check of one configuration. Returns the worst relative
/// error across every element of every input.
inline double check_config(Config cfg, Rng& rng, double eps) {
  Tensor<double> probe = cfg.forward(cfg.inputs);
  Tensor<double> w = Tensor<double>::zeros(probe.shape());
  for (auto& v : w.values()) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

  std::vector<std::vector<double>> ad_grads;
  {
    Tape<double> tape;
    for (auto& in : cfg.inputs) in.set_requires_grad(true);
    Tensor<double> loss = sum(mul(cfg.forward(cfg.inputs), w));
    tape.backward(loss);
    for (auto& in : cfg.inputs)
      ad_grads.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.numel(), 0.0));
    for (auto& in : cfg.inputs) {
      in.zero_grad();
      in.set_requires_grad(false);
    }
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < cfg.inputs.size(); ++k) {
    auto& in = cfg.inputs[k];
    for (Index e = 0; e < in.numel(); ++e) {
      const double old = in.data()[e];
      in.data()[e] = old + eps;
      const double lp = weighted_sum(cfg.forward(cfg.inputs), w);
      in.data()[e] = old - eps;
      const double lm = weighted_sum(cfg.forward(cfg.inputs), w);
      in.data()[e] = old;
      const double fd = (lp - lm) / (2.0 * eps);
      const double ad = ad_grads[k][static_cast<std::size_t>(e)];
      const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline std::vector<OpCheck> op_registry() {
  std::vector<OpCheck> ops;

  auto elementwise_pair = [](Forward fwd) {
    return [fwd](Rng& rng) {
      Shape s{rand_dim(rng, 1, 4), rand_dim(rng, 1, 5)};
      return Config{{smooth_values(s, rng), smooth_values(s, rng)}, fwd};
    };
  };
  ops.push_back({"add", elementwise_pair([](const Inputs& in) { return add(in[0], in[1]); })});
  ops.push_back({"sub", elementwise_pair([](const Inputs& in) { return sub(in[0], in[1]); })});
  ops.push_back({"mul", elementwise_pair([](const Inputs& in) { return mul(in[0], in[1]); })});

  auto elementwise_single = [](Forward fwd) {
    return [fwd](Rng& rng) {
      Shape s{rand_dim(rng, 1, 4), rand_dim(rng, 1, 5)};
      return Config{{smooth_values(s, rng)}, fwd};
    };
  };
  ops.push_back(
      {"scale", elementwise_single([](const Inputs& in) { return scale(in[0], 1.7); })});
  ops.push_back({"add_scalar",
                 elementwise_single([](const Inputs& in) { return add_scalar(in[0], -0.3); })});
  ops.push_back({"leaky_relu",
                 elementwise_single([](const Inputs& in) { return leaky_relu(in[0], 0.2); })});
  ops.push_back({"relu", elementwise_single([](const Inputs& in) { return relu(in[0]); })});
  ops.push_back({"tanh", elementwise_single([](const Inputs& in) { return tanh_op(in[0]); })});
  ops.push_back(
      {"softplus", elementwise_single([](const Inputs& in) { return softplus(in[0]); })});
  ops.push_back({"abs", elementwise_single([](const Inputs& in) { return abs_op(in[0]); })});
  ops.push_back({"square", elementwise_single([](const Inputs& in) { return square(in[0]); })});
  ops.push_back({"sum", elementwise_single([](const Inputs& in) { return sum(in[0]); })});
  ops.push_back({"mean", elementwise_single([](const Inputs& in) { return mean(in[0]); })});

  ops.push_back({"rsqrt_eps", [](Rng& rng) {
                   Shape s{rand_dim(rng, 1, 3), rand_dim(rng, 1, 4)};
                   return Config{{Tensor<double>::uniform(s, rng, 0.5, 3.0)},
                                 [](const Inputs& in) { return rsqrt_eps(in[0], 1e-5); }};
                 }});

  ops.push_back({"matmul", [](Rng& rng) {
                   const Index m = rand_dim(rng, 1, 5), k = rand_dim(rng, 1, 5),
                               n = rand_dim(rng, 1, 5);
                   return Config{{smooth_values({m, k}, rng), smooth_values({k, n}, rng)},
                                 [](const Inputs& in) { return matmul(in[0], in[1]); }};
                 }});

  ops.push_back({"add_rowvec", [](Rng& rng) {
                   const Index m = rand_dim(rng, 1, 5), n = rand_dim(rng, 1, 5);
                   return Config{{smooth_values({m, n}, rng), smooth_values({n}, rng)},
                                 [](const Inputs& in) { return add_rowvec(in[0], in[1]); }};
                 }});

  ops.push_back({"rowwise_matvec", [](Rng& rng) {
                   const Index p = rand_dim(rng, 1, 5), i = rand_dim(rng, 1, 4),
                               o = rand_dim(rng, 1, 4);
                   return Config{{smooth_values({p, o * i}, rng), smooth_values({p, i}, rng)},
                                 [o](const Inputs& in) {
                                   return rowwise_matvec(in[0], in[1], o);
                                 }};
                 }});

  ops.push_back({"concat_cols", [](Rng& rng) {
                   const Index m = rand_dim(rng, 1, 4);
                   return Config{{smooth_values({m, rand_dim(rng, 1, 4)}, rng),
                                  smooth_values({m, rand_dim(rng, 1, 4)}, rng)},
                                 [](const Inputs& in) { return concat_cols(in[0], in[1]); }};
                 }});

  ops.push_back({"slice_cols", [](Rng& rng) {
                   const Index m = rand_dim(rng, 1, 4), n = rand_dim(rng, 2, 8);
                   const Index c0 = rand_dim(rng, 0, n - 1);
                   const Index c1 = rand_dim(rng, c0 + 1, n);
                   return Config{{smooth_values({m, n}, rng)},
                                 [c0, c1](const Inputs& in) {
                                   return slice_cols(in[0], c0, c1);
                                 }};
                 }});

  ops.push_back({"reshape", [](Rng& rng) {
                   const Index m = rand_dim(rng, 1, 4), n = rand_dim(rng, 1, 4);
                   return Config{{smooth_values({m, n}, rng)}, [](const Inputs& in) {
                                   return reshape(in[0], Shape{in[0].numel()});
                                 }};
                 }});

  auto nchw_config = [](Forward fwd) {
    return [fwd](Rng& rng) {
      Shape s{rand_dim(rng, 1, 2), rand_dim(rng, 1, 3), rand_dim(rng, 1, 4),
              rand_dim(rng, 1, 4)};
      return Config{{smooth_values(s, rng)}, fwd};
    };
  };
  ops.push_back(
      {"nchw_to_rows", nchw_config([](const Inputs& in) { return nchw_to_rows(in[0]); })});
  ops.push_back({"rows_to_nchw", nchw_config([](const Inputs& in) {
                   return rows_to_nchw(nchw_to_rows(in[0]), in[0].dim(0), in[0].dim(2),
                                       in[0].dim(3));
                 })});
  ops.push_back(
      {"spatial_mean", nchw_config([](const Inputs& in) { return spatial_mean(in[0]); })});

  // Finite differences need the per-channel variance to dominate the probe
  // step, so degenerate low-variance draws are resampled.
  ops.push_back({"instance_norm", [](Rng& rng) {
                   Tensor<double> x;
                   for (int tries = 0; tries < 1000; ++tries) {
                     Shape s{rand_dim(rng, 1, 2), rand_dim(rng, 1, 3), rand_dim(rng, 2, 4),
                             rand_dim(rng, 2, 4)};
                     x = smooth_values(s, rng);
                     const Index hw = x.dim(2) * x.dim(3);
                     double min_var = 1e30;
                     for (Index nc = 0; nc < x.dim(0) * x.dim(1); ++nc) {
                       double m = 0, v = 0;
                       for (Index i = 0; i < hw; ++i) m += x.at(nc * hw + i);
                       m /= static_cast<double>(hw);
                       for (Index i = 0; i < hw; ++i) {
                         const double d = x.at(nc * hw + i) - m;
                         v += d * d;
                       }
                       min_var = std::min(min_var, v / static_cast<double>(hw));
                     }
                     if (min_var > 0.2) break;
                   }
                   return Config{{x},
                                 [](const Inputs& in) { return instance_norm(in[0], 1e-5); }};
                 }});

  auto nc11_config = [](Forward fwd) {
    return [fwd](Rng& rng) {
      const Index n = rand_dim(rng, 1, 2), c = rand_dim(rng, 1, 3);
      Shape s{n, c, rand_dim(rng, 1, 4), rand_dim(rng, 1, 4)};
      return Config{{smooth_values(s, rng), smooth_values({n, c, 1, 1}, rng)}, fwd};
    };
  };
  ops.push_back(
      {"add_nc11", nc11_config([](const Inputs& in) { return add_nc11(in[0], in[1]); })});
  ops.push_back(
      {"sub_nc11", nc11_config([](const Inputs& in) { return sub_nc11(in[0], in[1]); })});
  ops.push_back(
      {"mul_nc11", nc11_config([](const Inputs& in) { return mul_nc11(in[0], in[1]); })});

  ops.push_back({"bias_add_nchw", [](Rng& rng) {
                   const Index c = rand_dim(rng, 1, 3);
                   Shape s{rand_dim(rng, 1, 2), c, rand_dim(rng, 1, 4), rand_dim(rng, 1, 4)};
                   return Config{{smooth_values(s, rng), smooth_values({c}, rng)},
                                 [](const Inputs& in) { return bias_add_nchw(in[0], in[1]); }};
                 }});

  ops.push_back({"upsample_nearest", [](Rng& rng) {
                   Shape s{rand_dim(rng, 1, 2), rand_dim(rng, 1, 2), rand_dim(rng, 1, 3),
                           rand_dim(rng, 1, 3)};
                   const Index f = rand_dim(rng, 1, 3);
                   return Config{{smooth_values(s, rng)}, [f](const Inputs& in) {
                                   return upsample_nearest(in[0], f);
                                 }};
                 }});

  auto conv_config = [](bool fuse_relu_mean) {
    return [fuse_relu_mean](Rng& rng) {
      Inputs in;
      Index stride = 1, pad = 0;
      // When the conv feeds a kink nonlinearity, resample until every
      // pre-activation stays clear of zero by several probe steps.
      for (int tries = 0; tries < 1000; ++tries) {
        const Index cin = rand_dim(rng, 1, 3), cout = rand_dim(rng, 1, 3);
        const Index kh = rand_dim(rng, 1, 4), kw = rand_dim(rng, 1, 4);
        const Index h = kh + rand_dim(rng, 0, 4), w = kw + rand_dim(rng, 0, 4);
        stride = rand_dim(rng, 1, 2);
        pad = rand_dim(rng, 0, 2);
        in = {smooth_values({rand_dim(rng, 1, 2), cin, h, w}, rng),
              smooth_values({cout, cin, kh, kw}, rng)};
        if (!fuse_relu_mean) break;
        Tensor<double> probe = conv2d(in[0], in[1], stride, pad);
        double closest = 1e30;
        for (Index i = 0; i < probe.numel(); ++i)
          closest = std::min(closest, std::abs(probe.at(i)));
        if (closest > 0.05) break;
      }
      return Config{in, [stride, pad, fuse_relu_mean](const Inputs& inputs) {
                      Tensor<double> c = conv2d(inputs[0], inputs[1], stride, pad);
                      if (fuse_relu_mean) return mean(leaky_relu(c, 0.2));
                      return c;
                    }};
    };
  };
  ops.push_back({"conv2d", conv_config(false)});
  ops.push_back({"conv_relu_mean", conv_config(true)});

  ops.push_back({"conv2d_pointwise", [](Rng& rng) {
                   const Index cin = rand_dim(rng, 1, 4), cout = rand_dim(rng, 1, 4);
                   return Config{{smooth_values({rand_dim(rng, 1, 2), cin, rand_dim(rng, 1, 4),
                                                 rand_dim(rng, 1, 4)},
                                                rng),
                                  smooth_values({cout, cin, 1, 1}, rng)},
                                 [](const Inputs& in) { return conv2d(in[0], in[1], 1, 0); }};
                 }});

  return ops;
}

}  // namespace gradcheck_detail

/// Runs the finite-difference suite: every differentiable operation, checked
/// over `configs_per_op` randomized shape/value configurations in 64-bit mode
/// against central differences. Returns one report per operation.
inline std::vector<GradCheckReport> run_gradient_checks(int configs_per_op = 100,
                                                        std::uint64_t seed = 20240901,
                                                        double eps = 1e-3, double tol = 1e-4) {
  std::vector<GradCheckReport> reports;
  Rng rng(mix_seed(seed, 0x67c0de));
  for (const auto& op : gradcheck_detail::op_registry()) {
    GradCheckReport rep;
    rep.op = op.name;
    rep.configs = configs_per_op;
    for (int c = 0; c < configs_per_op; ++c)
      rep.max_rel_err =
          std::max(rep.max_rel_err, gradcheck_detail::check_config(op.make(rng), rng, eps));
    rep.passed = rep.max_rel_err <= tol;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace cones
