#pragma once

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "cones/tape.hpp"
#include "cones/tensor.hpp"

namespace cones {

namespace detail {

template <typename S, typename F>
void record_if(bool inputs_need_grad, Tensor<S>& y, F&& backprop) {
  if (inputs_need_grad && Tape<S>::recording()) {
    y.set_requires_grad(true);
    Tape<S>::active()->record(std::forward<F>(backprop));
  }
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  require(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
}

template <typename S>
void check_nchw(const Tensor<S>& t, const char* op) {
  require(t.ndim() == 4, op, ": expected NCHW tensor, got shape ", shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.as_array() = a.as_array() + b.as_array();
  detail::record_if(a.requires_grad() || b.requires_grad(), y,
                    [a, b, y]() mutable {
                      if (!y.has_grad()) return;
                      const auto& g = y.grad();
                      const Index n = static_cast<Index>(g.size());
                      if (a.requires_grad()) a.accumulate_grad(g.data(), n);
                      if (b.requires_grad()) b.accumulate_grad(g.data(), n);
                    });
  return y;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.as_array() = a.as_array() - b.as_array();
  detail::record_if(a.requires_grad() || b.requires_grad(), y,
                    [a, b, y]() mutable {
                      if (!y.has_grad()) return;
                      const auto& g = y.grad();
                      const Index n = static_cast<Index>(g.size());
                      if (a.requires_grad()) a.accumulate_grad(g.data(), n);
                      if (b.requires_grad()) {
                        auto& gb = b.grad_buffer();
                        for (Index i = 0; i < n; ++i) gb[i] -= g[i];
                      }
                    });
  return y;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.as_array() = a.as_array() * b.as_array();
  detail::record_if(a.requires_grad() || b.requires_grad(), y,
                    [a, b, y]() mutable {
                      if (!y.has_grad()) return;
                      const auto& g = y.grad();
                      const Index n = static_cast<Index>(g.size());
                      if (a.requires_grad()) {
                        auto& ga = a.grad_buffer();
                        const S* bv = b.data();
                        for (Index i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
                      }
                      if (b.requires_grad()) {
                        auto& gb = b.grad_buffer();
                        const S* av = a.data();
                        for (Index i = 0; i < n; ++i) gb[i] += g[i] * av[i];
                      }
                    });
  return y;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double c) {
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.as_array() = a.as_array() * static_cast<S>(c);
  detail::record_if(a.requires_grad(), y, [a, y, c]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * static_cast<S>(c);
  });
  return y;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, double c) {
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.as_array() = a.as_array() + static_cast<S>(c);
  detail::record_if(a.requires_grad(), y, [a, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    a.accumulate_grad(g.data(), static_cast<Index>(g.size()));
  });
  return y;
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, -1.0);
}

template <typename S>
Tensor<S> detach(const Tensor<S>& a) {
  return a.detached();
}

// ---------------------------------------------------------------------------
// Broadcast against per-(sample, channel) statistics of shape [N, C, 1, 1]
// ---------------------------------------------------------------------------

namespace detail {
template <typename S>
void check_nc11(const Tensor<S>& x, const Tensor<S>& s, const char* op) {
  check_nchw(x, op);
  require(s.ndim() == 4 && s.dim(2) == 1 && s.dim(3) == 1 && s.dim(0) == x.dim(0) &&
              s.dim(1) == x.dim(1),
          op, ": expected stats of shape [", x.dim(0), ", ", x.dim(1), ", 1, 1], got ",
          shape_str(s.shape()));
}
}  // namespace detail

template <typename S>
Tensor<S> add_nc11(const Tensor<S>& x, const Tensor<S>& s) {
  detail::check_nc11(x, s, "add_nc11");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* sv = s.data();
  S* yv = y.data();
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index i = 0; i < HW; ++i) yv[nc * HW + i] = xv[nc * HW + i] + sv[nc];
  detail::record_if(x.requires_grad() || s.requires_grad(), y, [x, s, y, N, C, HW]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    if (x.requires_grad()) x.accumulate_grad(g.data(), static_cast<Index>(g.size()));
    if (s.requires_grad()) {
      auto& gs = s.grad_buffer();
      for (Index nc = 0; nc < N * C; ++nc) {
        S acc = 0;
        for (Index i = 0; i < HW; ++i) acc += g[nc * HW + i];
        gs[nc] += acc;
      }
    }
  });
  return y;
}

template <typename S>
Tensor<S> sub_nc11(const Tensor<S>& x, const Tensor<S>& s) {
  detail::check_nc11(x, s, "sub_nc11");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* sv = s.data();
  S* yv = y.data();
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index i = 0; i < HW; ++i) yv[nc * HW + i] = xv[nc * HW + i] - sv[nc];
  detail::record_if(x.requires_grad() || s.requires_grad(), y, [x, s, y, N, C, HW]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    if (x.requires_grad()) x.accumulate_grad(g.data(), static_cast<Index>(g.size()));
    if (s.requires_grad()) {
      auto& gs = s.grad_buffer();
      for (Index nc = 0; nc < N * C; ++nc) {
        S acc = 0;
        for (Index i = 0; i < HW; ++i) acc += g[nc * HW + i];
        gs[nc] -= acc;
      }
    }
  });
  return y;
}

template <typename S>
Tensor<S> mul_nc11(const Tensor<S>& x, const Tensor<S>& s) {
  detail::check_nc11(x, s, "mul_nc11");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* sv = s.data();
  S* yv = y.data();
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index i = 0; i < HW; ++i) yv[nc * HW + i] = xv[nc * HW + i] * sv[nc];
  detail::record_if(x.requires_grad() || s.requires_grad(), y, [x, s, y, N, C, HW]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    if (x.requires_grad()) {
      auto& gx = x.grad_buffer();
      const S* sv2 = s.data();
      for (Index nc = 0; nc < N * C; ++nc)
        for (Index i = 0; i < HW; ++i) gx[nc * HW + i] += g[nc * HW + i] * sv2[nc];
    }
    if (s.requires_grad()) {
      auto& gs = s.grad_buffer();
      const S* xv2 = x.data();
      for (Index nc = 0; nc < N * C; ++nc) {
        S acc = 0;
        for (Index i = 0; i < HW; ++i) acc += g[nc * HW + i] * xv2[nc * HW + i];
        gs[nc] += acc;
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, double slope) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const S k = static_cast<S>(slope);
  const Index n = x.numel();
  for (Index i = 0; i < n; ++i) yv[i] = xv[i] >= S(0) ? xv[i] : k * xv[i];
  detail::record_if(x.requires_grad(), y, [x, y, k]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* xv2 = x.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += xv2[i] >= S(0) ? g[i] : k * g[i];
  });
  return y;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return leaky_relu(x, 0.0);
}

template <typename S>
Tensor<S> tanh_op(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const Index n = x.numel();
  for (Index i = 0; i < n; ++i) yv[i] = std::tanh(xv[i]);
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* yv2 = y.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (S(1) - yv2[i] * yv2[i]);
  });
  return y;
}

/// log(1 + exp(x)), evaluated in the overflow-safe branch form.
template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const Index n = x.numel();
  for (Index i = 0; i < n; ++i) {
    const S v = xv[i];
    yv[i] = v > S(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* xv2 = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S v = xv2[i];
      const S sig = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                              : std::exp(v) / (S(1) + std::exp(v));
      gx[i] += g[i] * sig;
    }
  });
  return y;
}

template <typename S>
Tensor<S> abs_op(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.as_array() = x.as_array().abs();
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* xv = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S s = xv[i] > S(0) ? S(1) : (xv[i] < S(0) ? S(-1) : S(0));
      gx[i] += g[i] * s;
    }
  });
  return y;
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.as_array() = x.as_array() * x.as_array();
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* xv = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * S(2) * xv[i];
  });
  return y;
}

/// (x + eps)^(-1/2); the argument must stay positive.
template <typename S>
Tensor<S> rsqrt_eps(const Tensor<S>& x, double eps) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const Index n = x.numel();
  for (Index i = 0; i < n; ++i) {
    const S v = xv[i] + static_cast<S>(eps);
    require(v > S(0), "rsqrt_eps: nonpositive argument ", static_cast<double>(v));
    yv[i] = S(1) / std::sqrt(v);
  }
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const S* yv2 = y.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * S(-0.5) * yv2[i] * yv2[i] * yv2[i];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  const S* xv = x.data();
  const Index n = x.numel();
  for (Index i = 0; i < n; ++i) acc += xv[i];  // fixed row-major order
  Tensor<S> y = Tensor<S>::scalar(acc);
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const S g = y.grad()[0];
    auto& gx = x.grad_buffer();
    for (auto& v : gx) v += g;
  });
  return y;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const Index n = x.numel();
  S acc = 0;
  const S* xv = x.data();
  for (Index i = 0; i < n; ++i) acc += xv[i];
  Tensor<S> y = Tensor<S>::scalar(acc / static_cast<S>(n));
  detail::record_if(x.requires_grad(), y, [x, y, n]() mutable {
    if (!y.has_grad()) return;
    const S g = y.grad()[0] / static_cast<S>(n);
    auto& gx = x.grad_buffer();
    for (auto& v : gx) v += g;
  });
  return y;
}

/// Mean over the spatial dimensions: [N, C, H, W] -> [N, C, 1, 1].
template <typename S>
Tensor<S> spatial_mean(const Tensor<S>& x) {
  detail::check_nchw(x, "spatial_mean");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros({N, C, 1, 1});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index nc = 0; nc < N * C; ++nc) {
    S acc = 0;
    for (Index i = 0; i < HW; ++i) acc += xv[nc * HW + i];
    yv[nc] = acc / static_cast<S>(HW);
  }
  detail::record_if(x.requires_grad(), y, [x, y, N, C, HW]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    for (Index nc = 0; nc < N * C; ++nc) {
      const S gv = g[nc] / static_cast<S>(HW);
      for (Index i = 0; i < HW; ++i) gx[nc * HW + i] += gv;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Matrix operations (rows are pixels or batch entries)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: expected 2-D operands, got ",
          shape_str(a.shape()), " and ", shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dimensions differ, ", k, " vs ", k2);
  Tensor<S> y = Tensor<S>::zeros({m, n});
  y.as_matrix(m, n).noalias() = a.as_matrix(m, k) * b.as_matrix(k, n);
  detail::record_if(a.requires_grad() || b.requires_grad(), y, [a, b, y, m, k, n]() mutable {
    if (!y.has_grad()) return;
    typename Tensor<S>::ConstMatrixMap gy(y.grad_buffer().data(), m, n);
    if (a.requires_grad())
      a.grad_matrix(m, k).noalias() += gy * b.as_matrix(k, n).transpose();
    if (b.requires_grad())
      b.grad_matrix(k, n).noalias() += a.as_matrix(m, k).transpose() * gy;
  });
  return y;
}

/// Adds a [n] bias row vector to every row of a [m, n] matrix.
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b) {
  require(x.ndim() == 2, "add_rowvec: expected 2-D input, got ", shape_str(x.shape()));
  require(b.ndim() == 1 && b.dim(0) == x.dim(1), "add_rowvec: bias shape ",
          shape_str(b.shape()), " does not match row width ", x.dim(1));
  const Index m = x.dim(0), n = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros({m, n});
  const S* xv = x.data();
  const S* bv = b.data();
  S* yv = y.data();
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) yv[i * n + j] = xv[i * n + j] + bv[j];
  detail::record_if(x.requires_grad() || b.requires_grad(), y, [x, b, y, m, n]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    if (x.requires_grad()) x.accumulate_grad(g.data(), m * n);
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
  return y;
}

/// Applies a different [out, in] matrix to every row: weights are packed as
/// [rows, out*in] (row-major per row), x is [rows, in], result is [rows, out].
template <typename S>
Tensor<S> rowwise_matvec(const Tensor<S>& weights, const Tensor<S>& x, Index out_dim) {
  require(weights.ndim() == 2 && x.ndim() == 2, "rowwise_matvec: expected 2-D operands");
  const Index rows = x.dim(0), in_dim = x.dim(1);
  require(weights.dim(0) == rows, "rowwise_matvec: row counts differ, ", weights.dim(0), " vs ",
          rows);
  require(weights.dim(1) == out_dim * in_dim, "rowwise_matvec: weight width ", weights.dim(1),
          " != out*in = ", out_dim * in_dim);
  Tensor<S> y = Tensor<S>::zeros({rows, out_dim});
  const S* wv = weights.data();
  const S* xv = x.data();
  S* yv = y.data();
  for (Index r = 0; r < rows; ++r) {
    const S* w = wv + r * out_dim * in_dim;
    const S* xr = xv + r * in_dim;
    S* yr = yv + r * out_dim;
    for (Index o = 0; o < out_dim; ++o) {
      S acc = 0;
      const S* wrow = w + o * in_dim;
      for (Index i = 0; i < in_dim; ++i) acc += wrow[i] * xr[i];
      yr[o] = acc;
    }
  }
  detail::record_if(weights.requires_grad() || x.requires_grad(), y,
                    [weights, x, y, rows, in_dim, out_dim]() mutable {
                      if (!y.has_grad()) return;
                      const auto& g = y.grad();
                      const S* wv2 = weights.data();
                      const S* xv2 = x.data();
                      if (weights.requires_grad()) {
                        auto& gw = weights.grad_buffer();
                        for (Index r = 0; r < rows; ++r)
                          for (Index o = 0; o < out_dim; ++o) {
                            const S go = g[r * out_dim + o];
                            S* grow = gw.data() + (r * out_dim + o) * in_dim;
                            const S* xr = xv2 + r * in_dim;
                            for (Index i = 0; i < in_dim; ++i) grow[i] += go * xr[i];
                          }
                      }
                      if (x.requires_grad()) {
                        auto& gx = x.grad_buffer();
                        for (Index r = 0; r < rows; ++r) {
                          const S* w = wv2 + r * out_dim * in_dim;
                          S* gxr = gx.data() + r * in_dim;
                          for (Index o = 0; o < out_dim; ++o) {
                            const S go = g[r * out_dim + o];
                            const S* wrow = w + o * in_dim;
                            for (Index i = 0; i < in_dim; ++i) gxr[i] += go * wrow[i];
                          }
                        }
                      }
                    });
  return y;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts[0].dim(0);
  Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require(p.ndim() == 2 && p.dim(0) == rows, "concat_cols: all parts must be 2-D with ", rows,
            " rows, got ", shape_str(p.shape()));
    total += p.dim(1);
    needs = needs || p.requires_grad();
  }
  Tensor<S> y = Tensor<S>::zeros({rows, total});
  S* yv = y.data();
  Index off = 0;
  for (const auto& p : parts) {
    const Index w = p.dim(1);
    const S* pv = p.data();
    for (Index r = 0; r < rows; ++r)
      std::memcpy(yv + r * total + off, pv + r * w, sizeof(S) * static_cast<std::size_t>(w));
    off += w;
  }
  detail::record_if(needs, y, [parts, y, rows, total]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    Index off2 = 0;
    for (auto& p : parts) {
      const Index w = p.dim(1);
      if (p.requires_grad()) {
        auto& gp = p.grad_buffer();
        for (Index r = 0; r < rows; ++r)
          for (Index j = 0; j < w; ++j) gp[r * w + j] += g[r * total + off2 + j];
      }
      off2 += w;
    }
  });
  return y;
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_cols(std::vector<Tensor<S>>{a, b});
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, Index c0, Index c1) {
  require(x.ndim() == 2, "slice_cols: expected 2-D input, got ", shape_str(x.shape()));
  const Index rows = x.dim(0), cols = x.dim(1);
  require(c0 >= 0 && c0 < c1 && c1 <= cols, "slice_cols: range [", c0, ", ", c1,
          ") invalid for width ", cols);
  const Index w = c1 - c0;
  Tensor<S> y = Tensor<S>::zeros({rows, w});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index r = 0; r < rows; ++r)
    std::memcpy(yv + r * w, xv + r * cols + c0, sizeof(S) * static_cast<std::size_t>(w));
  detail::record_if(x.requires_grad(), y, [x, y, rows, cols, c0, w]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < w; ++j) gx[r * cols + c0 + j] += g[r * w + j];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Shape movement
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  const Index n = shape_numel(shape);
  require(n == x.numel(), "reshape: cannot view ", x.numel(), " elements as ",
          shape_str(shape));
  Tensor<S> y = Tensor<S>::from(std::move(shape), x.values());
  detail::record_if(x.requires_grad(), y, [x, y]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    x.accumulate_grad(g.data(), static_cast<Index>(g.size()));
  });
  return y;
}

/// [N, C, H, W] -> [N*H*W, C]; row index is (n*H + h)*W + w.
template <typename S>
Tensor<S> nchw_to_rows(const Tensor<S>& x) {
  detail::check_nchw(x, "nchw_to_rows");
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<S> y = Tensor<S>::zeros({N * H * W, C});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S* src = xv + (n * C + c) * H * W;
      for (Index hw = 0; hw < H * W; ++hw) yv[(n * H * W + hw) * C + c] = src[hw];
    }
  detail::record_if(x.requires_grad(), y, [x, y, N, C, H, W]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c) {
        S* dst = gx.data() + (n * C + c) * H * W;
        for (Index hw = 0; hw < H * W; ++hw) dst[hw] += g[(n * H * W + hw) * C + c];
      }
  });
  return y;
}

/// Inverse of nchw_to_rows.
template <typename S>
Tensor<S> rows_to_nchw(const Tensor<S>& x, Index N, Index H, Index W) {
  require(x.ndim() == 2, "rows_to_nchw: expected 2-D input, got ", shape_str(x.shape()));
  require(x.dim(0) == N * H * W, "rows_to_nchw: ", x.dim(0), " rows cannot fill ", N, "x", H,
          "x", W);
  const Index C = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros({N, C, H, W});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      S* dst = yv + (n * C + c) * H * W;
      for (Index hw = 0; hw < H * W; ++hw) dst[hw] = xv[(n * H * W + hw) * C + c];
    }
  detail::record_if(x.requires_grad(), y, [x, y, N, C, H, W]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c) {
        const S* src = g.data() + (n * C + c) * H * W;
        for (Index hw = 0; hw < H * W; ++hw) gx[(n * H * W + hw) * C + c] += src[hw];
      }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Convolution and friends
// ---------------------------------------------------------------------------

inline Index conv_out_size(Index in, Index kernel, Index stride, Index pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

/// Gathers one sample into an im2col buffer of shape [C*kh*kw, Ho*Wo].
template <typename S>
void im2col(const S* x, Index C, Index H, Index W, Index kh, Index kw, Index stride, Index pad,
            Index Ho, Index Wo, S* col) {
  for (Index c = 0; c < C; ++c)
    for (Index ki = 0; ki < kh; ++ki)
      for (Index kj = 0; kj < kw; ++kj) {
        S* row = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (Index ho = 0; ho < Ho; ++ho) {
          const Index ih = ho * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            for (Index wo = 0; wo < Wo; ++wo) row[ho * Wo + wo] = S(0);
            continue;
          }
          const S* src = x + (c * H + ih) * W;
          for (Index wo = 0; wo < Wo; ++wo) {
            const Index iw = wo * stride - pad + kj;
            row[ho * Wo + wo] = (iw >= 0 && iw < W) ? src[iw] : S(0);
          }
        }
      }
}

/// Scatter-add of an im2col-layout gradient back onto the input sample.
template <typename S>
void col2im_add(const S* col, Index C, Index H, Index W, Index kh, Index kw, Index stride,
                Index pad, Index Ho, Index Wo, S* gx) {
  for (Index c = 0; c < C; ++c)
    for (Index ki = 0; ki < kh; ++ki)
      for (Index kj = 0; kj < kw; ++kj) {
        const S* row = col + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (Index ho = 0; ho < Ho; ++ho) {
          const Index ih = ho * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          S* dst = gx + (c * H + ih) * W;
          for (Index wo = 0; wo < Wo; ++wo) {
            const Index iw = wo * stride - pad + kj;
            if (iw >= 0 && iw < W) dst[iw] += row[ho * Wo + wo];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation (no kernel flip) of an NCHW input with an OIHW kernel,
/// zero padding. GEMM-backed via an im2col gather; the 1x1/stride-1 case maps
/// straight onto the input without a gather.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, Index stride, Index pad) {
  detail::check_nchw(x, "conv2d");
  require(kernel.ndim() == 4, "conv2d: expected OIHW kernel, got shape ",
          shape_str(kernel.shape()));
  require(stride >= 1, "conv2d: stride must be positive, got ", stride);
  require(pad >= 0, "conv2d: padding must be non-negative, got ", pad);
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index O = kernel.dim(0), Ck = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  require(C == Ck, "conv2d: input has ", C, " channels but kernel expects ", Ck);
  const Index Ho = conv_out_size(H, kh, stride, pad);
  const Index Wo = conv_out_size(W, kw, stride, pad);
  require(Ho >= 1 && Wo >= 1, "conv2d: kernel ", kh, "x", kw, " with stride ", stride, ", pad ",
          pad, " does not fit input ", H, "x", W);

  Tensor<S> y = Tensor<S>::zeros({N, O, Ho, Wo});
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  auto kmat = kernel.as_matrix(O, C * kh * kw);

  std::shared_ptr<std::vector<S>> cols;  // cached for backward
  if (!pointwise) {
    cols = std::make_shared<std::vector<S>>(
        static_cast<std::size_t>(N * C * kh * kw * Ho * Wo));
    for (Index n = 0; n < N; ++n) {
      S* col = cols->data() + n * C * kh * kw * Ho * Wo;
      detail::im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col);
      typename Tensor<S>::MatrixMap ym(y.data() + n * O * Ho * Wo, O, Ho * Wo);
      typename Tensor<S>::ConstMatrixMap cm(col, C * kh * kw, Ho * Wo);
      ym.noalias() = kmat * cm;
    }
  } else {
    for (Index n = 0; n < N; ++n) {
      typename Tensor<S>::MatrixMap ym(y.data() + n * O * H * W, O, H * W);
      typename Tensor<S>::ConstMatrixMap xm(x.data() + n * C * H * W, C, H * W);
      ym.noalias() = kmat * xm;
    }
  }

  detail::record_if(
      x.requires_grad() || kernel.requires_grad(), y,
      [x, kernel, y, cols, N, C, H, W, O, kh, kw, stride, pad, Ho, Wo, pointwise]() mutable {
        if (!y.has_grad()) return;
        const Index ck = C * kh * kw;
        auto kmat2 = kernel.as_matrix(O, ck);
        std::vector<S> gcol;
        if (!pointwise && x.requires_grad())
          gcol.resize(static_cast<std::size_t>(ck * Ho * Wo));
        for (Index n = 0; n < N; ++n) {
          typename Tensor<S>::ConstMatrixMap gy(y.grad_buffer().data() + n * O * Ho * Wo, O,
                                                Ho * Wo);
          if (pointwise) {
            typename Tensor<S>::ConstMatrixMap xm(x.data() + n * C * H * W, C, H * W);
            if (kernel.requires_grad())
              kernel.grad_matrix(O, ck).noalias() += gy * xm.transpose();
            if (x.requires_grad()) {
              typename Tensor<S>::MatrixMap gx(x.grad_buffer().data() + n * C * H * W, C,
                                               H * W);
              gx.noalias() += kmat2.transpose() * gy;
            }
          } else {
            typename Tensor<S>::ConstMatrixMap cm(cols->data() + n * ck * Ho * Wo, ck, Ho * Wo);
            if (kernel.requires_grad())
              kernel.grad_matrix(O, ck).noalias() += gy * cm.transpose();
            if (x.requires_grad()) {
              typename Tensor<S>::MatrixMap gc(gcol.data(), ck, Ho * Wo);
              gc.noalias() = kmat2.transpose() * gy;
              detail::col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                 x.grad_buffer().data() + n * C * H * W);
            }
          }
        }
      });
  return y;
}

/// Concatenates two NCHW tensors along the channel axis.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_nchw(a, "concat_channels");
  detail::check_nchw(b, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: inputs misaligned, ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
  const Index N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  Tensor<S> y = Tensor<S>::zeros({N, Ca + Cb, a.dim(2), a.dim(3)});
  S* yv = y.data();
  for (Index n = 0; n < N; ++n) {
    std::memcpy(yv + n * (Ca + Cb) * HW, a.data() + n * Ca * HW,
                sizeof(S) * static_cast<std::size_t>(Ca * HW));
    std::memcpy(yv + (n * (Ca + Cb) + Ca) * HW, b.data() + n * Cb * HW,
                sizeof(S) * static_cast<std::size_t>(Cb * HW));
  }
  detail::record_if(a.requires_grad() || b.requires_grad(), y,
                    [a, b, y, N, Ca, Cb, HW]() mutable {
                      if (!y.has_grad()) return;
                      const auto& g = y.grad();
                      if (a.requires_grad()) {
                        auto& ga = a.grad_buffer();
                        for (Index n = 0; n < N; ++n)
                          for (Index i = 0; i < Ca * HW; ++i)
                            ga[n * Ca * HW + i] += g[n * (Ca + Cb) * HW + i];
                      }
                      if (b.requires_grad()) {
                        auto& gb = b.grad_buffer();
                        for (Index n = 0; n < N; ++n)
                          for (Index i = 0; i < Cb * HW; ++i)
                            gb[n * Cb * HW + i] += g[(n * (Ca + Cb) + Ca) * HW + i];
                      }
                    });
  return y;
}

/// Adds a per-channel bias of shape [C] across an NCHW tensor.
template <typename S>
Tensor<S> bias_add_nchw(const Tensor<S>& x, const Tensor<S>& b) {
  detail::check_nchw(x, "bias_add_nchw");
  require(b.ndim() == 1 && b.dim(0) == x.dim(1), "bias_add_nchw: bias shape ",
          shape_str(b.shape()), " does not match ", x.dim(1), " channels");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* bv = b.data();
  S* yv = y.data();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S bc = bv[c];
      const Index base = (n * C + c) * HW;
      for (Index i = 0; i < HW; ++i) yv[base + i] = xv[base + i] + bc;
    }
  detail::record_if(x.requires_grad() || b.requires_grad(), y, [x, b, y, N, C, HW]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    if (x.requires_grad()) x.accumulate_grad(g.data(), static_cast<Index>(g.size()));
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
          S acc = 0;
          const Index base = (n * C + c) * HW;
          for (Index i = 0; i < HW; ++i) acc += g[base + i];
          gb[c] += acc;
        }
    }
  });
  return y;
}

/// Nearest-neighbour upsampling by an integer factor; gradient is the block sum.
template <typename S>
Tensor<S> upsample_nearest(const Tensor<S>& x, Index factor) {
  detail::check_nchw(x, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1, got ", factor);
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Ho = H * factor, Wo = W * factor;
  Tensor<S> y = Tensor<S>::zeros({N, C, Ho, Wo});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index i = 0; i < Ho; ++i) {
      const S* src = xv + nc * H * W + (i / factor) * W;
      S* dst = yv + nc * Ho * Wo + i * Wo;
      for (Index j = 0; j < Wo; ++j) dst[j] = src[j / factor];
    }
  detail::record_if(x.requires_grad(), y, [x, y, N, C, H, W, factor]() mutable {
    if (!y.has_grad()) return;
    const auto& g = y.grad();
    auto& gx = x.grad_buffer();
    const Index Ho = H * factor, Wo = W * factor;
    for (Index nc = 0; nc < N * C; ++nc)
      for (Index i = 0; i < Ho; ++i) {
        const S* src = g.data() + nc * Ho * Wo + i * Wo;
        S* dst = gx.data() + nc * H * W + (i / factor) * W;
        for (Index j = 0; j < Wo; ++j) dst[j / factor] += src[j];
      }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

/// Per-sample, per-channel normalization over the spatial extent.
template <typename S>
Tensor<S> instance_norm(const Tensor<S>& x, double eps = 1e-5) {
  Tensor<S> mu = spatial_mean(x);
  Tensor<S> centered = sub_nc11(x, mu);
  Tensor<S> var = spatial_mean(square(centered));
  Tensor<S> inv = rsqrt_eps(var, eps);
  return mul_nc11(centered, inv);
}

template <typename S>
Tensor<S> mae(const Tensor<S>& a, const Tensor<S>& b) {
  return mean(abs_op(sub(a, b)));
}

template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  return mean(square(sub(a, b)));
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, double c) {
  return scale(a, c);
}
template <typename S>
Tensor<S> operator*(double c, const Tensor<S>& a) {
  return scale(a, c);
}

}  // namespace cones
