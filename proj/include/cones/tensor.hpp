#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cones/error.hpp"
#include "cones/random.hpp"

namespace cones {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename Scalar>
struct TensorImpl {
  Shape shape;
  std::vector<Scalar> values;
  std::vector<Scalar> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::string name;
};

/// Dense row-major tensor handle with shared storage. Images use NCHW order.
/// The scalar type is a template parameter: float for training, double for
/// the finite-difference gradient checks.
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    const Index n = checked_numel(shape);
    t.impl_ = std::make_shared<TensorImpl<Scalar>>();
    t.impl_->shape = std::move(shape);
    t.impl_->values.assign(static_cast<std::size_t>(n), Scalar(0));
    return t;
  }

  static Tensor full(Shape shape, Scalar v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.impl_->values) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<Scalar> values) {
    const Index n = checked_numel(shape);
    require(n == static_cast<Index>(values.size()), "tensor: shape ", shape_str(shape),
            " implies ", n, " elements but ", values.size(), " were given");
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<Scalar>>();
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::move(values);
    return t;
  }

  static Tensor scalar(Scalar v) { return from({}, {v}); }

  static Tensor uniform(Shape shape, Rng& rng, Scalar lo, Scalar hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.impl_->values)
      x = static_cast<Scalar>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, Scalar mean, Scalar stddev) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.impl_->values)
      x = static_cast<Scalar>(static_cast<double>(mean) +
                              static_cast<double>(stddev) * rng.normal());
    return t;
  }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return checked()->shape; }
  Index ndim() const { return static_cast<Index>(checked()->shape.size()); }
  Index dim(std::size_t i) const {
    require(i < checked()->shape.size(), "tensor: dim index ", i, " out of range for shape ",
            shape_str(impl_->shape));
    return impl_->shape[i];
  }
  Index numel() const { return static_cast<Index>(checked()->values.size()); }

  Scalar* data() { return checked()->values.data(); }
  const Scalar* data() const { return checked()->values.data(); }
  std::vector<Scalar>& values() { return checked()->values; }
  const std::vector<Scalar>& values() const { return checked()->values; }

  Scalar at(Index i) const {
    require(i >= 0 && i < numel(), "tensor: flat index ", i, " out of range");
    return impl_->values[static_cast<std::size_t>(i)];
  }

  /// Extracts the value of a single-element tensor.
  Scalar value() const {
    require(numel() == 1, "tensor: value() requires a scalar, got shape ",
            shape_str(impl_->shape));
    return impl_->values[0];
  }

  bool requires_grad() const { return checked()->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    checked()->requires_grad = b;
    return *this;
  }

  const std::string& name() const { return checked()->name; }
  Tensor& set_name(std::string n) {
    checked()->name = std::move(n);
    return *this;
  }

  // The tensor is a handle onto shared storage; gradient state lives in the
  // storage, so the grad methods are const like the rest of the accessors.
  bool has_grad() const { return !checked()->grad.empty(); }

  const std::vector<Scalar>& grad() const {
    require(has_grad(), "tensor", name_suffix(), ": gradient has not been populated");
    return impl_->grad;
  }

  /// Grad buffer, allocated as zeros on first use. Same shape as the values.
  std::vector<Scalar>& grad_buffer() const {
    auto* im = checked();
    if (im->grad.empty()) im->grad.assign(im->values.size(), Scalar(0));
    return im->grad;
  }

  void zero_grad() const {
    if (defined()) impl_->grad.clear();
  }

  void accumulate_grad(const Scalar* g, Index n) const {
    require(n == numel(), "tensor", name_suffix(), ": gradient size ", n,
            " does not match value size ", numel());
    auto& buf = grad_buffer();
    for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] += g[i];
  }

  /// Deep copy of the values; grad and requires_grad are not carried over.
  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<Scalar>>();
    t.impl_->shape = checked()->shape;
    t.impl_->values = impl_->values;
    t.impl_->name = impl_->name;
    return t;
  }

  /// Same values, cut loose from any recorded graph.
  Tensor detached() const { return clone(); }

  template <typename T>
  Tensor<T> cast() const {
    std::vector<T> out(checked()->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(impl_->values[i]);
    return Tensor<T>::from(impl_->shape, std::move(out));
  }

  MatrixMap as_matrix(Index rows, Index cols) {
    require(rows * cols == numel(), "tensor: cannot view ", numel(), " elements as ", rows, "x",
            cols, " matrix");
    return MatrixMap(data(), rows, cols);
  }
  ConstMatrixMap as_matrix(Index rows, Index cols) const {
    require(rows * cols == numel(), "tensor: cannot view ", numel(), " elements as ", rows, "x",
            cols, " matrix");
    return ConstMatrixMap(data(), rows, cols);
  }
  ArrayMap as_array() { return ArrayMap(data(), numel()); }
  ConstArrayMap as_array() const { return ConstArrayMap(data(), numel()); }

  MatrixMap grad_matrix(Index rows, Index cols) const {
    auto& g = grad_buffer();
    require(rows * cols == static_cast<Index>(g.size()), "tensor: bad grad view");
    return MatrixMap(g.data(), rows, cols);
  }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  static Index checked_numel(const Shape& shape) {
    for (Index d : shape)
      require(d > 0, "tensor: dimensions must be positive, got shape ", shape_str(shape));
    return shape_numel(shape);
  }

  TensorImpl<Scalar>* checked() const {
    require(impl_ != nullptr, "tensor: use of an undefined tensor");
    return impl_.get();
  }

  std::string name_suffix() const {
    return impl_ && !impl_->name.empty() ? " '" + impl_->name + "'" : std::string();
  }

  std::shared_ptr<TensorImpl<Scalar>> impl_;
};

}  // namespace cones
