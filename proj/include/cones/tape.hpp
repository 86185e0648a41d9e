#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cones/tensor.hpp"

namespace cones {

template <typename Scalar>
class Tape;

namespace detail {
template <typename Scalar>
inline thread_local Tape<Scalar>* active_tape = nullptr;
inline thread_local int no_grad_depth = 0;
}  // namespace detail

/// Reverse-mode tape. Constructing a Tape makes it the active recorder for
/// the current thread; operations append their backward closures in forward
/// order, so replaying in reverse is a valid topological sweep. A tape is
/// consumed by backward() and cannot be replayed.
template <typename Scalar>
class Tape {
 public:
  Tape() : prev_(detail::active_tape<Scalar>) { detail::active_tape<Scalar> = this; }
  ~Tape() { detail::active_tape<Scalar> = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() {
    return detail::no_grad_depth > 0 ? nullptr : detail::active_tape<Scalar>;
  }
  static bool recording() { return active() != nullptr; }

  void record(std::function<void()> backprop) {
    require(!consumed_, "tape: cannot record on a consumed tape");
    records_.push_back(std::move(backprop));
    ++recorded_;
  }

  std::size_t size() const { return recorded_; }
  bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse
  /// order, accumulating gradients into each requires-grad ancestor.
  void backward(Tensor<Scalar> loss) {
    require(loss.defined(), "backward: undefined loss tensor");
    require(loss.numel() == 1, "backward: loss must be a scalar, got shape ",
            shape_str(loss.shape()));
    require(!consumed_, "backward: tape already consumed; build a new tape");
    require(!records_.empty(), "backward: tape is empty");
    require(loss.requires_grad(),
            "backward: loss does not require grad (was it recorded on this tape?)");
    loss.grad_buffer()[0] = Scalar(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    consumed_ = true;
    records_.clear();  // release the graph
  }

 private:
  std::vector<std::function<void()>> records_;
  std::size_t recorded_ = 0;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
};

/// RAII scope that pauses gradient recording on all tapes.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace cones
