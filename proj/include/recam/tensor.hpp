#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "recam/rng.hpp"

namespace recam {

namespace detail {

struct TensorNode {
  std::vector<int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool grad_enabled = false;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor of doubles with optional tape participation.
// Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor from_data(std::vector<int64_t> shape, std::vector<double> data);
  static Tensor scalar(double value);
  // Normal(0, stddev) entries drawn from rng in row-major order.
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const { return node_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }

  double operator()(int64_t i) const { return node_->data[static_cast<size_t>(i)]; }
  double operator()(int64_t i, int64_t j) const {
    return node_->data[static_cast<size_t>(i * dim(1) + j)];
  }
  double& at(int64_t i) { return node_->data[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) {
    return node_->data[static_cast<size_t>(i * dim(1) + j)];
  }

  bool grad_enabled() const { return node_->grad_enabled; }
  Tensor& set_grad_enabled(bool enabled) {
    node_->grad_enabled = enabled;
    return *this;
  }

  // Gradient buffer, zero-filled if nothing has been accumulated yet.
  const std::vector<double>& grad() const { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Deep copy of values; gradient state is not copied.
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

  std::string shape_str() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// Execution-ordered record of differentiable operations. Ops append entries
// while the tape is active (see Scope); backward replays them in reverse.
// One tape must only ever be touched from one thread; independent tapes on
// different threads are fine.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers one executed op: the node it produced plus the closure that
  // propagates gradients from that node to its inputs.
  void record(std::shared_ptr<detail::TensorNode> output,
              std::function<void()> backward_fn) {
    produced_.push_back(std::move(output));
    entries_.push_back(std::move(backward_fn));
  }

  size_t size() const { return entries_.size(); }
  void clear() {
    entries_.clear();
    produced_.clear();
  }

  // Replays the tape in reverse from d(loss)/d(loss) = 1. Gradients of
  // intermediate (op-produced) tensors are reset first, so calling backward
  // twice on one tape adds the same leaf increment twice; leaf gradients
  // accumulate across tapes, which is what batched training relies on.
  void backward(const Tensor& loss);

  static Tape* active();

  // RAII activation of a tape on the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<std::function<void()>> entries_;
  std::vector<std::shared_ptr<detail::TensorNode>> produced_;
};

// True when a tape is active on this thread and any argument wants grads.
inline bool should_record(const Tensor& a) {
  return Tape::active() != nullptr && a.grad_enabled();
}
inline bool should_record(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.grad_enabled() || b.grad_enabled());
}

std::string format_shape(const std::vector<int64_t>& shape);

}  // namespace recam
