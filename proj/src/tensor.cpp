#include "recam/tensor.hpp"

#include <numeric>
#include <sstream>

#include "recam/errors.hpp"

namespace recam {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + format_shape(shape));
    n *= d;
  }
  return n;
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

std::string format_shape(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  auto node = std::make_shared<detail::TensorNode>();
  node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + format_shape(shape));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data()) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t = Tensor::from_data(node_->shape, node_->data);
  return t;
}

std::string Tensor::shape_str() const { return format_shape(node_->shape); }

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? loss.shape_str() : std::string("<empty>")));
  }
  for (const auto& node : produced_) {
    if (!node->grad.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

}  // namespace recam
