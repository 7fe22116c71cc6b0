// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace udd {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> values, const std::string& context) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << context << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericError(os.str());
    }
  }
}

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (udd::numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " needs " +
                                std::to_string(udd::numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  for (auto e : shape) {
    if (e == 0) throw std::invalid_argument("Tensor::from: zero extent in " + shape_str(shape));
  }
  check_finite(values, "Tensor::from");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = udd::numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = udd::numel(shape);
  return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for " +
                            shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (node_->op != "leaf") throw std::logic_error("mutable_data on non-leaf '" + node_->op + "'");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  const auto& s = shape();
  if (idx.size() != s.size()) throw std::invalid_argument("at(): rank mismatch");
  std::size_t flat = 0;
  std::size_t a = 0;
  for (auto i : idx) {
    if (i >= s[a]) throw std::out_of_range("at(): index out of range");
    flat = flat * s[a] + i;
    ++a;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::is_leaf() const { return node_->op == "leaf"; }
const std::string& Tensor::op() const { return node_->op; }

std::vector<double> Tensor::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return std::vector<double>(node_->value.size(), 0.0);
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

// ---- Tape --------------------------------------------------------------------

void Tape::record(detail::NodePtr node) { entries_.push_back(std::move(node)); }

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e->op);
  return names;
}

std::size_t Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  }
  if (entries_.empty()) throw std::logic_error("backward: tape is empty");
  if (!loss.requires_grad() || loss.is_leaf()) {
    throw std::logic_error("backward: loss has no recorded history");
  }
  loss.node()->ensure_grad()[0] += 1.0;
  std::size_t invoked = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
    ++invoked;
  }
  return invoked;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

Tensor make_op(std::string op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               detail::BackwardFn backward_fn) {
  if (udd::numel(shape) != value.size()) {
    throw std::logic_error(op + ": produced " + std::to_string(value.size()) +
                           " values for shape " + shape_str(shape));
  }
  check_finite(value, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  Tape* tape = active_tape();
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs && tape != nullptr) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward_fn);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace udd
