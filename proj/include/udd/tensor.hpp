// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace udd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when a NaN or Inf reaches an op boundary.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Shared handle to a dense row-major tensor of doubles.
///
/// Copies of a Tensor alias the same storage. Values are fixed once an op has
/// produced them; only leaves may be overwritten (optimizer steps, gradient
/// checks), and only between tapes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of a leaf's values. Throws for op outputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  const std::string& op() const;

  /// Accumulated gradient; all zeros if nothing has flowed yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Deep copy into a fresh leaf (no history).
  Tensor detach() const;

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Ordered record of the differentiable ops executed while it is active.
///
/// A tape is bound to the thread that activates it through TapeScope. Ops run
/// with no active tape produce plain values with no history.
class Tape {
 public:
  void record(detail::NodePtr node);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<std::string> op_names() const;

  /// Reverse sweep from `loss`. Each recorded op is visited once, last first.
  /// Returns the number of backward rules invoked.
  std::size_t backward(const Tensor& loss);

  void clear() { entries_.clear(); }

 private:
  std::vector<detail::NodePtr> entries_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread; ops inside produce plain values.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Runs the reverse sweep of the active tape from a scalar loss.
void backward(const Tensor& loss);

/// Builds an op output. Records it on the active tape when any input needs a
/// gradient; otherwise the backward rule is dropped. Checks finiteness.
Tensor make_op(std::string op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               detail::BackwardFn backward);

void check_finite(std::span<const double> values, const std::string& context);

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product over the leading axis: [n,m,k] x [n,k,p] -> [n,m,p].
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// [n,m,k] -> [n,k,m]
Tensor transpose_last2(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Adds a vector of length shape.back() to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// [a,b,c,d] -> [a,c,b,d]
Tensor swap_axes12(const Tensor& a);
/// Treats `a` as rows along axis 0 and gathers them; gradient scatter-adds.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

/// Align-corners bilinear resampling of an [h,w,d] field to [out_h,out_w,d].
Tensor bilinear_resize_grid(const Tensor& field, std::size_t out_h, std::size_t out_w);

/// Rows of a rank-2 tensor scaled to unit Euclidean norm.
Tensor l2_normalize_rows(const Tensor& x);
/// log sum_j exp(x[i,j]) over entries where mask[i*cols+j] != 0; [rows,cols] -> [rows].
Tensor masked_logsumexp_rows(const Tensor& x, std::span<const unsigned char> mask);
/// x[i, cols[i]] for each row i.
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);
/// Row-wise Jensen-Shannon divergence in nats of two stochastic matrices.
Tensor js_divergence_rows(const Tensor& p, const Tensor& q);

}  // namespace udd
