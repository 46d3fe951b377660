// SPDX-License-Identifier: Apache-2.0
//
// Minimal dynamic-graph reverse-mode autodiff over dense row-major double
// matrices. Every forward call records a fresh graph; leaves created with
// `Var::leaf` persist across graphs and accumulate gradients until cleared.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace e2t {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Rng = std::mt19937_64;

namespace ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Matrix value);
  static Var leaf(Matrix value, bool requires_grad = true);

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a 1x1 root.
void backward(const Var& root);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

/// Builds a result node wired to `inputs`. `fn` is only kept when recording
/// is on and at least one input requires a gradient.
Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn);

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
/// x * W^T + b, with W stored as (out x in) and b as (1 x out). `b` may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Adds a 1 x n row to every row of `a`.
Var add_row(const Var& a, const Var& row);
/// Multiplies every row of `a` elementwise by a 1 x n row.
Var mul_row(const Var& a, const Var& row);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);

/// Row-wise layer normalization with learned 1 x n scale and shift.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Single-head scaled dot-product attention. When `causal` is set, query row i
/// attends to key rows 0..i only. `probs_out`, if given, receives the
/// attention matrix.
Var attention(const Var& q, const Var& k, const Var& v, bool causal, Matrix* probs_out = nullptr);

// Shape manipulation.
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Row i of the input appears counts[i] times, in order.
Var repeat_rows(const Var& a, std::span<const int> counts);
/// Embedding lookup: row i of the result is table[ids[i]].
Var gather_rows(const Var& table, std::span<const int> ids);
Var mean_rows(const Var& a);
Var sum(const Var& a);

/// Inverted dropout; identity when `rate` is 0 or `rng` is null.
Var dropout(const Var& a, double rate, Rng* rng);

// Losses (1 x 1 results).
/// Mean over all entries of (a - b)^2.
Var mse_loss(const Var& prediction, const Var& target);
/// Weighted mean of -log softmax(logits)[i, targets[i]] over rows with
/// weight > 0. Throws LossError if every weight is zero.
Var cross_entropy(const Var& logits, std::span<const int> targets, std::span<const double> weights);

/// Numerically stable row softmax (no graph).
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace ad
}  // namespace e2t
