// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/autograd.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "eeg2text/errors.hpp"

namespace e2t::ad {
namespace {

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw ShapeError("item() on a " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                     " value");
  }
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) {
      any = any || in.requires_grad();
    }
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) {
        node->inputs.push_back(in.shared());
      }
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ShapeError("backward() needs a scalar root");
  }
  if (!root.requires_grad()) {
    return;
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.contains(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) {
      node->backward_fn(*node);
    }
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (input(self, i).requires_grad) input(self, i).accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
    if (input(self, 1).requires_grad) input(self, 1).accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = input(self, 0);
    Node& y = input(self, 1);
    if (x.requires_grad) x.accumulate_expr(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate_expr(self.grad.cwiseProduct(x.value));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    input(self, 0).accumulate_expr(self.grad * s);
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  return make_result(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& x = input(self, 0);
    Node& y = input(self, 1);
    if (x.requires_grad) x.accumulate_expr(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate_expr(x.value.transpose() * self.grad);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.cols()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + " vs weight in-width " +
                     std::to_string(weight.cols()));
  }
  Matrix out = x.value() * weight.value().transpose();
  if (bias.defined()) {
    out.rowwise() += bias.value().row(0);
    return make_result(std::move(out), {x, weight, bias}, [](Node& self) {
      Node& in = input(self, 0);
      Node& w = input(self, 1);
      Node& b = input(self, 2);
      if (in.requires_grad) in.accumulate_expr(self.grad * w.value);
      if (w.requires_grad) w.accumulate_expr(self.grad.transpose() * in.value);
      if (b.requires_grad) b.accumulate_expr(self.grad.colwise().sum());
    });
  }
  return make_result(std::move(out), {x, weight}, [](Node& self) {
    Node& in = input(self, 0);
    Node& w = input(self, 1);
    if (in.requires_grad) in.accumulate_expr(self.grad * w.value);
    if (w.requires_grad) w.accumulate_expr(self.grad.transpose() * in.value);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    if (input(self, 0).requires_grad) input(self, 0).accumulate(self.grad);
    if (input(self, 1).requires_grad) input(self, 1).accumulate_expr(self.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("mul_row: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(out), {a, row}, [](Node& self) {
    Node& x = input(self, 0);
    Node& r = input(self, 1);
    if (x.requires_grad) {
      x.accumulate_expr((self.grad.array().rowwise() * r.value.row(0).array()).matrix());
    }
    if (r.requires_grad) r.accumulate_expr(self.grad.cwiseProduct(x.value).colwise().sum());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    input(self, 0).accumulate_expr(
        (self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    input(self, 0).accumulate_expr(
        (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

Var gelu(const Var& a) {
  // Exact form: 0.5 x (1 + erf(x / sqrt 2)).
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    Matrix g(in.value.rows(), in.value.cols());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double v = in.value.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g.data()[i] = self.grad.data()[i] * (cdf + v * pdf);
    }
    in.accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) {
    throw ShapeError("layer_norm: scale/shift width mismatch");
  }
  Matrix normalized(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = normalized.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta},
                     [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                       Node& in = input(self, 0);
                       Node& g = input(self, 1);
                       Node& b = input(self, 2);
                       if (g.requires_grad) {
                         g.accumulate_expr(self.grad.cwiseProduct(normalized).colwise().sum());
                       }
                       if (b.requires_grad) b.accumulate_expr(self.grad.colwise().sum());
                       if (in.requires_grad) {
                         Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
                         Matrix dx(dxhat.rows(), dxhat.cols());
                         for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                           const double mean_d = dxhat.row(r).mean();
                           const double mean_dx = dxhat.row(r).cwiseProduct(normalized.row(r)).mean();
                           dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d -
                                                     normalized.row(r).array() * mean_dx);
                         }
                         in.accumulate(dx);
                       }
                     });
}

Var attention(const Var& q, const Var& k, const Var& v, bool causal, Matrix* probs_out) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeError("attention: q/k/v shape mismatch");
  }
  if (causal && q.rows() > k.rows()) {
    throw ShapeError("attention: causal mask needs at least as many keys as queries");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix scores = (q.value() * k.value().transpose()) * inv_scale;
  if (causal) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
        scores(i, j) = -std::numeric_limits<double>::infinity();
      }
    }
  }
  Matrix probs = softmax_rows(scores);
  if (probs_out != nullptr) {
    *probs_out = probs;
  }
  Matrix out = probs * v.value();
  return make_result(std::move(out), {q, k, v}, [probs = std::move(probs), inv_scale](Node& self) {
    Node& qn = input(self, 0);
    Node& kn = input(self, 1);
    Node& vn = input(self, 2);
    if (vn.requires_grad) vn.accumulate_expr(probs.transpose() * self.grad);
    if (!qn.requires_grad && !kn.requires_grad) return;
    Matrix dprobs = self.grad * vn.value.transpose();
    Eigen::VectorXd row_dot = dprobs.cwiseProduct(probs).rowwise().sum();
    Matrix dscores = probs.cwiseProduct(dprobs.colwise() - row_dot) * inv_scale;
    if (qn.requires_grad) qn.accumulate_expr(dscores * kn.value);
    if (kn.requires_grad) kn.accumulate_expr(dscores.transpose() * qn.value);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows out of range");
  }
  return make_result(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Node& in = input(self, 0);
    if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
    in.grad.middleRows(start, count) += self.grad;
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols out of range");
  }
  return make_result(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& in = input(self, 0);
    if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
    in.grad.middleCols(start, count) += self.grad;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix out(parts[0].rows(), total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    Eigen::Index off = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index w = in->value.cols();
      if (in->requires_grad) in->accumulate_expr(self.grad.middleCols(off, w));
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("concat_rows: column count mismatch");
    total += p.rows();
  }
  Matrix out(total, parts[0].cols());
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    Eigen::Index off = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index h = in->value.rows();
      if (in->requires_grad) in->accumulate_expr(self.grad.middleRows(off, h));
      off += h;
    }
  });
}

Var repeat_rows(const Var& a, std::span<const int> counts) {
  if (static_cast<Eigen::Index>(counts.size()) != a.rows()) {
    throw ShapeError("repeat_rows: one count per row required");
  }
  std::vector<Eigen::Index> source;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (int c = 0; c < counts[i]; ++c) source.push_back(static_cast<Eigen::Index>(i));
  }
  Matrix out(static_cast<Eigen::Index>(source.size()), a.cols());
  for (std::size_t r = 0; r < source.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = a.value().row(source[r]);
  return make_result(std::move(out), {a}, [source = std::move(source)](Node& self) {
    Node& in = input(self, 0);
    if (in.grad.size() == 0) in.grad = Matrix::Zero(in.value.rows(), in.value.cols());
    for (std::size_t r = 0; r < source.size(); ++r) {
      in.grad.row(source[r]) += self.grad.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  return make_result(std::move(out), {table},
                     [ids = std::vector<int>(ids.begin(), ids.end())](Node& self) {
                       Node& t = input(self, 0);
                       if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         t.grad.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                       }
                     });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of an empty matrix");
  const double inv = 1.0 / static_cast<double>(a.rows());
  return make_result(a.value().colwise().mean(), {a}, [inv](Node& self) {
    Node& in = input(self, 0);
    in.accumulate_expr((self.grad * inv).replicate(in.value.rows(), 1));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& in = input(self, 0);
    in.accumulate_expr(Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Var dropout(const Var& a, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  const double inv_keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? inv_keep : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return make_result(std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    input(self, 0).accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Var mse_loss(const Var& prediction, const Var& target) {
  check_same_shape(prediction, target, "mse_loss");
  const double n = static_cast<double>(prediction.value().size());
  if (n == 0) throw LossError("mse_loss over an empty matrix");
  Matrix out(1, 1);
  out(0, 0) = (prediction.value() - target.value()).squaredNorm() / n;
  return make_result(std::move(out), {prediction, target}, [n](Node& self) {
    Node& p = input(self, 0);
    Node& t = input(self, 1);
    const double g = self.grad(0, 0) * 2.0 / n;
    if (p.requires_grad) p.accumulate_expr((p.value - t.value) * g);
    if (t.requires_grad) t.accumulate_expr((t.value - p.value) * g);
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, std::span<const double> weights) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n || static_cast<Eigen::Index>(weights.size()) != n) {
    throw ShapeError("cross_entropy: need one target and weight per logits row");
  }
  double total_weight = 0.0;
  for (double w : weights) total_weight += w;
  if (total_weight <= 0.0) throw LossError("cross_entropy: every target position is padding");
  Matrix log_probs = log_softmax_rows(logits.value());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] < 0 || targets[i] >= logits.cols()) {
      throw ShapeError("cross_entropy: target id " + std::to_string(targets[i]) + " out of range");
    }
    loss -= weights[i] * log_probs(i, targets[i]);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / total_weight;
  return make_result(
      std::move(out), {logits},
      [log_probs = std::move(log_probs), t = std::vector<int>(targets.begin(), targets.end()),
       w = std::vector<double>(weights.begin(), weights.end()), total_weight](Node& self) {
        Matrix g = log_probs.array().exp();
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          if (w[i] == 0.0) {
            g.row(i).setZero();
            continue;
          }
          g(i, t[i]) -= 1.0;
          g.row(i) *= w[i] / total_weight;
        }
        input(self, 0).accumulate_expr(g * self.grad(0, 0));
      });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    // Eigen's vectorized exp clamps its argument, so -inf (masked) would come
    // back as a denormal rather than an exact zero.
    out.row(r) = (logits.row(r).array() == -std::numeric_limits<double>::infinity())
                     .select(0.0, (logits.row(r).array() - mx).exp());
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace e2t::ad
