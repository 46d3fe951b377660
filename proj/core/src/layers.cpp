// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/layers.hpp"

#include <cmath>

#include "eeg2text/errors.hpp"

namespace e2t::nn {

ad::Var ParameterSet::add(std::string name, Matrix init) {
  if (index_.contains(name)) {
    throw ConfigError("duplicate parameter name " + name);
  }
  auto var = ad::Var::leaf(std::move(init), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), var});
  return var;
}

const ad::Var& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].var;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
  return n;
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& e : entries_) {
    auto var = e.var;
    var.set_requires_grad(on);
  }
}

void ParameterSet::set_requires_grad(const std::string& prefix, bool on) {
  for (auto& e : entries_) {
    if (e.name.starts_with(prefix)) {
      auto var = e.var;
      var.set_requires_grad(on);
    }
  }
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) {
    auto var = e.var;
    var.zero_grad();
  }
}

std::map<std::string, Matrix> ParameterSet::values() const {
  std::map<std::string, Matrix> out;
  for (const auto& e : entries_) out.emplace(e.name, e.var.value());
  return out;
}

void ParameterSet::load_values(const std::map<std::string, Matrix>& values) {
  for (auto& e : entries_) {
    auto it = values.find(e.name);
    if (it == values.end()) throw FormatError("checkpoint lacks tensor " + e.name);
    if (it->second.rows() != e.var.rows() || it->second.cols() != e.var.cols()) {
      throw FormatError("tensor " + e.name + " has shape " + std::to_string(it->second.rows()) + "x" +
                        std::to_string(it->second.cols()) + ", expected " +
                        std::to_string(e.var.rows()) + "x" + std::to_string(e.var.cols()));
    }
    auto var = e.var;
    var.mutable_value() = it->second;
  }
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ConfigError("parameter sets differ in size");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) {
      throw ConfigError("parameter sets differ at " + entries_[i].name);
    }
    auto var = entries_[i].var;
    var.mutable_value() = other.entries_[i].var.value();
  }
}

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  weight = params.add(name + ".weight", uniform_fan_in(out, in, in, rng));
  if (with_bias) bias = params.add(name + ".bias", uniform_fan_in(1, out, in, rng));
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int width) {
  gamma = params.add(name + ".gamma", Matrix::Ones(1, width));
  beta = params.add(name + ".beta", Matrix::Zero(1, width));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name, int width, int heads_,
                                       Rng& rng)
    : heads(heads_) {
  if (heads <= 0 || width % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  q = Linear(params, name + ".q", width, width, rng);
  k = Linear(params, name + ".k", width, width, rng);
  v = Linear(params, name + ".v", width, width, rng);
  o = Linear(params, name + ".o", width, width, rng);
}

ad::Var MultiHeadAttention::operator()(const ad::Var& queries, const ad::Var& keys_values, bool causal,
                                       std::vector<Matrix>* probs) const {
  const ad::Var qp = q(queries);
  const ad::Var kp = k(keys_values);
  const ad::Var vp = v(keys_values);
  const Eigen::Index head_dim = qp.cols() / heads;
  if (heads == 1) {
    Matrix p;
    auto out = ad::attention(qp, kp, vp, causal, probs ? &p : nullptr);
    if (probs) probs->push_back(std::move(p));
    return o(out);
  }
  std::vector<ad::Var> parts;
  parts.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * head_dim;
    Matrix p;
    parts.push_back(ad::attention(ad::slice_cols(qp, off, head_dim), ad::slice_cols(kp, off, head_dim),
                                  ad::slice_cols(vp, off, head_dim), causal, probs ? &p : nullptr));
    if (probs) probs->push_back(std::move(p));
  }
  return o(ad::concat_cols(parts));
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, int width, int hidden, Rng& rng)
    : fc1(params, name + ".fc1", width, hidden, rng), fc2(params, name + ".fc2", hidden, width, rng) {}

EncoderLayer::EncoderLayer(ParameterSet& params, const std::string& name, int width, int heads, int hidden,
                           Rng& rng)
    : self_attn(params, name + ".attn", width, heads, rng),
      ffn(params, name + ".ffn", width, hidden, rng),
      norm1(params, name + ".norm1", width),
      norm2(params, name + ".norm2", width) {}

ad::Var EncoderLayer::operator()(const ad::Var& x, bool causal, const ForwardContext& ctx,
                                 std::vector<Matrix>* probs) const {
  Rng* rng = ctx.dropout_rng();
  auto h = norm1(ad::add(x, ad::dropout(self_attn(x, x, causal, probs), ctx.dropout_rate, rng)));
  return norm2(ad::add(h, ad::dropout(ffn(h), ctx.dropout_rate, rng)));
}

DecoderLayer::DecoderLayer(ParameterSet& params, const std::string& name, int width, int heads, int hidden,
                           Rng& rng)
    : self_attn(params, name + ".self_attn", width, heads, rng),
      cross_attn(params, name + ".cross_attn", width, heads, rng),
      ffn(params, name + ".ffn", width, hidden, rng),
      norm1(params, name + ".norm1", width),
      norm2(params, name + ".norm2", width),
      norm3(params, name + ".norm3", width) {}

ad::Var DecoderLayer::operator()(const ad::Var& x, const ad::Var& memory, const ForwardContext& ctx) const {
  Rng* rng = ctx.dropout_rng();
  auto h = norm1(ad::add(x, ad::dropout(self_attn(x, x, true), ctx.dropout_rate, rng)));
  h = norm2(ad::add(h, ad::dropout(cross_attn(h, memory, false), ctx.dropout_rate, rng)));
  return norm3(ad::add(h, ad::dropout(ffn(h), ctx.dropout_rate, rng)));
}

}  // namespace e2t::nn
