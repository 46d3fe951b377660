// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "eeg2text/autograd.hpp"

namespace e2t::nn {

/// Ordered registry of named learnable tensors. Names are dotted paths
/// ("brain.bte.0.attn.q.weight"); order of registration is the checkpoint order.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
  };

  ad::Var add(std::string name, Matrix init);

  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  void set_requires_grad(bool on);
  /// Only parameters whose name starts with `prefix`.
  void set_requires_grad(const std::string& prefix, bool on);
  void zero_grad();

  std::map<std::string, Matrix> values() const;
  /// Overwrites values by name; every registered name must be present with
  /// the registered shape.
  void load_values(const std::map<std::string, Matrix>& values);
  /// Copies raw values from another set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Per-forward switches. Dropout is active only when `train` is set and an
/// RNG is supplied.
struct ForwardContext {
  bool train = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;

  Rng* dropout_rng() const { return train && dropout_rate > 0.0 ? rng : nullptr; }
};

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct Linear {
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);

  ad::Var operator()(const ad::Var& x) const { return ad::linear(x, weight, bias); }

  ad::Var weight;  // out x in
  ad::Var bias;    // 1 x out, may be undefined
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int width);

  ad::Var operator()(const ad::Var& x) const { return ad::layer_norm(x, gamma, beta); }

  ad::Var gamma;
  ad::Var beta;
};

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name, int width, int heads, Rng& rng);

  /// `probs`, when non-null, receives one attention matrix per head.
  ad::Var operator()(const ad::Var& queries, const ad::Var& keys_values, bool causal,
                     std::vector<Matrix>* probs = nullptr) const;

  int heads = 1;
  Linear q, k, v, o;
};

struct FeedForward {
  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, int width, int hidden, Rng& rng);

  ad::Var operator()(const ad::Var& x) const { return fc2(ad::gelu(fc1(x))); }

  Linear fc1, fc2;
};

/// Post-norm self-attention block: x <- LN(x + drop(attn(x))); x <- LN(x + drop(ffn(x))).
struct EncoderLayer {
  EncoderLayer() = default;
  EncoderLayer(ParameterSet& params, const std::string& name, int width, int heads, int hidden, Rng& rng);

  ad::Var operator()(const ad::Var& x, bool causal, const ForwardContext& ctx,
                     std::vector<Matrix>* probs = nullptr) const;

  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2;
};

/// Post-norm decoder block with causal self-attention and cross-attention.
struct DecoderLayer {
  DecoderLayer() = default;
  DecoderLayer(ParameterSet& params, const std::string& name, int width, int heads, int hidden, Rng& rng);

  ad::Var operator()(const ad::Var& x, const ad::Var& memory, const ForwardContext& ctx) const;

  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2, norm3;
};

}  // namespace e2t::nn
