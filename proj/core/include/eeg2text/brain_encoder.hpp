// SPDX-License-Identifier: Apache-2.0
//
// Subject-aware brain encoder: per-word bidirectional GRU features, a shared
// fully connected layer, a 1x1 convolution to D channels, per-subject channel
// scaling, a causal transformer stack over the word sequence and a residual
// MLP head producing one latent row per word.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eeg2text/autograd.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/gru.hpp"
#include "eeg2text/layers.hpp"

namespace e2t {

struct BrainConfig {
  int input_channels = 104;
  int gru_hidden = 32;  // per direction
  int fc_dim = 64;
  int conv_channels = 16;  // D
  int bte_layers = 2;
  int bte_heads = 4;
  int bte_ffn_dim = 128;
  int model_dim = 64;
  int out_dim = 64;
  int max_positions = 64;
  double dropout_rate = 0.1;

  static BrainConfig desk(int input_channels);
  /// GRU 512, FC 1024, D 64, 12 layers x 8 heads, FFN 4096, width 1024.
  static BrainConfig paper(int input_channels);
  void validate() const;
};

struct EncodeOptions {
  bool train_mode = false;
  bool use_subject_layer = true;
  bool use_bte = true;
  /// Unknown subjects use the mean subject vector instead of throwing.
  bool mean_subject_fallback = false;
};

class BrainEncoder {
 public:
  /// init_params: fan-in uniform weights, r_s = 1, layer-norm (1, 0),
  /// positions ~ N(0, 0.02^2). Deterministic in `seed`.
  BrainEncoder(BrainConfig config, std::vector<std::string> subjects, std::uint64_t seed);

  BrainEncoder(const BrainEncoder&) = delete;
  BrainEncoder& operator=(const BrainEncoder&) = delete;

  const BrainConfig& config() const { return config_; }
  const std::vector<std::string>& subjects() const { return subjects_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// GRU + FC features of one segment (fc_dim wide), without a graph.
  RowVector gru_features(const data::EEGSegment& segment) const;
  /// M x fc_dim features for every word of a record.
  ad::Var word_features(const data::SentenceRecord& record) const;
  /// 1x1 convolution, fc_dim -> D, applied per word.
  ad::Var pointwise_conv(const ad::Var& features) const;
  /// output[m, d] = input[m, d] * r_s[d].
  ad::Var apply_subject_layer(const ad::Var& features, const std::string& subject, bool mean_fallback = false) const;
  /// Causal post-norm transformer over already projected and positioned tokens.
  /// `attention`, if given, receives [layer][head] probability matrices.
  ad::Var bte_forward(const ad::Var& tokens, const nn::ForwardContext& ctx,
                      std::vector<std::vector<Matrix>>* attention = nullptr) const;
  /// Full forward pass; returns Z (M x out_dim). `rng` drives dropout in train mode.
  ad::Var encode(const data::SentenceRecord& record, const EncodeOptions& options, Rng* rng = nullptr) const;
  /// encode() in eval mode without recording a graph.
  Matrix encode_value(const data::SentenceRecord& record, const EncodeOptions& options = {}) const;

  RowVector subject_vector(const std::string& subject) const;
  void set_subject_vector(const std::string& subject, const RowVector& r);
  bool has_subject(const std::string& subject) const { return subject_index_.contains(subject); }

  /// Parameter-name prefix of the transformer stack ("brain.bte.").
  static constexpr const char* kBtePrefix = "brain.bte.";
  static constexpr const char* kSubjectTable = "brain.subject.table";

 private:
  BrainConfig config_;
  std::vector<std::string> subjects_;
  std::map<std::string, int> subject_index_;
  nn::ParameterSet params_;

  nn::BiGru gru_;
  nn::Linear fc_;
  nn::Linear conv_;
  ad::Var subject_table_;  // S x D
  nn::Linear w_in_;
  ad::Var positions_;  // max_positions x model_dim
  std::vector<nn::EncoderLayer> bte_;
  nn::Linear mlp_fc1_, mlp_fc2_;
  nn::Linear out_proj_;  // only when model_dim != out_dim
};

/// Time-major (T x C) double copy of a segment, the GRU input layout.
Matrix segment_to_sequence(const data::EEGSegment& segment);

}  // namespace e2t
