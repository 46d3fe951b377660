// SPDX-License-Identifier: Apache-2.0
//
// Miniature post-norm encoder-decoder language model. Rows of the token
// embedding table double as the alignment targets for the brain encoder; the
// encoder accepts arbitrary (rows x emb_dim) inputs so latent brain
// sequences can replace embedded tokens.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eeg2text/autograd.hpp"
#include "eeg2text/layers.hpp"
#include "eeg2text/vocabulary.hpp"

namespace e2t {

struct LMConfig {
  int vocab_size = 0;
  int emb_dim = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int max_positions = 64;
  double dropout_rate = 0.1;

  static LMConfig desk(int vocab_size);
  /// 12 + 12 layers, 8 heads, width 1024, FFN 4096.
  static LMConfig paper(int vocab_size);
  void validate() const;
};

struct DecodeResult {
  std::vector<int> ids;  // emitted tokens, EOS included when reached
  std::string text;      // empty unless a vocabulary was supplied
  std::vector<double> step_log_probs;
  double log_prob = 0.0;
  bool finished = false;  // stopped on EOS rather than max_len
};

class MiniLM {
 public:
  MiniLM(LMConfig config, std::uint64_t seed);

  MiniLM(const MiniLM&) = delete;
  MiniLM& operator=(const MiniLM&) = delete;

  const LMConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Row i is E[ids[i]]. Throws VocabError on an id outside the table.
  ad::Var embed_tokens(std::span<const int> ids) const;
  /// Encoder stack over (rows x emb_dim) inputs plus encoder positions.
  ad::Var encode_states(const ad::Var& encoder_input, const nn::ForwardContext& ctx) const;
  /// Logits (len x |V|) for every decoder input position.
  ad::Var decoder_logits(const ad::Var& memory, std::span<const int> decoder_input_ids,
                         const nn::ForwardContext& ctx) const;
  /// Decoder reads [BOS, targets[0..N-2]] and row n predicts targets[n].
  ad::Var forward_teacher_forced(const ad::Var& encoder_input, std::span<const int> target_ids,
                                 const nn::ForwardContext& ctx) const;
  /// Argmax decoding (ties to the lowest id) until EOS or max_len tokens.
  DecodeResult greedy_decode(const Matrix& encoder_input, int max_len, const Vocabulary* vocab = nullptr) const;

  static constexpr const char* kEmbeddingName = "lm.embed.tokens";

 private:
  void check_ids(std::span<const int> ids) const;

  LMConfig config_;
  nn::ParameterSet params_;
  ad::Var embedding_;
  ad::Var enc_positions_, dec_positions_;
  std::vector<nn::EncoderLayer> encoder_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::Linear head_fc1_, head_fc2_;
};

/// Target sequence used for training: tokens of `text` followed by EOS.
std::vector<int> target_ids_for(const Vocabulary& vocab, const std::string& text);

}  // namespace e2t
