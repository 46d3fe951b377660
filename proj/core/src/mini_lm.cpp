// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/mini_lm.hpp"

#include <cmath>

#include "eeg2text/errors.hpp"

namespace e2t {

LMConfig LMConfig::desk(int vocab_size) {
  LMConfig c;
  c.vocab_size = vocab_size;
  return c;
}

LMConfig LMConfig::paper(int vocab_size) {
  LMConfig c;
  c.vocab_size = vocab_size;
  c.emb_dim = 1024;
  c.enc_layers = 12;
  c.dec_layers = 12;
  c.heads = 8;
  c.ffn_dim = 4096;
  c.max_positions = 256;
  return c;
}

void LMConfig::validate() const {
  if (vocab_size <= Vocabulary::kUnk) throw ConfigError("lm config: vocabulary must hold more than the reserved ids");
  if (emb_dim <= 0 || enc_layers < 0 || dec_layers < 0 || heads <= 0 || ffn_dim <= 0 || max_positions <= 1) {
    throw ConfigError("lm config: sizes must be positive");
  }
  if (emb_dim % heads != 0) throw ConfigError("lm config: emb_dim not divisible by heads");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("lm config: dropout_rate must be in [0, 1)");
}

MiniLM::MiniLM(LMConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  embedding_ = params_.add(kEmbeddingName, nn::normal_matrix(c.vocab_size, c.emb_dim, 1.0, rng));
  enc_positions_ = params_.add("lm.enc.positions", nn::normal_matrix(c.max_positions, c.emb_dim, 0.02, rng));
  dec_positions_ = params_.add("lm.dec.positions", nn::normal_matrix(c.max_positions, c.emb_dim, 0.02, rng));
  for (int l = 0; l < c.enc_layers; ++l) {
    encoder_.emplace_back(params_, "lm.enc." + std::to_string(l), c.emb_dim, c.heads, c.ffn_dim, rng);
  }
  for (int l = 0; l < c.dec_layers; ++l) {
    decoder_.emplace_back(params_, "lm.dec." + std::to_string(l), c.emb_dim, c.heads, c.ffn_dim, rng);
  }
  head_fc1_ = nn::Linear(params_, "lm.head.fc1", c.emb_dim, c.emb_dim, rng);
  head_fc2_ = nn::Linear(params_, "lm.head.fc2", c.emb_dim, c.vocab_size, rng);
}

void MiniLM::check_ids(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(config_.vocab_size));
    }
  }
}

ad::Var MiniLM::embed_tokens(std::span<const int> ids) const {
  check_ids(ids);
  return ad::gather_rows(embedding_, ids);
}

ad::Var MiniLM::encode_states(const ad::Var& encoder_input, const nn::ForwardContext& ctx) const {
  if (encoder_input.cols() != config_.emb_dim) {
    throw ShapeError("encoder input width " + std::to_string(encoder_input.cols()) + " != emb_dim " +
                     std::to_string(config_.emb_dim));
  }
  if (encoder_input.rows() == 0) throw ShapeError("encoder input has no rows");
  if (encoder_input.rows() > config_.max_positions) {
    throw LengthError("encoder input of " + std::to_string(encoder_input.rows()) + " rows exceeds max_positions");
  }
  ad::Var x = ad::add(encoder_input, ad::slice_rows(enc_positions_, 0, encoder_input.rows()));
  x = ad::dropout(x, config_.dropout_rate, ctx.dropout_rng());
  for (const auto& layer : encoder_) x = layer(x, /*causal=*/false, ctx);
  return x;
}

ad::Var MiniLM::decoder_logits(const ad::Var& memory, std::span<const int> decoder_input_ids,
                               const nn::ForwardContext& ctx) const {
  const auto n = static_cast<Eigen::Index>(decoder_input_ids.size());
  if (n == 0) throw ShapeError("decoder input is empty");
  if (n > config_.max_positions) throw LengthError("decoder input exceeds max_positions");
  ad::Var x = ad::add(embed_tokens(decoder_input_ids), ad::slice_rows(dec_positions_, 0, n));
  x = ad::dropout(x, config_.dropout_rate, ctx.dropout_rng());
  for (const auto& layer : decoder_) x = layer(x, memory, ctx);
  return head_fc2_(ad::gelu(head_fc1_(x)));
}

ad::Var MiniLM::forward_teacher_forced(const ad::Var& encoder_input, std::span<const int> target_ids,
                                       const nn::ForwardContext& ctx) const {
  if (target_ids.empty()) throw ShapeError("empty target sequence");
  check_ids(target_ids);
  std::vector<int> dec_in;
  dec_in.reserve(target_ids.size());
  dec_in.push_back(Vocabulary::kBos);
  dec_in.insert(dec_in.end(), target_ids.begin(), target_ids.end() - 1);
  const ad::Var memory = encode_states(encoder_input, ctx);
  return decoder_logits(memory, dec_in, ctx);
}

DecodeResult MiniLM::greedy_decode(const Matrix& encoder_input, int max_len, const Vocabulary* vocab) const {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  ad::NoGradGuard no_grad;
  const nn::ForwardContext eval{};
  const ad::Var memory = encode_states(ad::Var::constant(encoder_input), eval);
  DecodeResult result;
  std::vector<int> dec_in = {Vocabulary::kBos};
  const int limit = std::min(max_len, config_.max_positions);
  while (static_cast<int>(result.ids.size()) < limit) {
    const ad::Var logits = decoder_logits(memory, dec_in, eval);
    const Matrix last = logits.value().bottomRows(1);
    const Matrix log_probs = ad::log_softmax_rows(last);
    int best = 0;
    for (Eigen::Index j = 1; j < log_probs.cols(); ++j) {
      if (log_probs(0, j) > log_probs(0, best)) best = static_cast<int>(j);
    }
    result.ids.push_back(best);
    result.step_log_probs.push_back(log_probs(0, best));
    result.log_prob += log_probs(0, best);
    if (best == Vocabulary::kEos) {
      result.finished = true;
      break;
    }
    dec_in.push_back(best);
  }
  if (vocab != nullptr) result.text = vocab->decode(result.ids);
  return result;
}

std::vector<int> target_ids_for(const Vocabulary& vocab, const std::string& text) {
  auto ids = vocab.encode(text);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace e2t
