// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/brain_encoder.hpp"

#include "eeg2text/errors.hpp"

namespace e2t {

BrainConfig BrainConfig::desk(int input_channels) {
  BrainConfig c;
  c.input_channels = input_channels;
  return c;
}

BrainConfig BrainConfig::paper(int input_channels) {
  BrainConfig c;
  c.input_channels = input_channels;
  c.gru_hidden = 512;
  c.fc_dim = 1024;
  c.conv_channels = 64;
  c.bte_layers = 12;
  c.bte_heads = 8;
  c.bte_ffn_dim = 4096;
  c.model_dim = 1024;
  c.out_dim = 1024;
  c.max_positions = 128;
  c.dropout_rate = 0.1;
  return c;
}

void BrainConfig::validate() const {
  if (input_channels <= 0 || gru_hidden <= 0 || fc_dim <= 0 || conv_channels <= 0 || bte_layers < 0 ||
      bte_heads <= 0 || bte_ffn_dim <= 0 || model_dim <= 0 || out_dim <= 0 || max_positions <= 0) {
    throw ConfigError("brain config: every size must be positive");
  }
  if (model_dim % bte_heads != 0) {
    throw ConfigError("brain config: model_dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(bte_heads) + " heads");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("brain config: dropout_rate must be in [0, 1)");
}

Matrix segment_to_sequence(const data::EEGSegment& segment) {
  return segment.samples.transpose().cast<double>();
}

BrainEncoder::BrainEncoder(BrainConfig config, std::vector<std::string> subjects, std::uint64_t seed)
    : config_(config), subjects_(std::move(subjects)) {
  config_.validate();
  if (subjects_.empty()) throw ConfigError("brain encoder needs at least one subject");
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    if (!subject_index_.emplace(subjects_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate subject " + subjects_[i]);
    }
  }
  Rng rng(seed);
  const auto& c = config_;
  gru_ = nn::BiGru(params_, "brain.gru", c.input_channels, c.gru_hidden, rng);
  fc_ = nn::Linear(params_, "brain.fc", 2 * c.gru_hidden, c.fc_dim, rng);
  conv_ = nn::Linear(params_, "brain.conv", c.fc_dim, c.conv_channels, rng);
  subject_table_ = params_.add(kSubjectTable, Matrix::Ones(static_cast<Eigen::Index>(subjects_.size()), c.conv_channels));
  w_in_ = nn::Linear(params_, "brain.w_in", c.conv_channels, c.model_dim, rng, /*with_bias=*/false);
  positions_ = params_.add("brain.positions", nn::normal_matrix(c.max_positions, c.model_dim, 0.02, rng));
  for (int l = 0; l < c.bte_layers; ++l) {
    bte_.emplace_back(params_, kBtePrefix + std::to_string(l), c.model_dim, c.bte_heads, c.bte_ffn_dim, rng);
  }
  mlp_fc1_ = nn::Linear(params_, "brain.mlp.fc1", c.model_dim, c.model_dim, rng);
  mlp_fc2_ = nn::Linear(params_, "brain.mlp.fc2", c.model_dim, c.model_dim, rng);
  if (c.model_dim != c.out_dim) out_proj_ = nn::Linear(params_, "brain.out_proj", c.model_dim, c.out_dim, rng);
}

RowVector BrainEncoder::gru_features(const data::EEGSegment& segment) const {
  ad::NoGradGuard no_grad;
  const Matrix seq = segment_to_sequence(segment);
  const auto states = gru_.final_states(std::span<const Matrix>(&seq, 1));
  return fc_(states).value().row(0);
}

ad::Var BrainEncoder::word_features(const data::SentenceRecord& record) const {
  std::vector<Matrix> sequences;
  sequences.reserve(record.words.size());
  for (const auto& w : record.words) {
    if (w.eeg.channels() != config_.input_channels) {
      throw ShapeError("record " + record.sentence_id + ": segment has " + std::to_string(w.eeg.channels()) +
                       " channels, encoder expects " + std::to_string(config_.input_channels));
    }
    sequences.push_back(segment_to_sequence(w.eeg));
  }
  return fc_(gru_.final_states(sequences));
}

ad::Var BrainEncoder::pointwise_conv(const ad::Var& features) const { return conv_(features); }

ad::Var BrainEncoder::apply_subject_layer(const ad::Var& features, const std::string& subject,
                                          bool mean_fallback) const {
  auto it = subject_index_.find(subject);
  if (it != subject_index_.end()) {
    const int id = it->second;
    return ad::mul_row(features, ad::gather_rows(subject_table_, std::span<const int>(&id, 1)));
  }
  if (!mean_fallback) throw SubjectError("unknown subject " + subject);
  Matrix mean = subject_table_.value().colwise().mean();
  return ad::mul_row(features, ad::Var::constant(std::move(mean)));
}

ad::Var BrainEncoder::bte_forward(const ad::Var& tokens, const nn::ForwardContext& ctx,
                                  std::vector<std::vector<Matrix>>* attention) const {
  if (tokens.rows() > config_.max_positions) {
    throw LengthError("sequence of " + std::to_string(tokens.rows()) + " words exceeds max_positions " +
                      std::to_string(config_.max_positions));
  }
  ad::Var x = tokens;
  for (const auto& layer : bte_) {
    std::vector<Matrix>* probs = nullptr;
    if (attention) probs = &attention->emplace_back();
    x = layer(x, /*causal=*/true, ctx, probs);
  }
  return x;
}

ad::Var BrainEncoder::encode(const data::SentenceRecord& record, const EncodeOptions& options, Rng* rng) const {
  const auto M = static_cast<Eigen::Index>(record.words.size());
  if (M == 0) throw DataError("record " + record.sentence_id + " has no words");
  if (M > config_.max_positions) {
    throw LengthError("record " + record.sentence_id + " has " + std::to_string(M) + " words, max_positions is " +
                      std::to_string(config_.max_positions));
  }
  nn::ForwardContext ctx{options.train_mode, config_.dropout_rate, rng};

  ad::Var x = pointwise_conv(word_features(record));
  if (options.use_subject_layer) x = apply_subject_layer(x, record.subject, options.mean_subject_fallback);
  x = ad::add(w_in_(x), ad::slice_rows(positions_, 0, M));
  if (options.use_bte) x = bte_forward(x, ctx);
  x = ad::add(x, mlp_fc2_(ad::gelu(mlp_fc1_(x))));
  if (out_proj_.weight.defined()) x = out_proj_(x);
  return x;
}

Matrix BrainEncoder::encode_value(const data::SentenceRecord& record, const EncodeOptions& options) const {
  ad::NoGradGuard no_grad;
  EncodeOptions eval = options;
  eval.train_mode = false;
  return encode(record, eval).value();
}

RowVector BrainEncoder::subject_vector(const std::string& subject) const {
  auto it = subject_index_.find(subject);
  if (it == subject_index_.end()) throw SubjectError("unknown subject " + subject);
  return subject_table_.value().row(it->second);
}

void BrainEncoder::set_subject_vector(const std::string& subject, const RowVector& r) {
  auto it = subject_index_.find(subject);
  if (it == subject_index_.end()) throw SubjectError("unknown subject " + subject);
  if (r.size() != config_.conv_channels) throw ShapeError("subject vector must have D entries");
  auto table = subject_table_;
  table.mutable_value().row(it->second) = r;
}

}  // namespace e2t
