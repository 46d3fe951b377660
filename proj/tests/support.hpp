// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for unit and acceptance tests: micro model configs, tiny
// corpora and scratch directories.
#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "eeg2text/brain_encoder.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/mini_lm.hpp"
#include "eeg2text/vocabulary.hpp"

namespace e2t::testing {

/// Unique directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("e2t_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// C=4, d_model=8, |V|=12: small enough for exhaustive finite differences.
inline BrainConfig micro_brain_config() {
  BrainConfig c;
  c.input_channels = 4;
  c.gru_hidden = 2;
  c.fc_dim = 4;
  c.conv_channels = 4;
  c.bte_layers = 1;
  c.bte_heads = 2;
  c.bte_ffn_dim = 8;
  c.model_dim = 8;
  c.out_dim = 8;
  c.max_positions = 4;
  c.dropout_rate = 0.0;
  return c;
}

inline LMConfig micro_lm_config() {
  LMConfig c;
  c.vocab_size = 12;
  c.emb_dim = 8;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.ffn_dim = 8;
  c.max_positions = 8;
  c.dropout_rate = 0.0;
  return c;
}

/// Eight content words plus the four reserved tokens.
inline Vocabulary micro_vocabulary() {
  const std::vector<std::string> texts = {"alpha beta gamma delta epsilon zeta eta theta"};
  return Vocabulary::build(texts);
}

inline data::EEGSegment random_segment(int channels, int steps, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  data::EEGSegment seg;
  seg.samples.resize(channels, steps);
  for (Eigen::Index i = 0; i < seg.samples.size(); ++i) seg.samples.data()[i] = n(rng);
  return seg;
}

/// One record whose words are the whitespace words of `text`.
inline data::SentenceRecord make_record(const std::string& id, const std::string& subject, const std::string& text,
                                        int channels, std::mt19937_64& rng, int steps = 3) {
  data::SentenceRecord r;
  r.sentence_id = id;
  r.subject = subject;
  r.task = "NR-v1";
  r.text = text;
  for (const auto& w : data::whitespace_words(text)) r.words.push_back({w, random_segment(channels, steps, rng)});
  return r;
}

}  // namespace e2t::testing
