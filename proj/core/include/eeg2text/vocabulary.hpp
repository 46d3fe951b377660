// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace e2t {

/// Word-level tokenization: whitespace split, then leading and trailing ASCII
/// punctuation peeled off each chunk as single-character tokens. Interior
/// punctuation ("don't", "U.S") stays inside the word. Case is preserved.
std::vector<std::string> tokenize_words(const std::string& text);

/// Joins tokens with single spaces; closing punctuation attaches to the
/// previous token and opening brackets to the next one.
std::string join_tokens(std::span<const std::string> tokens);

bool is_punctuation_token(const std::string& token);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  /// Specials, then every distinct token of `texts` in sorted order.
  static Vocabulary build(std::span<const std::string> texts);
  /// One token per line, line number = id. The first four lines must be the specials.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// tokenize_words + id lookup; OOV words map to kUnk.
  std::vector<int> encode(const std::string& text) const;
  /// Skips PAD/BOS/EOS; UNK renders as "<unk>".
  std::string decode(std::span<const int> ids) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace e2t
