// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "eeg2text/dataset.hpp"
#include "eeg2text/errors.hpp"

namespace e2t {
namespace {

constexpr const char* kSpecials[] = {"<pad>", "<s>", "</s>", "<unk>"};

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

bool is_opening(const std::string& t) { return t == "(" || t == "[" || t == "{"; }

}  // namespace

bool is_punctuation_token(const std::string& token) {
  return token.size() == 1 && is_punct(static_cast<unsigned char>(token[0]));
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& chunk : data::whitespace_words(text)) {
    std::size_t begin = 0;
    std::size_t end = chunk.size();
    while (begin < end && is_punct(static_cast<unsigned char>(chunk[begin]))) {
      out.emplace_back(1, chunk[begin]);
      ++begin;
    }
    std::vector<std::string> trailing;
    while (end > begin && is_punct(static_cast<unsigned char>(chunk[end - 1]))) {
      trailing.emplace_back(1, chunk[end - 1]);
      --end;
    }
    if (end > begin) out.push_back(chunk.substr(begin, end - begin));
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  bool attach_next = true;
  for (const auto& t : tokens) {
    const bool attach_prev = is_punctuation_token(t) && !is_opening(t);
    if (!out.empty() && !attach_next && !attach_prev) out.push_back(' ');
    out += t;
    attach_next = is_opening(t);
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : kSpecials) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) throw VocabError("duplicate vocabulary token '" + token + "'");
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : tokenize_words(t)) words.insert(std::move(w));
  }
  Vocabulary v;
  for (const auto& w : words) {
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 4) throw VocabError("vocabulary file needs the four reserved tokens");
  for (int i = 0; i < 4; ++i) {
    if (lines[static_cast<std::size_t>(i)] != kSpecials[i]) {
      throw VocabError("vocabulary line " + std::to_string(i) + " must be " + kSpecials[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = 4; i < lines.size(); ++i) v.add(lines[i]);
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : tokenize_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int i : ids) {
    if (i == kPad || i == kBos || i == kEos) continue;
    words.push_back(token(i));
  }
  return join_tokens(words);
}

}  // namespace e2t
