// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "eeg2text/errors.hpp"
#include "eeg2text/mini_lm.hpp"
#include "eeg2text/vocabulary.hpp"

namespace e2t {
namespace {

void check_pairs(std::span<const std::string> candidates, std::span<const std::string> references) {
  if (candidates.empty()) throw MetricError("empty candidate corpus");
  if (candidates.size() != references.size()) {
    throw MetricError("candidate/reference count mismatch: " + std::to_string(candidates.size()) + " vs " +
                      std::to_string(references.size()));
  }
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + un))];
  }
  return counts;
}

int clipped_overlap(const std::map<std::vector<std::string>, int>& cand,
                    const std::map<std::vector<std::string>, int>& ref) {
  int overlap = 0;
  for (const auto& [gram, c] : cand) {
    const auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

double cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  const Eigen::Index width = std::min(a.cols(), b.cols());
  const double dot = a.row(i).head(width).dot(b.row(j).head(width));
  const double na = a.row(i).norm();
  const double nb = b.row(j).norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

}  // namespace

double harmonic_f(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

EmbeddingProvider identity_provider() {
  auto index = std::make_shared<std::unordered_map<std::string, Eigen::Index>>();
  return [index](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) index->try_emplace(t, static_cast<Eigen::Index>(index->size()));
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(index->size()));
    for (std::size_t i = 0; i < tokens.size(); ++i) m(static_cast<Eigen::Index>(i), index->at(tokens[i])) = 1.0;
    return m;
  };
}

EmbeddingProvider lm_provider(const MiniLM& lm, const Vocabulary& vocab) {
  return [&lm, &vocab](const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    const int limit = lm.config().max_positions;
    if (static_cast<int>(ids.size()) > limit) ids.resize(static_cast<std::size_t>(limit));
    ad::NoGradGuard no_grad;
    Matrix states = lm.encode_states(lm.embed_tokens(ids), nn::ForwardContext{}).value();
    // Tokens beyond the position table get a zero row (similarity 0).
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), states.cols());
    out.topRows(states.rows()) = states;
    return out;
  };
}

double bleu_n(std::span<const std::string> candidates, std::span<const std::string> references, int n) {
  check_pairs(candidates, references);
  if (n < 1 || n > 4) throw MetricError("BLEU order must be in 1..4, got " + std::to_string(n));
  long overlap = 0, total = 0, cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize_words(candidates[i]);
    const auto ref = tokenize_words(references[i]);
    cand_len += static_cast<long>(cand.size());
    ref_len += static_cast<long>(ref.size());
    if (cand.size() >= static_cast<std::size_t>(n)) total += static_cast<long>(cand.size()) - n + 1;
    overlap += clipped_overlap(ngram_counts(cand, n), ngram_counts(ref, n));
  }
  if (cand_len == 0 || total == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(total);
  const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)));
  return precision * bp;
}

PRF rouge1(std::span<const std::string> candidates, std::span<const std::string> references) {
  check_pairs(candidates, references);
  double p_sum = 0.0, r_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize_words(candidates[i]);
    const auto ref = tokenize_words(references[i]);
    const double overlap = clipped_overlap(ngram_counts(cand, 1), ngram_counts(ref, 1));
    if (!cand.empty()) p_sum += overlap / static_cast<double>(cand.size());
    if (!ref.empty()) r_sum += overlap / static_cast<double>(ref.size());
  }
  const double count = static_cast<double>(candidates.size());
  PRF out{p_sum / count, r_sum / count, 0.0};
  out.f = harmonic_f(out.p, out.r);
  return out;
}

PRF bertscore(std::span<const std::string> candidates, std::span<const std::string> references,
              const EmbeddingProvider& provider, std::size_t* skipped) {
  check_pairs(candidates, references);
  if (!provider) throw MetricError("no embedding provider");
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t used = 0, skip = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize_words(candidates[i]);
    const auto ref = tokenize_words(references[i]);
    if (cand.empty() || ref.empty()) {
      ++skip;
      continue;
    }
    const Matrix ce = provider(cand);
    const Matrix re = provider(ref);
    if (ce.rows() != static_cast<Eigen::Index>(cand.size()) || re.rows() != static_cast<Eigen::Index>(ref.size())) {
      throw MetricError("embedding provider returned the wrong row count");
    }
    if (!ce.allFinite() || !re.allFinite()) throw MetricError("embedding provider returned non-finite values");
    Matrix sim(ce.rows(), re.rows());
    for (Eigen::Index a = 0; a < ce.rows(); ++a) {
      for (Eigen::Index b = 0; b < re.rows(); ++b) sim(a, b) = cosine(ce, a, re, b);
    }
    p_sum += sim.rowwise().maxCoeff().mean();
    r_sum += sim.colwise().maxCoeff().mean();
    ++used;
  }
  if (skipped != nullptr) *skipped = skip;
  if (used == 0) return {};
  PRF out{p_sum / static_cast<double>(used), r_sum / static_cast<double>(used), 0.0};
  out.f = harmonic_f(out.p, out.r);
  return out;
}

MetricScores score_all(std::span<const std::string> candidates, std::span<const std::string> references,
                       const EmbeddingProvider& provider) {
  MetricScores s;
  for (int n = 1; n <= 4; ++n) s.bleu[n] = bleu_n(candidates, references, n);
  s.rouge1 = rouge1(candidates, references);
  s.bertscore = bertscore(candidates, references, provider, &s.bertscore_skipped);
  s.pairs = candidates.size();
  return s;
}

MetricsReport build_report(std::span<const std::string> candidates, std::span<const std::string> references,
                           std::span<const std::string> subjects, const EmbeddingProvider& provider) {
  MetricsReport report;
  report.overall = score_all(candidates, references, provider);
  if (subjects.empty()) return report;
  if (subjects.size() != candidates.size()) throw MetricError("subject tags do not match the pair count");
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> groups;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    groups[subjects[i]].first.push_back(candidates[i]);
    groups[subjects[i]].second.push_back(references[i]);
  }
  for (const auto& [subject, pairs] : groups) report.per_subject[subject] = score_all(pairs.first, pairs.second, provider);
  return report;
}

nlohmann::json scores_to_json(const MetricScores& s) {
  nlohmann::json bleu = nlohmann::json::object();
  for (const auto& [n, v] : s.bleu) bleu[std::to_string(n)] = v;
  return {{"bleu", bleu},
          {"rouge1", {{"p", s.rouge1.p}, {"r", s.rouge1.r}, {"f", s.rouge1.f}}},
          {"bertscore", {{"p", s.bertscore.p}, {"r", s.bertscore.r}, {"f", s.bertscore.f}}},
          {"pairs", s.pairs},
          {"bertscore_skipped", s.bertscore_skipped}};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["overall"] = scores_to_json(overall);
  nlohmann::json subjects = nlohmann::json::object();
  for (const auto& [name, s] : per_subject) subjects[name] = scores_to_json(s);
  j["per_subject"] = subjects;
  return j;
}

std::string MetricsReport::to_table(const std::string& label) const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %7s %7s %7s %7s | %7s %7s %7s | %7s %7s %7s\n", "scope", "BLEU-1", "BLEU-2",
                "BLEU-3", "BLEU-4", "R1-P", "R1-R", "R1-F", "BS-P", "BS-R", "BS-F");
  out << line;
  const auto row = [&](const std::string& name, const MetricScores& s) {
    std::snprintf(line, sizeof line, "%-16s %7.2f %7.2f %7.2f %7.2f | %7.2f %7.2f %7.2f | %7.2f %7.2f %7.2f\n",
                  name.c_str(), 100 * s.bleu.at(1), 100 * s.bleu.at(2), 100 * s.bleu.at(3), 100 * s.bleu.at(4),
                  100 * s.rouge1.p, 100 * s.rouge1.r, 100 * s.rouge1.f, 100 * s.bertscore.p, 100 * s.bertscore.r,
                  100 * s.bertscore.f);
    out << line;
  };
  row(label, overall);
  for (const auto& [name, s] : per_subject) row("  " + name, s);
  return out.str();
}

}  // namespace e2t
