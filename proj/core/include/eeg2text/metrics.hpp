// SPDX-License-Identifier: Apache-2.0
//
// Text-generation metrics. BLEU-n is a single n-gram order at corpus level
// (clipped counts summed over the corpus, times the brevity penalty). ROUGE-1
// and BERTScore macro-average precision and recall over sentence pairs; the
// reported F is the harmonic mean of the averaged P and R.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeg2text/autograd.hpp"

namespace e2t {

class MiniLM;
class Vocabulary;

struct PRF {
  double p = 0.0;
  double r = 0.0;
  double f = 0.0;
};

/// 2pr / (p + r), or 0 when p + r == 0.
double harmonic_f(double p, double r);

/// Token sequence -> (len x dim) matrix of embeddings, one row per token.
using EmbeddingProvider = std::function<Matrix(const std::vector<std::string>&)>;

/// One-hot embeddings; each distinct token gets its own axis the first time it is seen.
EmbeddingProvider identity_provider();
/// Final encoder states of the mini LM over its embedded tokens.
EmbeddingProvider lm_provider(const MiniLM& lm, const Vocabulary& vocab);

double bleu_n(std::span<const std::string> candidates, std::span<const std::string> references, int n);
PRF rouge1(std::span<const std::string> candidates, std::span<const std::string> references);
/// Pairs with an empty side are skipped; `skipped` receives their count.
PRF bertscore(std::span<const std::string> candidates, std::span<const std::string> references,
              const EmbeddingProvider& provider, std::size_t* skipped = nullptr);

struct MetricScores {
  std::map<int, double> bleu;  // order -> score
  PRF rouge1;
  PRF bertscore;
  std::size_t pairs = 0;
  std::size_t bertscore_skipped = 0;
};

struct MetricsReport {
  MetricScores overall;
  std::map<std::string, MetricScores> per_subject;

  nlohmann::json to_json() const;
  /// Aligned plain-text table, one row per scope, scores in percent.
  std::string to_table(const std::string& label = "run") const;
};

MetricScores score_all(std::span<const std::string> candidates, std::span<const std::string> references,
                       const EmbeddingProvider& provider);
/// `subjects[i]` tags pair i; per-subject scores are added when non-empty.
MetricsReport build_report(std::span<const std::string> candidates, std::span<const std::string> references,
                           std::span<const std::string> subjects, const EmbeddingProvider& provider);

nlohmann::json scores_to_json(const MetricScores& scores);

}  // namespace e2t
