// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: corpus preparation, the three training stages,
// test-split decoding, metric reports, the ablation matrix, embedding export
// and optional refinement. Every artifact is a pure function of (config,
// seed, corpus).
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeg2text/brain_encoder.hpp"
#include "eeg2text/config.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/metrics.hpp"
#include "eeg2text/mini_lm.hpp"
#include "eeg2text/trainer.hpp"
#include "eeg2text/vocabulary.hpp"

namespace e2t {

/// Prepared data for one seed: normalized records split into train/val/test
/// and the vocabulary (train texts plus optional pre-training texts).
struct Workspace {
  RunConfig config;
  std::uint64_t seed = 0;
  data::CorpusManifest manifest;
  std::vector<data::SentenceRecord> train, val, test;
  data::SplitAssignment split;
  data::ChannelStats stats;
  Vocabulary vocab;
  std::vector<std::string> pretrain_texts;

  std::vector<std::string> subjects() const { return manifest.subjects; }
  const std::vector<data::SentenceRecord>& records(data::Split which) const;
  BrainConfig brain_config() const;
  LMConfig lm_config() const;
};

/// Loads corpus_dir (IoError naming the path when it is missing) or
/// synthesizes the configured corpus, then splits and normalizes it.
Workspace prepare_workspace(const RunConfig& config, std::uint64_t seed);

/// Seeds for the models and stages of one run, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

EncodeOptions encode_options(const AblationFlags& flags);

std::unique_ptr<MiniLM> make_lm(const Workspace& ws);
std::unique_ptr<BrainEncoder> make_brain(const Workspace& ws);

void save_lm(const std::filesystem::path& path, const MiniLM& lm);
std::unique_ptr<MiniLM> load_lm(const std::filesystem::path& path);
void save_brain(const std::filesystem::path& path, const BrainEncoder& brain);
std::unique_ptr<BrainEncoder> load_brain(const std::filesystem::path& path);

TrainLog run_pretrain(const Workspace& ws, MiniLM& lm);
/// Skipped (empty log) for no_alignment and oracle_words.
TrainLog run_stage1(const Workspace& ws, BrainEncoder& brain, const MiniLM& lm, const AblationFlags& flags);
/// Skipped (empty log) for no_lm_finetune.
TrainLog run_stage2(const Workspace& ws, const BrainEncoder& brain, MiniLM& lm, const AblationFlags& flags);

struct DecodedRow {
  std::string subject;
  std::string sentence_id;
  std::string reference;
  std::string decoded;
};

std::vector<DecodedRow> decode_records(const Workspace& ws, const BrainEncoder& brain, const MiniLM& lm,
                                       const AblationFlags& flags, data::Split which);
void write_decoded_tsv(const std::filesystem::path& path, const std::vector<DecodedRow>& rows);
std::vector<DecodedRow> read_decoded_tsv(const std::filesystem::path& path);

EmbeddingProvider make_provider(const RunConfig& config, const MiniLM& scorer, const Vocabulary& vocab);
MetricsReport evaluate_rows(const std::vector<DecodedRow>& rows, const EmbeddingProvider& provider);

struct VariantResult {
  std::string name;
  AblationFlags flags;
  MetricsReport report;
  std::optional<MetricsReport> refined_report;
  nlohmann::json logs;  // per-stage TrainLog summaries
  double seconds = 0.0;
  std::filesystem::path dir;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  std::vector<VariantResult> variants;  // base (or the configured variant) first
  nlohmann::json comparison;            // ablation runs only
};

/// pretrain -> stage1 -> stage2 -> decode test -> metrics for the configured
/// ablation flags and the first seed. Writes everything under `out_dir`.
PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);
/// Base run plus the five single-flag variants, sharing one pre-trained LM;
/// writes comparison.json / comparison.txt with deltas against base.
PipelineResult run_ablation(const RunConfig& config, const std::filesystem::path& out_dir);

/// CSV with header "subject,sentence_id,z0,...": one row per record of
/// `which`, holding the mean over words of the encoder output.
std::size_t export_embeddings(const BrainEncoder& brain, const Workspace& ws, data::Split which,
                              const std::filesystem::path& out_path);

/// Per task: unique sentences and records in each split.
nlohmann::json split_report(const Workspace& ws);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace e2t
