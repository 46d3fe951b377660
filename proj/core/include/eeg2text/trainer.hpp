// SPDX-License-Identifier: Apache-2.0
//
// Training stages: denoising pre-training of the mini LM, brain-to-embedding
// alignment (MSE, LM frozen), and LM fine-tuning on latent brain sequences
// (cross-entropy, brain frozen). All stages use plain SGD with a triangular
// cyclical learning rate, and keep the parameters of the best validation epoch.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeg2text/brain_encoder.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/layers.hpp"
#include "eeg2text/mini_lm.hpp"
#include "eeg2text/vocabulary.hpp"

namespace e2t {

enum class Stage { kPretrain, kAlign, kFinetune };
enum class FreezeGroup { kBrain, kLm, kLmEmbeddings };
enum class ValMetric { kMse, kCe, kBleu1 };

struct TrainPlan {
  Stage stage = Stage::kAlign;
  double lr_min = 5e-7;
  double lr_max = 5e-5;
  /// 0 selects two epochs per triangle.
  long cycle_steps = 0;
  int batch_size = 1;
  int epochs = 25;
  std::set<FreezeGroup> freeze;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;
  ValMetric val_metric = ValMetric::kMse;
  /// Global-norm gradient clip; 0 disables.
  double clip_norm = 0.0;
  /// UNK-masking probability for denoising pre-training.
  double mask_prob = 0.15;

  void validate() const;
  /// Adds the stage's mandatory freeze groups (stage 1 freezes the LM, stage 2 the brain).
  TrainPlan with_forced_freeze() const;
};

/// Triangular schedule: lr_min at step 0, lr_max at cycle_steps / 2, back to
/// lr_min at cycle_steps; periodic.
double cyclical_lr(long step, double lr_min, double lr_max, long cycle_steps);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_value = 0.0;
};

struct TrainLog {
  std::string stage;
  std::string val_metric;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_value = 0.0;
  std::string best_checkpoint;

  void write_jsonl(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

/// Plain SGD on every parameter that requires and holds a gradient; clears gradients.
void sgd_step(nn::ParameterSet& params, double lr, double clip_norm = 0.0);

/// Tokens contributed by each fixated word; punctuation tokens reuse their
/// word's row. Throws AlignError if the sum differs from tokenize(text).
std::vector<int> alignment_counts(const data::SentenceRecord& record);
/// Stage-1 loss of one record: MSE between expanded Z and the target embedding rows.
ad::Var alignment_loss(const BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                       const data::SentenceRecord& record, const EncodeOptions& options, Rng* rng = nullptr);
double mean_alignment_mse(const BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                          std::span<const data::SentenceRecord> records, const EncodeOptions& options);

/// Denoising pre-training: inputs are the text's tokens with `mask_prob` of
/// them replaced by UNK, targets are the original tokens plus EOS.
TrainLog pretrain_lm(MiniLM& lm, const Vocabulary& vocab, std::span<const std::string> texts,
                     const TrainPlan& plan);

/// Stage 1. Only brain parameters change; returns with the best epoch's parameters loaded.
TrainLog stage1_align(BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                      std::span<const data::SentenceRecord> train, std::span<const data::SentenceRecord> val,
                      const TrainPlan& plan, const EncodeOptions& options = {});

/// One training example for stage 2: fixed encoder input and its targets (tokens + EOS).
struct Seq2SeqExample {
  Matrix encoder_input;
  std::vector<int> targets;
};

/// Stage 2 on precomputed encoder inputs. Only LM parameters change.
TrainLog stage2_finetune(MiniLM& lm, const Vocabulary& vocab, std::span<const Seq2SeqExample> train,
                         std::span<const Seq2SeqExample> val, const TrainPlan& plan);
/// Stage 2 on brain encodings (frozen, evaluated once in eval mode).
TrainLog stage2_finetune(const BrainEncoder& brain, MiniLM& lm, const Vocabulary& vocab,
                         std::span<const data::SentenceRecord> train, std::span<const data::SentenceRecord> val,
                         const TrainPlan& plan, const EncodeOptions& options = {});

std::vector<Seq2SeqExample> brain_examples(const BrainEncoder& brain, const Vocabulary& vocab,
                                           std::span<const data::SentenceRecord> records,
                                           const EncodeOptions& options = {});
/// Encoder inputs are the LM's own embeddings of the fixated words.
std::vector<Seq2SeqExample> fixation_word_examples(const MiniLM& lm, const Vocabulary& vocab,
                                                   std::span<const data::SentenceRecord> records);

/// Mean teacher-forced cross-entropy (eval mode).
double mean_cross_entropy(const MiniLM& lm, std::span<const Seq2SeqExample> examples);

struct FiniteDiffEntry {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;  // min(abs, rel)
};

struct FiniteDiffReport {
  std::size_t checked = 0;
  double max_error = 0.0;
  double max_abs_error = 0.0;
  FiniteDiffEntry worst;
  std::vector<FiniteDiffEntry> failing;
  bool passed = false;
};

/// Central differences (loss(θ+ε) − loss(θ−ε)) / 2ε against one analytic
/// backward pass, for every scalar of `params`. Passes iff the max over
/// entries of min(abs_err, rel_err) is <= tolerance.
FiniteDiffReport finite_diff_check(const std::function<ad::Var()>& loss_fn, const nn::ParameterSet& params,
                                   double epsilon = 1e-5, double tolerance = 1e-4);
FiniteDiffReport finite_diff_check(const std::function<ad::Var()>& loss_fn,
                                   std::span<const nn::ParameterSet* const> params, double epsilon = 1e-5,
                                   double tolerance = 1e-4);

const char* stage_name(Stage stage);
const char* val_metric_name(ValMetric metric);

}  // namespace e2t
