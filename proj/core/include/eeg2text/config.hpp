// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: JSON mapping for every tunable plus the desk and paper
// presets. A config file names a preset and overrides individual fields;
// unknown keys are rejected so typos fail loudly.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeg2text/brain_encoder.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/mini_lm.hpp"
#include "eeg2text/refine.hpp"
#include "eeg2text/trainer.hpp"

namespace e2t {

namespace data {
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);
}  // namespace data

struct AblationFlags {
  bool no_subject_layer = false;
  bool no_alignment = false;
  bool no_bte = false;
  bool no_lm_finetune = false;
  bool oracle_words = false;

  /// oracle_words bypasses the brain module, so it excludes the brain flags.
  void validate() const;
  bool any() const { return no_subject_layer || no_alignment || no_bte || no_lm_finetune || oracle_words; }
  /// "base" when no flag is set, else the set flags joined by '+'.
  std::string name() const;
  bool operator==(const AblationFlags&) const = default;
};

/// The five single-flag variants, in report order.
std::vector<std::pair<std::string, AblationFlags>> ablation_variants();

struct RunConfig {
  std::string preset = "desk";
  /// Corpus directory; when empty the `synth` spec is generated in memory.
  std::string corpus_dir;
  data::SynthSpec synth;
  /// Extra text-only sentences over the synthetic vocabulary added to the
  /// pre-training corpus (synthetic runs only).
  int synth_pretrain_sentences = 0;
  std::vector<std::uint64_t> seeds = {0};
  data::SplitRatios split;
  std::uint64_t split_seed = 0;
  bool normalize = true;
  /// Optional extra pre-training text, one sentence per line.
  std::string pretrain_texts;
  /// input_channels is taken from the corpus at run time.
  BrainConfig brain;
  /// vocab_size is taken from the vocabulary at run time.
  LMConfig lm;
  TrainPlan pretrain;
  TrainPlan stage1;
  TrainPlan stage2;
  AblationFlags ablation;
  RefineConfig refinement;
  int decode_max_len = 48;
  /// "lm" (pre-trained mini LM encoder states) or "identity" (one-hot).
  std::string bertscore_provider = "lm";

  void validate() const;
};

RunConfig desk_run_config();
RunConfig paper_run_config();
RunConfig preset_run_config(const std::string& preset);

void to_json(nlohmann::json& j, const BrainConfig& c);
void from_json(const nlohmann::json& j, BrainConfig& c);
void to_json(nlohmann::json& j, const LMConfig& c);
void from_json(const nlohmann::json& j, LMConfig& c);
void to_json(nlohmann::json& j, const TrainPlan& p);
void from_json(const nlohmann::json& j, TrainPlan& p);
void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const RefineConfig& r);
void from_json(const nlohmann::json& j, RefineConfig& r);
void to_json(nlohmann::json& j, const RunConfig& c);
/// Starts from the preset named by "preset" (default desk), then applies overrides.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::string& path);

}  // namespace e2t
