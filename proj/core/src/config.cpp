// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/config.hpp"

#include <fstream>
#include <initializer_list>

#include "eeg2text/errors.hpp"

namespace e2t {
namespace {

void check_keys(const nlohmann::json& j, const char* what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

const char* freeze_name(FreezeGroup g) {
  switch (g) {
    case FreezeGroup::kBrain: return "brain";
    case FreezeGroup::kLm: return "lm";
    case FreezeGroup::kLmEmbeddings: return "lm_embeddings";
  }
  return "?";
}

FreezeGroup parse_freeze(const std::string& s) {
  if (s == "brain") return FreezeGroup::kBrain;
  if (s == "lm") return FreezeGroup::kLm;
  if (s == "lm_embeddings") return FreezeGroup::kLmEmbeddings;
  throw ConfigError("unknown freeze group '" + s + "'");
}

ValMetric parse_val_metric(const std::string& s) {
  if (s == "mse") return ValMetric::kMse;
  if (s == "ce") return ValMetric::kCe;
  if (s == "bleu1") return ValMetric::kBleu1;
  throw ConfigError("unknown val_metric '" + s + "'");
}

TrainPlan make_plan(Stage stage, double lr_min, double lr_max, int batch, int epochs, ValMetric metric) {
  TrainPlan p;
  p.stage = stage;
  p.lr_min = lr_min;
  p.lr_max = lr_max;
  p.batch_size = batch;
  p.epochs = epochs;
  p.val_metric = metric;
  return p;
}

}  // namespace

void AblationFlags::validate() const {
  if (oracle_words && (no_subject_layer || no_alignment || no_bte)) {
    throw ConfigError("oracle_words bypasses the brain module and cannot be combined with brain ablations");
  }
}

std::string AblationFlags::name() const {
  std::string out;
  const auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  add(no_subject_layer, "no_subject_layer");
  add(no_alignment, "no_alignment");
  add(no_bte, "no_bte");
  add(no_lm_finetune, "no_lm_finetune");
  add(oracle_words, "oracle_words");
  return out.empty() ? "base" : out;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_variants() {
  std::vector<std::pair<std::string, AblationFlags>> out;
  AblationFlags f;
  f.no_subject_layer = true;
  out.emplace_back(f.name(), f);
  f = {};
  f.no_alignment = true;
  out.emplace_back(f.name(), f);
  f = {};
  f.no_bte = true;
  out.emplace_back(f.name(), f);
  f = {};
  f.no_lm_finetune = true;
  out.emplace_back(f.name(), f);
  f = {};
  f.oracle_words = true;
  out.emplace_back(f.name(), f);
  return out;
}

void RunConfig::validate() const {
  if (preset != "desk" && preset != "paper") throw ConfigError("preset must be 'desk' or 'paper', got '" + preset + "'");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (split.train < 0 || split.val < 0 || split.test < 0 || split.train + split.val + split.test <= 0) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  ablation.validate();
  refinement.validate();
  pretrain.validate();
  stage1.validate();
  stage2.validate();
  if (brain.out_dim != lm.emb_dim) {
    throw ConfigError("brain out_dim (" + std::to_string(brain.out_dim) + ") must equal lm emb_dim (" +
                      std::to_string(lm.emb_dim) + ")");
  }
  if (synth_pretrain_sentences < 0) throw ConfigError("synth_pretrain_sentences must be >= 0");
  if (decode_max_len < 1) throw ConfigError("decode_max_len must be >= 1");
  if (bertscore_provider != "lm" && bertscore_provider != "identity") {
    throw ConfigError("bertscore_provider must be 'lm' or 'identity'");
  }
}

RunConfig desk_run_config() {
  RunConfig c;
  c.preset = "desk";
  c.synth_pretrain_sentences = 1000;
  c.brain = BrainConfig::desk(c.synth.channels);
  c.lm = LMConfig::desk(Vocabulary::kUnk + 1);
  c.pretrain = make_plan(Stage::kPretrain, 1e-3, 0.3, 8, 30, ValMetric::kCe);
  c.stage1 = make_plan(Stage::kAlign, 1e-3, 0.3, 1, 20, ValMetric::kMse);
  c.stage2 = make_plan(Stage::kFinetune, 1e-3, 0.3, 8, 20, ValMetric::kCe);
  return c;
}

RunConfig paper_run_config() {
  RunConfig c;
  c.preset = "paper";
  c.brain = BrainConfig::paper(104);
  c.lm = LMConfig::paper(Vocabulary::kUnk + 1);
  c.pretrain = make_plan(Stage::kPretrain, 5e-7, 5e-5, 8, 25, ValMetric::kCe);
  c.stage1 = make_plan(Stage::kAlign, 5e-7, 5e-5, 1, 25, ValMetric::kMse);
  c.stage2 = make_plan(Stage::kFinetune, 5e-7, 5e-5, 8, 25, ValMetric::kCe);
  return c;
}

RunConfig preset_run_config(const std::string& preset) {
  if (preset == "desk") return desk_run_config();
  if (preset == "paper") return paper_run_config();
  throw ConfigError("unknown preset '" + preset + "'");
}

void to_json(nlohmann::json& j, const BrainConfig& c) {
  j = {{"input_channels", c.input_channels}, {"gru_hidden", c.gru_hidden}, {"fc_dim", c.fc_dim},
       {"conv_channels", c.conv_channels},   {"bte_layers", c.bte_layers}, {"bte_heads", c.bte_heads},
       {"bte_ffn_dim", c.bte_ffn_dim},       {"model_dim", c.model_dim},   {"out_dim", c.out_dim},
       {"max_positions", c.max_positions},   {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, BrainConfig& c) {
  check_keys(j, "brain", {"input_channels", "gru_hidden", "fc_dim", "conv_channels", "bte_layers", "bte_heads",
                          "bte_ffn_dim", "model_dim", "out_dim", "max_positions", "dropout_rate"});
  read(j, "input_channels", c.input_channels);
  read(j, "gru_hidden", c.gru_hidden);
  read(j, "fc_dim", c.fc_dim);
  read(j, "conv_channels", c.conv_channels);
  read(j, "bte_layers", c.bte_layers);
  read(j, "bte_heads", c.bte_heads);
  read(j, "bte_ffn_dim", c.bte_ffn_dim);
  read(j, "model_dim", c.model_dim);
  read(j, "out_dim", c.out_dim);
  read(j, "max_positions", c.max_positions);
  read(j, "dropout_rate", c.dropout_rate);
}

void to_json(nlohmann::json& j, const LMConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"emb_dim", c.emb_dim},       {"enc_layers", c.enc_layers},
       {"dec_layers", c.dec_layers}, {"heads", c.heads},           {"ffn_dim", c.ffn_dim},
       {"max_positions", c.max_positions}, {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, LMConfig& c) {
  check_keys(j, "lm", {"vocab_size", "emb_dim", "enc_layers", "dec_layers", "heads", "ffn_dim", "max_positions",
                       "dropout_rate"});
  read(j, "vocab_size", c.vocab_size);
  read(j, "emb_dim", c.emb_dim);
  read(j, "enc_layers", c.enc_layers);
  read(j, "dec_layers", c.dec_layers);
  read(j, "heads", c.heads);
  read(j, "ffn_dim", c.ffn_dim);
  read(j, "max_positions", c.max_positions);
  read(j, "dropout_rate", c.dropout_rate);
}

void to_json(nlohmann::json& j, const TrainPlan& p) {
  nlohmann::json freeze = nlohmann::json::array();
  for (auto g : p.freeze) freeze.push_back(freeze_name(g));
  j = {{"lr_min", p.lr_min},         {"lr_max", p.lr_max},
       {"cycle_steps", p.cycle_steps}, {"batch_size", p.batch_size},
       {"epochs", p.epochs},         {"freeze", freeze},
       {"seed", p.seed},             {"checkpoint_dir", p.checkpoint_dir},
       {"val_metric", val_metric_name(p.val_metric)}, {"clip_norm", p.clip_norm},
       {"mask_prob", p.mask_prob}};
}

void from_json(const nlohmann::json& j, TrainPlan& p) {
  check_keys(j, "train plan", {"lr_min", "lr_max", "cycle_steps", "batch_size", "epochs", "freeze", "seed",
                               "checkpoint_dir", "val_metric", "clip_norm", "mask_prob"});
  read(j, "lr_min", p.lr_min);
  read(j, "lr_max", p.lr_max);
  read(j, "cycle_steps", p.cycle_steps);
  read(j, "batch_size", p.batch_size);
  read(j, "epochs", p.epochs);
  read(j, "seed", p.seed);
  read(j, "checkpoint_dir", p.checkpoint_dir);
  read(j, "clip_norm", p.clip_norm);
  read(j, "mask_prob", p.mask_prob);
  if (j.contains("freeze")) {
    p.freeze.clear();
    for (const auto& g : j.at("freeze")) p.freeze.insert(parse_freeze(g.get<std::string>()));
  }
  if (j.contains("val_metric")) p.val_metric = parse_val_metric(j.at("val_metric").get<std::string>());
}

namespace data {

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = {{"num_subjects", s.num_subjects}, {"num_sentences", s.num_sentences}, {"vocab_words", s.vocab_words},
       {"channels", s.channels},         {"min_steps", s.min_steps},         {"max_steps", s.max_steps},
       {"min_words", s.min_words},       {"max_words", s.max_words},         {"seed", s.seed},
       {"subject_gain", s.subject_gain}, {"gain_min", s.gain_min},           {"gain_max", s.gain_max},
       {"noise", s.noise},               {"subject_noise", s.subject_noise}, {"punctuate", s.punctuate}, {"amplitude_only", s.amplitude_only}, {"task", s.task},
       {"name", s.name}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  check_keys(j, "synth", {"num_subjects", "num_sentences", "vocab_words", "channels", "min_steps", "max_steps",
                          "min_words", "max_words", "seed", "subject_gain", "gain_min", "gain_max", "noise",
                          "subject_noise", "punctuate", "amplitude_only", "task", "name"});
  read(j, "num_subjects", s.num_subjects);
  read(j, "num_sentences", s.num_sentences);
  read(j, "vocab_words", s.vocab_words);
  read(j, "channels", s.channels);
  read(j, "min_steps", s.min_steps);
  read(j, "max_steps", s.max_steps);
  read(j, "min_words", s.min_words);
  read(j, "max_words", s.max_words);
  read(j, "seed", s.seed);
  read(j, "subject_gain", s.subject_gain);
  read(j, "gain_min", s.gain_min);
  read(j, "gain_max", s.gain_max);
  read(j, "noise", s.noise);
  read(j, "subject_noise", s.subject_noise);
  read(j, "punctuate", s.punctuate);
  read(j, "amplitude_only", s.amplitude_only);
  read(j, "task", s.task);
  read(j, "name", s.name);
}

}  // namespace data

void to_json(nlohmann::json& j, const AblationFlags& f) {
  j = {{"no_subject_layer", f.no_subject_layer}, {"no_alignment", f.no_alignment}, {"no_bte", f.no_bte},
       {"no_lm_finetune", f.no_lm_finetune},     {"oracle_words", f.oracle_words}};
}

void from_json(const nlohmann::json& j, AblationFlags& f) {
  check_keys(j, "ablation", {"no_subject_layer", "no_alignment", "no_bte", "no_lm_finetune", "oracle_words"});
  read(j, "no_subject_layer", f.no_subject_layer);
  read(j, "no_alignment", f.no_alignment);
  read(j, "no_bte", f.no_bte);
  read(j, "no_lm_finetune", f.no_lm_finetune);
  read(j, "oracle_words", f.oracle_words);
}

void to_json(nlohmann::json& j, const RefineConfig& r) {
  j = {{"enabled", r.enabled},           {"endpoint_url", r.endpoint_url},
       {"api_key_env", r.api_key_env},   {"model_name", r.model_name},
       {"max_in_flight", r.max_in_flight}, {"timeout_seconds", r.timeout_seconds},
       {"max_attempts", r.max_attempts}, {"backoff_seconds", r.backoff_seconds}};
}

void from_json(const nlohmann::json& j, RefineConfig& r) {
  check_keys(j, "refinement", {"enabled", "endpoint_url", "api_key_env", "model_name", "max_in_flight",
                               "timeout_seconds", "max_attempts", "backoff_seconds"});
  read(j, "enabled", r.enabled);
  read(j, "endpoint_url", r.endpoint_url);
  read(j, "api_key_env", r.api_key_env);
  read(j, "model_name", r.model_name);
  read(j, "max_in_flight", r.max_in_flight);
  read(j, "timeout_seconds", r.timeout_seconds);
  read(j, "max_attempts", r.max_attempts);
  read(j, "backoff_seconds", r.backoff_seconds);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"preset", c.preset},
       {"corpus_dir", c.corpus_dir},
       {"synth", c.synth},
       {"synth_pretrain_sentences", c.synth_pretrain_sentences},
       {"seeds", c.seeds},
       {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.split_seed}}},
       {"normalize", c.normalize},
       {"pretrain_texts", c.pretrain_texts},
       {"brain", c.brain},
       {"lm", c.lm},
       {"pretrain", c.pretrain},
       {"stage1", c.stage1},
       {"stage2", c.stage2},
       {"ablation", c.ablation},
       {"refinement", c.refinement},
       {"decode_max_len", c.decode_max_len},
       {"bertscore_provider", c.bertscore_provider}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  check_keys(j, "run config", {"preset", "corpus_dir", "synth", "synth_pretrain_sentences", "seeds", "split", "normalize", "pretrain_texts",
                               "brain", "lm", "pretrain", "stage1", "stage2", "ablation", "refinement",
                               "decode_max_len", "bertscore_provider"});
  c = preset_run_config(j.value("preset", std::string("desk")));
  read(j, "corpus_dir", c.corpus_dir);
  if (j.contains("synth")) from_json(j.at("synth"), c.synth);
  read(j, "synth_pretrain_sentences", c.synth_pretrain_sentences);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "split", {"train", "val", "test", "seed"});
    read(s, "train", c.split.train);
    read(s, "val", c.split.val);
    read(s, "test", c.split.test);
    read(s, "seed", c.split_seed);
  }
  read(j, "normalize", c.normalize);
  read(j, "pretrain_texts", c.pretrain_texts);
  if (j.contains("brain")) from_json(j.at("brain"), c.brain);
  if (j.contains("lm")) from_json(j.at("lm"), c.lm);
  if (j.contains("pretrain")) from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("stage1")) from_json(j.at("stage1"), c.stage1);
  if (j.contains("stage2")) from_json(j.at("stage2"), c.stage2);
  if (j.contains("ablation")) from_json(j.at("ablation"), c.ablation);
  if (j.contains("refinement")) from_json(j.at("refinement"), c.refinement);
  read(j, "decode_max_len", c.decode_max_len);
  read(j, "bertscore_provider", c.bertscore_provider);
  c.pretrain.stage = Stage::kPretrain;
  c.stage1.stage = Stage::kAlign;
  c.stage2.stage = Stage::kFinetune;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

}  // namespace e2t
