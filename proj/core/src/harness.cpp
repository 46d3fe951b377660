// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/harness.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eeg2text/checkpoint.hpp"
#include "eeg2text/errors.hpp"
#include "eeg2text/refine.hpp"

namespace e2t {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kLmSalt = 1;
constexpr std::uint64_t kBrainSalt = 2;
constexpr std::uint64_t kPretrainSalt = 10;
constexpr std::uint64_t kStage1Salt = 11;
constexpr std::uint64_t kStage2Salt = 12;

std::string tsv_clean(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

TrainPlan seeded(TrainPlan plan, std::uint64_t seed, std::uint64_t salt) {
  plan.seed = derive_seed(seed, salt) ^ plan.seed;
  return plan;
}

std::vector<Seq2SeqExample> stage2_examples(const Workspace& ws, const BrainEncoder& brain, const MiniLM& lm,
                                            const AblationFlags& flags, std::span<const data::SentenceRecord> recs) {
  if (flags.oracle_words) return fixation_word_examples(lm, ws.vocab, recs);
  return brain_examples(brain, ws.vocab, recs, encode_options(flags));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

VariantResult run_variant(const Workspace& ws, const std::map<std::string, Matrix>& pretrained,
                          const AblationFlags& flags, const fs::path& dir, const EmbeddingProvider& provider) {
  const auto start = std::chrono::steady_clock::now();
  flags.validate();
  fs::create_directories(dir / "checkpoints");
  VariantResult result;
  result.name = flags.name();
  result.flags = flags;
  result.dir = dir;

  auto lm = make_lm(ws);
  lm->params().load_values(pretrained);
  auto brain = make_brain(ws);

  const std::string where = "variant " + result.name;
  TrainLog log1, log2;
  try {
    log1 = run_stage1(ws, *brain, *lm, flags);
  } catch (const Error& e) {
    throw Error(e.kind(), where + ", stage1: " + e.what());
  }
  try {
    log2 = run_stage2(ws, *brain, *lm, flags);
  } catch (const Error& e) {
    throw Error(e.kind(), where + ", stage2: " + e.what());
  }
  log1.write_jsonl(dir / "stage1.jsonl");
  log2.write_jsonl(dir / "stage2.jsonl");
  save_brain(dir / "checkpoints" / "brain.e2tp", *brain);
  save_lm(dir / "checkpoints" / "lm.e2tp", *lm);
  result.logs = {{"stage1", log1.summary()}, {"stage2", log2.summary()}};
  write_json(dir / "train_summary.json", result.logs);

  std::vector<DecodedRow> rows;
  try {
    rows = decode_records(ws, *brain, *lm, flags, data::Split::kTest);
  } catch (const Error& e) {
    throw Error(e.kind(), where + ", decode: " + e.what());
  }
  write_decoded_tsv(dir / "decoded.tsv", rows);
  result.report = evaluate_rows(rows, provider);
  write_json(dir / "metrics.json", result.report.to_json());
  write_text(dir / "metrics.txt", result.report.to_table(result.name));

  if (ws.config.refinement.enabled) {
    std::vector<std::string> decoded;
    for (const auto& r : rows) decoded.push_back(r.decoded);
    const auto outcomes = refine_sentences(decoded, ws.config.refinement);
    std::vector<DecodedRow> refined = rows;
    nlohmann::json log = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      refined[i].decoded = outcomes[i].refined;
      log.push_back({{"index", i},
                     {"status", refine_status_name(outcomes[i].status)},
                     {"attempts", outcomes[i].attempts},
                     {"detail", outcomes[i].detail}});
    }
    write_decoded_tsv(dir / "refined.tsv", refined);
    write_json(dir / "refine_log.json", log);
    result.refined_report = evaluate_rows(refined, provider);
    write_json(dir / "metrics_refined.json", result.refined_report->to_json());
    write_text(dir / "metrics_refined.txt", result.refined_report->to_table(result.name + "+refine"));
  }
  result.seconds = seconds_since(start);
  return result;
}

struct Pretrained {
  std::map<std::string, Matrix> values;
  std::unique_ptr<MiniLM> scorer;
};

Pretrained pretrain_shared(const Workspace& ws, const fs::path& out_dir) {
  fs::create_directories(out_dir / "checkpoints");
  write_json(out_dir / "config.json", nlohmann::json(ws.config));
  ws.vocab.save(out_dir / "vocab.txt");
  write_json(out_dir / "split.json", split_report(ws));
  Pretrained p;
  p.scorer = make_lm(ws);
  TrainLog log;
  try {
    log = run_pretrain(ws, *p.scorer);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("pretrain: ") + e.what());
  }
  log.write_jsonl(out_dir / "pretrain.jsonl");
  write_json(out_dir / "pretrain_summary.json", log.summary());
  save_lm(out_dir / "checkpoints" / "lm_pretrained.e2tp", *p.scorer);
  p.values = p.scorer->params().values();
  return p;
}

nlohmann::json headline(const MetricScores& s) {
  return {{"bleu1", s.bleu.at(1)}, {"bleu2", s.bleu.at(2)}, {"bleu3", s.bleu.at(3)}, {"bleu4", s.bleu.at(4)},
          {"rouge1_f", s.rouge1.f}, {"bertscore_f", s.bertscore.f}};
}

}  // namespace

const std::vector<data::SentenceRecord>& Workspace::records(data::Split which) const {
  switch (which) {
    case data::Split::kTrain: return train;
    case data::Split::kVal: return val;
    case data::Split::kTest: return test;
  }
  return train;
}

BrainConfig Workspace::brain_config() const {
  BrainConfig c = config.brain;
  c.input_channels = static_cast<int>(manifest.channel_names.size());
  return c;
}

LMConfig Workspace::lm_config() const {
  LMConfig c = config.lm;
  c.vocab_size = vocab.size();
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL + salt * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL;
  x ^= x >> 31;
  x *= 0xD6E8FEB86659FD93ULL;
  x ^= x >> 32;
  return x;
}

Workspace prepare_workspace(const RunConfig& config, std::uint64_t seed) {
  config.validate();
  Workspace ws;
  ws.config = config;
  ws.seed = seed;
  data::Corpus corpus;
  if (config.corpus_dir.empty()) {
    corpus = data::synthesize_corpus(config.synth);
  } else {
    if (!fs::is_directory(config.corpus_dir)) throw IoError("corpus directory not found: " + config.corpus_dir);
    corpus = data::load_corpus(config.corpus_dir);
  }
  ws.manifest = corpus.manifest;
  ws.split = data::split_by_sentence(corpus.records, config.split, config.split_seed);
  ws.train = data::select_split(corpus.records, ws.split, data::Split::kTrain);
  ws.val = data::select_split(corpus.records, ws.split, data::Split::kVal);
  ws.test = data::select_split(corpus.records, ws.split, data::Split::kTest);
  if (ws.train.empty()) throw SplitError("training split is empty");
  if (config.normalize) {
    ws.stats = data::compute_channel_stats(ws.train);
    data::apply_channel_stats(ws.train, ws.stats);
    data::apply_channel_stats(ws.val, ws.stats);
    data::apply_channel_stats(ws.test, ws.stats);
  }
  // One pre-training text per unique training sentence.
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : ws.train) {
    if (seen.emplace(r.task, data::sentence_key(r.text)).second) ws.pretrain_texts.push_back(r.text);
  }
  if (config.corpus_dir.empty() && config.synth_pretrain_sentences > 0) {
    // Held-out sentences never enter pre-training.
    std::set<std::string> held_out;
    for (const auto* split : {&ws.val, &ws.test}) {
      for (const auto& r : *split) held_out.insert(data::sentence_key(r.text));
    }
    for (auto& t : data::synthesize_texts(config.synth, config.synth_pretrain_sentences, config.synth.seed + 1)) {
      if (!held_out.contains(data::sentence_key(t))) ws.pretrain_texts.push_back(std::move(t));
    }
  }
  if (!config.pretrain_texts.empty()) {
    for (auto& line : read_lines(config.pretrain_texts)) ws.pretrain_texts.push_back(std::move(line));
  }
  ws.vocab = Vocabulary::build(ws.pretrain_texts);
  return ws;
}

EncodeOptions encode_options(const AblationFlags& flags) {
  EncodeOptions o;
  o.use_subject_layer = !flags.no_subject_layer;
  o.use_bte = !flags.no_bte;
  return o;
}

std::unique_ptr<MiniLM> make_lm(const Workspace& ws) {
  return std::make_unique<MiniLM>(ws.lm_config(), derive_seed(ws.seed, kLmSalt));
}

std::unique_ptr<BrainEncoder> make_brain(const Workspace& ws) {
  return std::make_unique<BrainEncoder>(ws.brain_config(), ws.subjects(), derive_seed(ws.seed, kBrainSalt));
}

void save_lm(const fs::path& path, const MiniLM& lm) {
  save_checkpoint(path, {{"kind", "lm"}, {"lm", lm.config()}}, lm.params());
}

std::unique_ptr<MiniLM> load_lm(const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.config.value("kind", "") != "lm") throw FormatError(path.string() + " is not a language-model checkpoint");
  auto lm = std::make_unique<MiniLM>(ck.config.at("lm").get<LMConfig>(), 0);
  restore_parameters(ck, lm->params());
  return lm;
}

void save_brain(const fs::path& path, const BrainEncoder& brain) {
  save_checkpoint(path, {{"kind", "brain"}, {"brain", brain.config()}, {"subjects", brain.subjects()}}, brain.params());
}

std::unique_ptr<BrainEncoder> load_brain(const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.config.value("kind", "") != "brain") throw FormatError(path.string() + " is not a brain-encoder checkpoint");
  auto brain = std::make_unique<BrainEncoder>(ck.config.at("brain").get<BrainConfig>(),
                                              ck.config.at("subjects").get<std::vector<std::string>>(), 0);
  restore_parameters(ck, brain->params());
  return brain;
}

TrainLog run_pretrain(const Workspace& ws, MiniLM& lm) {
  return pretrain_lm(lm, ws.vocab, ws.pretrain_texts, seeded(ws.config.pretrain, ws.seed, kPretrainSalt));
}

TrainLog run_stage1(const Workspace& ws, BrainEncoder& brain, const MiniLM& lm, const AblationFlags& flags) {
  if (flags.no_alignment || flags.oracle_words) {
    TrainLog skipped;
    skipped.stage = stage_name(Stage::kAlign);
    return skipped;
  }
  return stage1_align(brain, lm, ws.vocab, ws.train, ws.val, seeded(ws.config.stage1, ws.seed, kStage1Salt),
                      encode_options(flags));
}

TrainLog run_stage2(const Workspace& ws, const BrainEncoder& brain, MiniLM& lm, const AblationFlags& flags) {
  if (flags.no_lm_finetune) {
    TrainLog skipped;
    skipped.stage = stage_name(Stage::kFinetune);
    return skipped;
  }
  const auto train = stage2_examples(ws, brain, lm, flags, ws.train);
  const auto val = stage2_examples(ws, brain, lm, flags, ws.val);
  return stage2_finetune(lm, ws.vocab, train, val, seeded(ws.config.stage2, ws.seed, kStage2Salt));
}

std::vector<DecodedRow> decode_records(const Workspace& ws, const BrainEncoder& brain, const MiniLM& lm,
                                       const AblationFlags& flags, data::Split which) {
  const auto& recs = ws.records(which);
  const auto examples = stage2_examples(ws, brain, lm, flags, recs);
  std::vector<DecodedRow> rows;
  rows.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto result = lm.greedy_decode(examples[i].encoder_input, ws.config.decode_max_len, &ws.vocab);
    rows.push_back({recs[i].subject, recs[i].sentence_id, recs[i].text, result.text});
  }
  return rows;
}

void write_decoded_tsv(const fs::path& path, const std::vector<DecodedRow>& rows) {
  std::ostringstream out;
  out << "subject\tsentence_id\treference\tdecoded\n";
  for (const auto& r : rows) {
    out << tsv_clean(r.subject) << '\t' << tsv_clean(r.sentence_id) << '\t' << tsv_clean(r.reference) << '\t'
        << tsv_clean(r.decoded) << '\n';
  }
  write_text(path, out.str());
}

std::vector<DecodedRow> read_decoded_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<DecodedRow> rows;
  std::string line;
  std::getline(in, line);
  if (line.rfind("subject\tsentence_id\treference\tdecoded", 0) != 0) throw FormatError(path.string() + ": bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      cols.push_back(line.substr(start, tab - start));
    }
    cols.push_back(line.substr(start));
    if (cols.size() != 4) throw FormatError(path.string() + ": expected 4 columns, got " + std::to_string(cols.size()));
    rows.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  return rows;
}

EmbeddingProvider make_provider(const RunConfig& config, const MiniLM& scorer, const Vocabulary& vocab) {
  if (config.bertscore_provider == "identity") return identity_provider();
  return lm_provider(scorer, vocab);
}

MetricsReport evaluate_rows(const std::vector<DecodedRow>& rows, const EmbeddingProvider& provider) {
  std::vector<std::string> cands, refs, subjects;
  for (const auto& r : rows) {
    cands.push_back(r.decoded);
    refs.push_back(r.reference);
    subjects.push_back(r.subject);
  }
  return build_report(cands, refs, subjects, provider);
}

PipelineResult run_pipeline(const RunConfig& config, const fs::path& out_dir) {
  const Workspace ws = prepare_workspace(config, config.seeds.front());
  const Pretrained pre = pretrain_shared(ws, out_dir);
  const auto provider = make_provider(config, *pre.scorer, ws.vocab);
  PipelineResult result;
  result.run_dir = out_dir;
  result.variants.push_back(run_variant(ws, pre.values, config.ablation, out_dir, provider));
  write_json(out_dir / "timing.json", {{"seconds", result.variants.front().seconds}});
  return result;
}

PipelineResult run_ablation(const RunConfig& config, const fs::path& out_dir) {
  RunConfig base_config = config;
  base_config.ablation = {};
  const Workspace ws = prepare_workspace(base_config, config.seeds.front());
  const Pretrained pre = pretrain_shared(ws, out_dir);
  const auto provider = make_provider(config, *pre.scorer, ws.vocab);
  PipelineResult result;
  result.run_dir = out_dir;
  result.variants.push_back(run_variant(ws, pre.values, AblationFlags{}, out_dir / "base", provider));
  for (const auto& [name, flags] : ablation_variants()) {
    result.variants.push_back(run_variant(ws, pre.values, flags, out_dir / name, provider));
  }

  const auto base = headline(result.variants.front().report.overall);
  nlohmann::json variants = nlohmann::json::object(), deltas = nlohmann::json::object(), order = nlohmann::json::array();
  nlohmann::json timing = nlohmann::json::object();
  std::ostringstream table;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %7s %7s %7s %7s %7s %7s %9s\n", "variant", "BLEU-1", "BLEU-2", "BLEU-3",
                "BLEU-4", "R1-F", "BS-F", "dBLEU-1");
  table << line;
  for (const auto& v : result.variants) {
    const auto h = headline(v.report.overall);
    nlohmann::json d = nlohmann::json::object();
    for (const auto& [k, val] : h.items()) d[k] = val.get<double>() - base.at(k).get<double>();
    order.push_back(v.name);
    variants[v.name] = v.report.to_json();
    deltas[v.name] = d;
    timing[v.name] = v.seconds;
    std::snprintf(line, sizeof line, "%-18s %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %+9.2f\n", v.name.c_str(),
                  100 * h["bleu1"].get<double>(), 100 * h["bleu2"].get<double>(), 100 * h["bleu3"].get<double>(),
                  100 * h["bleu4"].get<double>(), 100 * h["rouge1_f"].get<double>(),
                  100 * h["bertscore_f"].get<double>(), 100 * d["bleu1"].get<double>());
    table << line;
  }
  result.comparison = {{"order", order}, {"variants", variants}, {"deltas", deltas}};
  write_json(out_dir / "comparison.json", result.comparison);
  write_text(out_dir / "comparison.txt", table.str());
  write_json(out_dir / "timing.json", timing);
  return result;
}

std::size_t export_embeddings(const BrainEncoder& brain, const Workspace& ws, data::Split which,
                              const fs::path& out_path) {
  const auto& recs = ws.records(which);
  std::ostringstream out;
  out << "subject,sentence_id";
  for (int d = 0; d < brain.config().out_dim; ++d) out << ",z" << d;
  out << '\n';
  char buf[32];
  for (const auto& r : recs) {
    const Matrix z = brain.encode_value(r, EncodeOptions{});
    const RowVector mean = z.colwise().mean();
    out << csv_field(r.subject) << ',' << csv_field(r.sentence_id);
    for (Eigen::Index d = 0; d < mean.size(); ++d) {
      std::snprintf(buf, sizeof buf, ",%.9g", mean(d));
      out << buf;
    }
    out << '\n';
  }
  write_text(out_path, out.str());
  return recs.size();
}

nlohmann::json split_report(const Workspace& ws) {
  nlohmann::json tasks = nlohmann::json::object();
  const auto count = [&](const std::vector<data::SentenceRecord>& recs, const char* name) {
    std::map<std::string, std::set<std::string>> unique;
    std::map<std::string, std::size_t> records;
    for (const auto& r : recs) {
      unique[r.task].insert(data::sentence_key(r.text));
      ++records[r.task];
    }
    for (const auto& [task, n] : records) {
      tasks[task]["records"][name] = n;
      tasks[task]["unique_sentences"][name] = unique[task].size();
    }
  };
  count(ws.train, "train");
  count(ws.val, "val");
  count(ws.test, "test");
  return {{"seed", ws.config.split_seed},
          {"ratios", {{"train", ws.config.split.train}, {"val", ws.config.split.val}, {"test", ws.config.split.test}}},
          {"tasks", tasks}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace e2t
