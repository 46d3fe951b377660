// SPDX-License-Identifier: Apache-2.0
//
// e2t: command-line front end for corpus handling, the training stages,
// decoding, evaluation, ablations, embedding export and refinement.
//
// Exit codes: 0 success, 1 runtime error, 2 missing input (corpus, config,
// checkpoint) or bad command line.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "eeg2text/checkpoint.hpp"
#include "eeg2text/config.hpp"
#include "eeg2text/dataset.hpp"
#include "eeg2text/errors.hpp"
#include "eeg2text/harness.hpp"

namespace fs = std::filesystem;
using namespace e2t;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string out = "e2t_run";
  std::string corpus;
};

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingInput(std::string(what) + " not found: " + p.string());
}

RunConfig resolve_config(const Globals& g) {
  RunConfig c;
  if (!g.config_path.empty()) {
    require_file(g.config_path, "config");
    c = load_run_config(g.config_path);
  } else {
    c = preset_run_config(g.preset.empty() ? "desk" : g.preset);
  }
  if (!g.preset.empty() && !g.config_path.empty() && g.preset != c.preset) {
    // An explicit --preset replaces the architecture and plans but keeps data settings.
    RunConfig p = preset_run_config(g.preset);
    p.corpus_dir = c.corpus_dir;
    p.synth = c.synth;
    p.seeds = c.seeds;
    p.split = c.split;
    p.split_seed = c.split_seed;
    p.ablation = c.ablation;
    p.refinement = c.refinement;
    c = p;
  }
  if (g.seed) c.seeds = {*g.seed};
  if (!g.corpus.empty()) c.corpus_dir = g.corpus;
  if (!c.corpus_dir.empty() && !fs::is_directory(c.corpus_dir)) {
    throw MissingInput("corpus directory not found: " + c.corpus_dir);
  }
  c.validate();
  return c;
}

fs::path ckpt(const Globals& g, const std::string& override_path, const char* name) {
  const fs::path p = override_path.empty() ? fs::path(g.out) / "checkpoints" / name : fs::path(override_path);
  require_file(p, "checkpoint");
  return p;
}

void print_report(const MetricsReport& report, const std::string& label) { std::cout << report.to_table(label); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-to-text decoding: corpus tools, training stages, evaluation and ablations"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Run seed (replaces the config's seed list)");
  app.add_option("--preset", g.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--out", g.out, "Output / run directory")->capture_default_str();
  app.add_option("--corpus", g.corpus, "Corpus directory (overrides the config)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  int subjects = -1, sentences = -1, channels = -1;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--subjects", subjects);
  synth->add_option("--sentences", sentences);
  synth->add_option("--channels", channels);
  synth->add_option("--synth-seed", synth_seed);

  auto* validate = app.add_subcommand("convert-validate", "Validate a converted corpus directory");
  std::string validate_dir;
  validate->add_option("dir", validate_dir, "Corpus directory")->required();

  auto* split = app.add_subcommand("split", "Compute the sentence-level split and write split.json");
  auto* pretrain = app.add_subcommand("pretrain", "Denoising pre-training of the language model");

  auto* stage1 = app.add_subcommand("stage1", "Align the brain encoder to the LM embeddings");
  std::string lm_path, brain_path;
  stage1->add_option("--lm", lm_path, "Pre-trained LM checkpoint");

  auto* stage2 = app.add_subcommand("stage2", "Fine-tune the LM on frozen brain encodings");
  stage2->add_option("--lm", lm_path, "Pre-trained LM checkpoint");
  stage2->add_option("--brain", brain_path, "Stage-1 brain checkpoint");

  auto* decode = app.add_subcommand("decode", "Greedy-decode a split");
  std::string split_name_opt = "test";
  decode->add_option("--lm", lm_path, "Fine-tuned LM checkpoint");
  decode->add_option("--brain", brain_path, "Brain checkpoint");
  decode->add_option("--split", split_name_opt)->check(CLI::IsMember({"train", "val", "test"}));

  auto* evaluate = app.add_subcommand("evaluate", "Score decoded.tsv");
  std::string decoded_path, scorer_path;
  evaluate->add_option("--decoded", decoded_path, "decoded.tsv (default <out>/decoded.tsv)");
  evaluate->add_option("--scorer", scorer_path, "LM checkpoint used as the BERTScore provider");

  auto* ablate = app.add_subcommand("ablate", "Base run plus the five ablation variants");

  auto* exporter = app.add_subcommand("export-embeddings", "Write mean-pooled encoder outputs as CSV");
  std::string csv_path;
  exporter->add_option("--brain", brain_path, "Brain checkpoint");
  exporter->add_option("--split", split_name_opt)->check(CLI::IsMember({"train", "val", "test"}));
  exporter->add_option("--file", csv_path, "Output CSV (default <out>/embeddings_<split>.csv)");

  auto* refine = app.add_subcommand("refine", "Refine decoded sentences through a chat-completions endpoint");
  refine->add_option("--decoded", decoded_path, "decoded.tsv (default <out>/decoded.tsv)");
  refine->add_option("--scorer", scorer_path, "LM checkpoint used as the BERTScore provider");

  auto* run = app.add_subcommand("run", "End-to-end: pretrain, stage1, stage2, decode, evaluate");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out(g.out);
    if (synth->parsed()) {
      RunConfig c = resolve_config(g);
      if (subjects > 0) c.synth.num_subjects = subjects;
      if (sentences > 0) c.synth.num_sentences = sentences;
      if (channels > 0) c.synth.channels = channels;
      if (synth_seed) c.synth.seed = *synth_seed;
      const auto corpus = data::synthesize_corpus(c.synth);
      data::write_corpus(corpus.manifest, corpus.records, out);
      std::cout << "wrote " << corpus.records.size() << " records to " << out.string() << "\n";
    } else if (validate->parsed()) {
      if (!fs::is_directory(validate_dir)) throw MissingInput("corpus directory not found: " + validate_dir);
      const auto corpus = data::load_corpus(validate_dir);
      std::set<std::pair<std::string, std::string>> unique;
      std::size_t words = 0;
      for (const auto& r : corpus.records) {
        unique.emplace(r.task, data::sentence_key(r.text));
        words += r.words.size();
      }
      std::cout << "ok: " << corpus.records.size() << " records, " << unique.size() << " unique sentences, "
                << corpus.manifest.subjects.size() << " subjects, " << corpus.manifest.channel_names.size()
                << " channels, " << words << " words\n";
    } else if (split->parsed()) {
      const auto ws = prepare_workspace(resolve_config(g), 0);
      const auto report = split_report(ws);
      write_text(out / "split.json", report.dump(2) + "\n");
      std::cout << report.dump(2) << "\n";
    } else if (pretrain->parsed()) {
      const RunConfig c = resolve_config(g);
      const auto ws = prepare_workspace(c, c.seeds.front());
      auto lm = make_lm(ws);
      const auto log = run_pretrain(ws, *lm);
      ws.vocab.save(out / "vocab.txt");
      log.write_jsonl(out / "pretrain.jsonl");
      save_lm(out / "checkpoints" / "lm_pretrained.e2tp", *lm);
      std::cout << log.summary().dump(2) << "\n";
    } else if (stage1->parsed()) {
      const RunConfig c = resolve_config(g);
      const auto ws = prepare_workspace(c, c.seeds.front());
      const auto lm = load_lm(ckpt(g, lm_path, "lm_pretrained.e2tp"));
      auto brain = make_brain(ws);
      const auto log = run_stage1(ws, *brain, *lm, c.ablation);
      log.write_jsonl(out / "stage1.jsonl");
      save_brain(out / "checkpoints" / "brain.e2tp", *brain);
      std::cout << log.summary().dump(2) << "\n";
    } else if (stage2->parsed()) {
      const RunConfig c = resolve_config(g);
      const auto ws = prepare_workspace(c, c.seeds.front());
      auto lm = load_lm(ckpt(g, lm_path, "lm_pretrained.e2tp"));
      const auto brain = load_brain(ckpt(g, brain_path, "brain.e2tp"));
      const auto log = run_stage2(ws, *brain, *lm, c.ablation);
      log.write_jsonl(out / "stage2.jsonl");
      save_lm(out / "checkpoints" / "lm.e2tp", *lm);
      std::cout << log.summary().dump(2) << "\n";
    } else if (decode->parsed()) {
      const RunConfig c = resolve_config(g);
      const auto ws = prepare_workspace(c, c.seeds.front());
      const auto lm = load_lm(ckpt(g, lm_path, "lm.e2tp"));
      const auto brain = load_brain(ckpt(g, brain_path, "brain.e2tp"));
      const auto rows = decode_records(ws, *brain, *lm, c.ablation, data::parse_split(split_name_opt));
      write_decoded_tsv(out / "decoded.tsv", rows);
      std::cout << "decoded " << rows.size() << " records to " << (out / "decoded.tsv").string() << "\n";
    } else if (evaluate->parsed() || refine->parsed()) {
      const RunConfig c = resolve_config(g);
      const fs::path in = decoded_path.empty() ? out / "decoded.tsv" : fs::path(decoded_path);
      require_file(in, "decoded file");
      auto rows = read_decoded_tsv(in);
      std::unique_ptr<MiniLM> scorer;
      Vocabulary vocab;
      if (c.bertscore_provider == "lm") {
        scorer = load_lm(ckpt(g, scorer_path, "lm_pretrained.e2tp"));
        const fs::path vocab_path = out / "vocab.txt";
        require_file(vocab_path, "vocabulary");
        vocab = Vocabulary::load(vocab_path);
      }
      const EmbeddingProvider provider = scorer ? lm_provider(*scorer, vocab) : identity_provider();
      std::string stem = "metrics";
      if (refine->parsed()) {
        RefineConfig rc = c.refinement;
        rc.enabled = true;
        std::vector<std::string> decoded;
        for (const auto& r : rows) decoded.push_back(r.decoded);
        const auto outcomes = refine_sentences(decoded, rc);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].decoded = outcomes[i].refined;
        write_decoded_tsv(out / "refined.tsv", rows);
        stem = "metrics_refined";
      }
      const auto report = evaluate_rows(rows, provider);
      write_text(out / (stem + ".json"), report.to_json().dump(2) + "\n");
      write_text(out / (stem + ".txt"), report.to_table(stem));
      print_report(report, stem);
    } else if (ablate->parsed()) {
      const auto result = run_ablation(resolve_config(g), out);
      std::cout << result.comparison.dump(2).size() << " bytes of comparison written to "
                << (out / "comparison.json").string() << "\n";
      for (const auto& v : result.variants) print_report(v.report, v.name);
    } else if (exporter->parsed()) {
      const RunConfig c = resolve_config(g);
      const auto ws = prepare_workspace(c, c.seeds.front());
      const auto brain = load_brain(ckpt(g, brain_path, "brain.e2tp"));
      const fs::path file = csv_path.empty() ? out / ("embeddings_" + split_name_opt + ".csv") : fs::path(csv_path);
      const auto n = export_embeddings(*brain, ws, data::parse_split(split_name_opt), file);
      std::cout << "wrote " << n << " rows to " << file.string() << "\n";
    } else if (run->parsed()) {
      const auto result = run_pipeline(resolve_config(g), out);
      for (const auto& v : result.variants) print_report(v.report, v.name);
    }
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
