// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "eeg2text/checkpoint.hpp"
#include "eeg2text/errors.hpp"
#include "eeg2text/harness.hpp"
#include "support.hpp"

namespace e2t {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_config() {
  RunConfig c = desk_run_config();
  c.synth.num_subjects = 2;
  c.synth.num_sentences = 10;
  c.synth.channels = 4;
  c.synth.min_steps = 3;
  c.synth.max_steps = 5;
  c.synth_pretrain_sentences = 10;
  c.brain.gru_hidden = 4;
  c.brain.fc_dim = 8;
  c.brain.conv_channels = 4;
  c.brain.bte_layers = 1;
  c.brain.bte_heads = 2;
  c.brain.bte_ffn_dim = 16;
  c.brain.model_dim = 8;
  c.brain.out_dim = 8;
  c.lm.emb_dim = 8;
  c.lm.enc_layers = 1;
  c.lm.dec_layers = 1;
  c.lm.heads = 2;
  c.lm.ffn_dim = 16;
  c.pretrain.epochs = 2;
  c.stage1.epochs = 2;
  c.stage2.epochs = 2;
  c.decode_max_len = 10;
  return c;
}

TEST(Workspace, SplitsAndNormalizesSyntheticCorpus) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  EXPECT_EQ(ws.split.unique_count(data::Split::kTrain), 8u);
  EXPECT_EQ(ws.split.unique_count(data::Split::kVal), 1u);
  EXPECT_EQ(ws.split.unique_count(data::Split::kTest), 1u);
  EXPECT_EQ(ws.train.size(), 16u);
  EXPECT_EQ(ws.brain_config().input_channels, 4);
  EXPECT_EQ(ws.lm_config().vocab_size, ws.vocab.size());
  const auto stats = data::compute_channel_stats(ws.train);
  for (double m : stats.mean) EXPECT_LT(std::abs(m), 1e-5);
}

TEST(Workspace, HeldOutSentencesStayOutOfPretraining) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  for (const auto* held : {&ws.val, &ws.test}) {
    for (const auto& r : *held) {
      EXPECT_EQ(std::count(ws.pretrain_texts.begin(), ws.pretrain_texts.end(), r.text), 0) << r.text;
    }
  }
}

TEST(Workspace, MissingCorpusIsIoErrorNamingPath) {
  RunConfig c = tiny_config();
  c.corpus_dir = "/nonexistent/e2t_corpus_dir";
  try {
    prepare_workspace(c, 0);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/e2t_corpus_dir"), std::string::npos);
  }
}

TEST(Workspace, LoadsCorpusFromDisk) {
  testing::ScratchDir dir("ws");
  const RunConfig c0 = tiny_config();
  const auto corpus = data::synthesize_corpus(c0.synth);
  data::write_corpus(corpus.manifest, corpus.records, dir.path());
  RunConfig c = c0;
  c.corpus_dir = dir.path().string();
  const Workspace from_disk = prepare_workspace(c, 0);
  const Workspace in_memory = prepare_workspace(c0, 0);
  EXPECT_EQ(from_disk.train.size(), in_memory.train.size());
  EXPECT_EQ(from_disk.split.entries(), in_memory.split.entries());
}

TEST(Harness, UnitSubjectVectorsMakeNoSubjectLayerAnIdentity) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  auto lm = make_lm(ws);
  auto brain = make_brain(ws);
  AblationFlags off;
  off.no_subject_layer = true;
  const auto a = decode_records(ws, *brain, *lm, {}, data::Split::kTest);
  const auto b = decode_records(ws, *brain, *lm, off, data::Split::kTest);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].decoded, b[i].decoded);
}

TEST(Harness, DecodedTsvRoundTrip) {
  testing::ScratchDir dir("tsv");
  const std::vector<DecodedRow> rows = {{"A", "s1", "the cat.", "a cat"}, {"B", "s2", "x", ""}};
  write_decoded_tsv(dir.path() / "d.tsv", rows);
  const auto back = read_decoded_tsv(dir.path() / "d.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].reference, "x");
  EXPECT_EQ(back[1].decoded, "");
  EXPECT_EQ(back[0].decoded, "a cat");
}

TEST(Harness, ExportEmbeddingsShapeAndDeterminism) {
  testing::ScratchDir dir("emb");
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  auto brain = make_brain(ws);
  const auto n = export_embeddings(*brain, ws, data::Split::kTrain, dir.path() / "a.csv");
  export_embeddings(*brain, ws, data::Split::kTrain, dir.path() / "b.csv");
  EXPECT_EQ(n, ws.train.size());
  EXPECT_EQ(slurp(dir.path() / "a.csv"), slurp(dir.path() / "b.csv"));
  std::ifstream in(dir.path() / "a.csv");
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("subject,sentence_id,z0,", 0), 0u);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2 + 8 - 1);
    ++rows;
  }
  EXPECT_EQ(rows, n);
}

class TinyAblation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::ScratchDir("ablate");
    result_ = new PipelineResult(run_ablation(tiny_config(), dir_->path()));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete dir_;
  }
  static fs::path variant(const std::string& name) { return dir_->path() / name; }
  static testing::ScratchDir* dir_;
  static PipelineResult* result_;
};
testing::ScratchDir* TinyAblation::dir_ = nullptr;
PipelineResult* TinyAblation::result_ = nullptr;

TEST_F(TinyAblation, EmitsBasePlusFiveVariants) {
  ASSERT_EQ(result_->variants.size(), 6u);
  EXPECT_EQ(result_->variants[0].name, "base");
  for (const auto& v : result_->variants) {
    EXPECT_TRUE(fs::exists(v.dir / "metrics.json")) << v.name;
    EXPECT_TRUE(fs::exists(v.dir / "decoded.tsv")) << v.name;
    EXPECT_TRUE(fs::exists(v.dir / "checkpoints" / "brain.e2tp")) << v.name;
  }
  EXPECT_TRUE(fs::exists(dir_->path() / "comparison.json"));
  EXPECT_TRUE(fs::exists(dir_->path() / "comparison.txt"));
  EXPECT_TRUE(fs::exists(dir_->path() / "checkpoints" / "lm_pretrained.e2tp"));
}

TEST_F(TinyAblation, NoAlignmentKeepsInitialBrain) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  testing::ScratchDir tmp("init");
  save_brain(tmp.path() / "init.e2tp", *make_brain(ws));
  EXPECT_EQ(slurp(variant("no_alignment") / "checkpoints" / "brain.e2tp"), slurp(tmp.path() / "init.e2tp"));
  EXPECT_NE(slurp(variant("base") / "checkpoints" / "brain.e2tp"), slurp(tmp.path() / "init.e2tp"));
}

TEST_F(TinyAblation, NoLmFinetuneKeepsPretrainedLm) {
  const auto pretrained = slurp(dir_->path() / "checkpoints" / "lm_pretrained.e2tp");
  EXPECT_EQ(slurp(variant("no_lm_finetune") / "checkpoints" / "lm.e2tp"), pretrained);
  EXPECT_NE(slurp(variant("base") / "checkpoints" / "lm.e2tp"), pretrained);
}

TEST_F(TinyAblation, NoBteLeavesTransformerWeightsAtInit) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  auto init = make_brain(ws);
  const auto ck = load_checkpoint(variant("no_bte") / "checkpoints" / "brain.e2tp");
  int bte = 0, moved = 0;
  for (const auto& e : init->params().entries()) {
    const Matrix want = e.var.value().cast<float>().cast<double>();
    const bool same = ck.tensors.at(e.name) == want;
    if (e.name.starts_with(BrainEncoder::kBtePrefix)) {
      EXPECT_TRUE(same) << e.name;
      ++bte;
    } else if (!same) {
      ++moved;
    }
  }
  EXPECT_GT(bte, 0);
  EXPECT_GT(moved, 0);
}

TEST_F(TinyAblation, NoSubjectLayerLeavesSubjectTableAtOnes) {
  const auto ck = load_checkpoint(variant("no_subject_layer") / "checkpoints" / "brain.e2tp");
  EXPECT_TRUE((ck.tensors.at(BrainEncoder::kSubjectTable).array() == 1.0).all());
}

TEST_F(TinyAblation, OracleDoesNotTrainTheBrain) {
  EXPECT_EQ(slurp(variant("oracle_words") / "checkpoints" / "brain.e2tp"),
            slurp(variant("no_alignment") / "checkpoints" / "brain.e2tp"));
}

TEST_F(TinyAblation, BaseMatchesStandalonePipeline) {
  testing::ScratchDir dir("pipe");
  run_pipeline(tiny_config(), dir.path());
  EXPECT_EQ(slurp(dir.path() / "metrics.json"), slurp(variant("base") / "metrics.json"));
  EXPECT_EQ(slurp(dir.path() / "decoded.tsv"), slurp(variant("base") / "decoded.tsv"));
}

TEST_F(TinyAblation, ComparisonHasDeltasForEveryVariant) {
  std::ifstream in(dir_->path() / "comparison.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("order").size(), 6u);
  for (const auto& [name, flags] : ablation_variants()) EXPECT_TRUE(j.at("deltas").contains(name)) << name;
}

TEST(Harness, RepeatedRunsGiveIdenticalReports) {
  testing::ScratchDir a("det_a"), b("det_b");
  run_pipeline(tiny_config(), a.path());
  run_pipeline(tiny_config(), b.path());
  EXPECT_EQ(slurp(a.path() / "metrics.json"), slurp(b.path() / "metrics.json"));
  EXPECT_EQ(slurp(a.path() / "checkpoints" / "brain.e2tp"), slurp(b.path() / "checkpoints" / "brain.e2tp"));
  EXPECT_EQ(slurp(a.path() / "checkpoints" / "lm.e2tp"), slurp(b.path() / "checkpoints" / "lm.e2tp"));
}

TEST(Harness, SplitReportCountsPerTask) {
  const Workspace ws = prepare_workspace(tiny_config(), 0);
  const auto j = split_report(ws);
  const auto& t = j.at("tasks").at("NR-v1");
  EXPECT_EQ(t.at("unique_sentences").at("train"), 8);
  EXPECT_EQ(t.at("unique_sentences").at("test"), 1);
  EXPECT_EQ(t.at("records").at("train"), 16);
}

}  // namespace
}  // namespace e2t
