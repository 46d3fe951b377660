// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "eeg2text/brain_encoder.hpp"
#include "eeg2text/errors.hpp"
#include "eeg2text/trainer.hpp"
#include "support.hpp"

namespace e2t {
namespace {

using testing::make_record;
using testing::micro_brain_config;

TEST(BrainEncoder, OutputShapeIsWordsByOutDim) {
  std::mt19937_64 rng(1);
  BrainEncoder brain(BrainConfig::desk(8), {"A"}, 1);
  const auto rec = make_record("s", "A", "one two three four five", 8, rng, 6);
  const Matrix z = brain.encode_value(rec);
  EXPECT_EQ(z.rows(), 5);
  EXPECT_EQ(z.cols(), 64);
  EXPECT_TRUE(z.allFinite());
}

TEST(BrainEncoder, UnitSubjectVectorsEqualNoSubjectLayer) {
  std::mt19937_64 rng(2);
  BrainEncoder brain(micro_brain_config(), {"A", "B"}, 2);
  auto a = make_record("s", "A", "x y z", 4, rng);
  auto b = a;
  b.subject = "B";
  EncodeOptions without;
  without.use_subject_layer = false;
  const Matrix za = brain.encode_value(a);
  EXPECT_EQ(za, brain.encode_value(b));
  EXPECT_EQ(za, brain.encode_value(a, without));
}

TEST(BrainEncoder, SubjectLayerScalesPerChannel) {
  BrainEncoder brain(micro_brain_config(), {"A"}, 3);
  Rng rng(3);
  const ad::Var x = ad::Var::constant(nn::normal_matrix(3, 4, 1.0, rng));
  EXPECT_EQ(brain.apply_subject_layer(x, "A").value(), x.value());
  brain.set_subject_vector("A", RowVector::Constant(4, 2.0));
  EXPECT_EQ(brain.apply_subject_layer(x, "A").value(), (2.0 * x.value()).eval());
  RowVector r(4);
  r << 1.0, 0.5, 3.0, 1.0;
  brain.set_subject_vector("A", r);
  const Matrix y = brain.apply_subject_layer(x, "A").value();
  for (Eigen::Index m = 0; m < 3; ++m) {
    for (Eigen::Index d = 0; d < 4; ++d) EXPECT_DOUBLE_EQ(y(m, d), x.value()(m, d) * r(d));
  }
}

TEST(BrainEncoder, DistinctSubjectVectorsChangeOutput) {
  std::mt19937_64 rng(4);
  BrainEncoder brain(micro_brain_config(), {"A", "B"}, 4);
  brain.set_subject_vector("B", RowVector::Constant(4, 1.5));
  auto a = make_record("s", "A", "x y", 4, rng);
  auto b = a;
  b.subject = "B";
  EXPECT_NE(brain.encode_value(a), brain.encode_value(b));
}

TEST(BrainEncoder, UnknownSubjectIsSubjectErrorUnlessFallback) {
  std::mt19937_64 rng(5);
  BrainEncoder brain(micro_brain_config(), {"A", "B"}, 5);
  RowVector r(4);
  r << 1.0, 2.0, 3.0, 4.0;
  brain.set_subject_vector("B", r);
  const auto rec = make_record("s", "Z", "x y", 4, rng);
  EXPECT_THROW(brain.encode_value(rec), SubjectError);
  EncodeOptions fb;
  fb.mean_subject_fallback = true;
  const Matrix z = brain.encode_value(rec, fb);
  // The fallback equals a known subject holding the mean vector.
  brain.set_subject_vector("A", (RowVector::Ones(4) + r) / 2.0);
  auto as_a = rec;
  as_a.subject = "A";
  EXPECT_LT((z - brain.encode_value(as_a)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BrainEncoder, LaterWordsDoNotAffectEarlierRows) {
  std::mt19937_64 rng(6);
  BrainEncoder brain(micro_brain_config(), {"A"}, 6);
  const auto rec = make_record("s", "A", "x y z", 4, rng);
  const Matrix before = brain.encode_value(rec);
  for (int j = 0; j < 3; ++j) {
    auto changed = rec;
    changed.words[static_cast<std::size_t>(j)].eeg = testing::random_segment(4, 5, rng);
    const Matrix after = brain.encode_value(changed);
    EXPECT_EQ(after.topRows(j), before.topRows(j)) << "perturbed word " << j;
    EXPECT_NE(after.row(j), before.row(j));
  }
}

TEST(BrainEncoder, AttentionRowsAreCausalDistributions) {
  BrainEncoder brain(BrainConfig::desk(8), {"A"}, 7);
  Rng rng(7);
  const ad::Var tokens = ad::Var::constant(nn::normal_matrix(5, 64, 1.0, rng));
  std::vector<std::vector<Matrix>> attn;
  brain.bte_forward(tokens, {}, &attn);
  ASSERT_EQ(attn.size(), 2u);
  for (const auto& layer : attn) {
    ASSERT_EQ(layer.size(), 4u);
    for (const auto& p : layer) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
        for (Eigen::Index j = i + 1; j < p.cols(); ++j) EXPECT_EQ(p(i, j), 0.0);
      }
    }
  }
}

TEST(BrainEncoder, SingleTokenAttentionIsOne) {
  BrainEncoder brain(micro_brain_config(), {"A"}, 8);
  Rng rng(8);
  std::vector<std::vector<Matrix>> attn;
  brain.bte_forward(ad::Var::constant(nn::normal_matrix(1, 8, 1.0, rng)), {}, &attn);
  for (const auto& layer : attn) {
    for (const auto& p : layer) EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  }
}

TEST(BrainEncoder, TooManyWordsIsLengthError) {
  std::mt19937_64 rng(9);
  BrainEncoder brain(micro_brain_config(), {"A"}, 9);
  EXPECT_THROW(brain.encode_value(make_record("s", "A", "a b c d e", 4, rng)), LengthError);
  EXPECT_THROW(brain.bte_forward(ad::Var::constant(Matrix::Zero(5, 8)), {}), LengthError);
}

TEST(BrainEncoder, ZeroDropoutMakesTrainModeIrrelevant) {
  std::mt19937_64 rng(10);
  BrainEncoder brain(micro_brain_config(), {"A"}, 10);
  const auto rec = make_record("s", "A", "x y z", 4, rng);
  Rng drop(1);
  EncodeOptions train;
  train.train_mode = true;
  ad::NoGradGuard no_grad;
  EXPECT_EQ(brain.encode(rec, train, &drop).value(), brain.encode_value(rec));
}

TEST(BrainEncoder, DropoutOnlyActsInTrainMode) {
  std::mt19937_64 rng(11);
  auto cfg = micro_brain_config();
  cfg.dropout_rate = 0.5;
  BrainEncoder brain(cfg, {"A"}, 11);
  const auto rec = make_record("s", "A", "x y z", 4, rng);
  Rng drop(2);
  EncodeOptions train;
  train.train_mode = true;
  ad::NoGradGuard no_grad;
  EXPECT_NE(brain.encode(rec, train, &drop).value(), brain.encode_value(rec));
  EXPECT_EQ(brain.encode_value(rec), brain.encode_value(rec));
}

TEST(BrainEncoder, WrongChannelCountIsShapeError) {
  std::mt19937_64 rng(12);
  BrainEncoder brain(micro_brain_config(), {"A"}, 12);
  EXPECT_THROW(brain.encode_value(make_record("s", "A", "x", 3, rng)), ShapeError);
}

TEST(BrainEncoderInit, SameSeedSameParameters) {
  BrainEncoder a(BrainConfig::desk(8), {"A", "B"}, 42);
  BrainEncoder b(BrainConfig::desk(8), {"A", "B"}, 42);
  EXPECT_EQ(a.params().values(), b.params().values());
  BrainEncoder c(BrainConfig::desk(8), {"A", "B"}, 43);
  EXPECT_NE(a.params().values(), c.params().values());
}

TEST(BrainEncoderInit, SubjectVectorsStartAtOne) {
  BrainEncoder brain(BrainConfig::desk(8), {"A", "B", "C"}, 1);
  for (const auto& s : brain.subjects()) EXPECT_EQ(brain.subject_vector(s), RowVector::Ones(16));
}

TEST(BrainEncoderInit, PositionRowsDifferAndAreSmall) {
  BrainEncoder brain(BrainConfig::desk(8), {"A"}, 1);
  const Matrix& p = brain.params().get("brain.positions").value();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.rows(); ++j) EXPECT_NE(p.row(i), p.row(j));
  }
  const double var = p.array().square().mean();
  EXPECT_NEAR(std::sqrt(var), 0.02, 0.005);
}

TEST(BrainEncoderInit, LayerNormStartsAsIdentityAffine) {
  BrainEncoder brain(BrainConfig::desk(8), {"A"}, 1);
  for (const auto& e : brain.params().entries()) {
    if (e.name.ends_with(".gamma")) EXPECT_TRUE((e.var.value().array() == 1.0).all()) << e.name;
    if (e.name.ends_with(".beta")) EXPECT_TRUE((e.var.value().array() == 0.0).all()) << e.name;
  }
}

TEST(BrainEncoderConfig, HeadsMustDivideModelDim) {
  auto cfg = BrainConfig::desk(8);
  cfg.bte_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BrainEncoderConfig, PaperPresetValues) {
  const auto p = BrainConfig::paper(104);
  EXPECT_EQ(p.gru_hidden, 512);
  EXPECT_EQ(p.fc_dim, 1024);
  EXPECT_EQ(p.conv_channels, 64);
  EXPECT_EQ(p.bte_layers, 12);
  EXPECT_EQ(p.bte_heads, 8);
  EXPECT_EQ(p.bte_ffn_dim, 4096);
  EXPECT_EQ(p.out_dim, 1024);
}

TEST(BrainEncoder, EncodeGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  BrainEncoder brain(micro_brain_config(), {"A", "B"}, 13);
  brain.set_subject_vector("A", RowVector::Constant(4, 1.3));
  const auto rec = make_record("s", "A", "x y z", 4, rng);
  Rng w_rng(1);
  const Matrix w = nn::normal_matrix(3, 8, 1.0, w_rng);
  const auto report = finite_diff_check(
      [&] { return ad::sum(ad::mul(brain.encode(rec, {}), ad::Var::constant(w))); }, brain.params(), 1e-6, 1e-5);
  EXPECT_TRUE(report.passed) << report.worst.name << "[" << report.worst.index << "] " << report.max_error;
}

}  // namespace
}  // namespace e2t
