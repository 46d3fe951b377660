// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "eeg2text/checkpoint.hpp"
#include "eeg2text/errors.hpp"
#include "eeg2text/metrics.hpp"

namespace e2t {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDULL;
  x ^= x >> 33;
  return x;
}

// Forward + backward of one item with its loss pre-multiplied by `weight`;
// returns the unweighted loss.
using AccumulateFn = std::function<double(std::size_t item, double weight, Rng& rng)>;
// Validation value of the current parameters.
using ValidateFn = std::function<double()>;

TrainLog run_training(nn::ParameterSet& params, std::size_t items, const TrainPlan& plan, const AccumulateFn& accumulate,
                      const ValidateFn& validate, bool higher_is_better) {
  TrainLog log;
  log.stage = stage_name(plan.stage);
  log.val_metric = validate ? val_metric_name(plan.val_metric) : "train_loss";
  if (plan.epochs == 0 || items == 0) return log;

  const auto batch = static_cast<std::size_t>(plan.batch_size);
  const long steps_per_epoch = static_cast<long>((items + batch - 1) / batch);
  const long cycle = plan.cycle_steps > 0 ? plan.cycle_steps : std::max(2L, 2 * steps_per_epoch);

  std::vector<std::size_t> order(items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(mix_seed(plan.seed, 0x5eed));
  std::map<std::string, Matrix> best_values;
  long step = 0;
  params.zero_grad();
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < items; start += batch) {
      const std::size_t end = std::min(items, start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Rng rng(mix_seed(plan.seed, static_cast<std::uint64_t>(step) + 1, order[i]));
        batch_loss += accumulate(order[i], weight, rng) * weight;
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericsError(std::string(stage_name(plan.stage)) + ": non-finite loss at step " + std::to_string(step));
      }
      const double lr = cyclical_lr(step, plan.lr_min, plan.lr_max, cycle);
      sgd_step(params, lr, plan.clip_norm);
      log.steps.push_back({step, epoch, lr, batch_loss});
      epoch_loss += batch_loss * static_cast<double>(end - start);
      ++step;
    }
    epoch_loss /= static_cast<double>(items);
    const double value = validate ? validate() : epoch_loss;
    log.epochs.push_back({epoch, epoch_loss, value});
    const bool better = log.best_epoch < 0 || (higher_is_better ? value > log.best_value : value < log.best_value);
    if (better) {
      log.best_epoch = epoch;
      log.best_value = value;
      best_values = params.values();
      if (!plan.checkpoint_dir.empty()) {
        const auto path = std::filesystem::path(plan.checkpoint_dir) / (std::string(stage_name(plan.stage)) + "_best.e2tp");
        save_checkpoint(path, nlohmann::json{{"stage", stage_name(plan.stage)}, {"epoch", epoch}}, params);
        log.best_checkpoint = path.string();
      }
    }
  }
  params.load_values(best_values);
  params.zero_grad();
  return log;
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kAlign: return "stage1";
    case Stage::kFinetune: return "stage2";
  }
  return "?";
}

const char* val_metric_name(ValMetric metric) {
  switch (metric) {
    case ValMetric::kMse: return "mse";
    case ValMetric::kCe: return "ce";
    case ValMetric::kBleu1: return "bleu1";
  }
  return "?";
}

void TrainPlan::validate() const {
  if (lr_min < 0.0 || lr_min > lr_max) throw ConfigError("train plan: need 0 <= lr_min <= lr_max");
  if (epochs < 0) throw ConfigError("train plan: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train plan: batch_size must be >= 1");
  if (cycle_steps != 0 && cycle_steps < 2) throw ConfigError("train plan: cycle_steps must be >= 2");
  if (mask_prob < 0.0 || mask_prob > 1.0) throw ConfigError("train plan: mask_prob must be in [0, 1]");
  if (clip_norm < 0.0) throw ConfigError("train plan: clip_norm must be >= 0");
}

TrainPlan TrainPlan::with_forced_freeze() const {
  TrainPlan p = *this;
  if (stage == Stage::kAlign) p.freeze.insert(FreezeGroup::kLm);
  if (stage == Stage::kFinetune) p.freeze.insert(FreezeGroup::kBrain);
  return p;
}

double cyclical_lr(long step, double lr_min, double lr_max, long cycle_steps) {
  if (cycle_steps < 2) throw ConfigError("cyclical_lr: cycle_steps must be >= 2");
  if (step < 0) throw ConfigError("cyclical_lr: negative step");
  const double half = static_cast<double>(cycle_steps) / 2.0;
  const double pos = static_cast<double>(step % cycle_steps);
  const double frac = pos <= half ? pos / half : (static_cast<double>(cycle_steps) - pos) / half;
  return std::clamp(lr_min + (lr_max - lr_min) * frac, lr_min, lr_max);
}

void TrainLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : steps) {
    out << nlohmann::json{{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}}.dump() << '\n';
  }
}

nlohmann::json TrainLog::summary() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val", e.val_value}});
  }
  return {{"stage", stage},
          {"val_metric", val_metric},
          {"steps", steps.size()},
          {"epochs", epochs_json},
          {"best_epoch", best_epoch},
          {"best_value", best_value},
          {"best_checkpoint", best_checkpoint}};
}

void sgd_step(nn::ParameterSet& params, double lr, double clip_norm) {
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& e : params.entries()) {
      if (e.var.requires_grad() && e.var.grad().size() != 0) sq += e.var.grad().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  for (const auto& e : params.entries()) {
    auto var = e.var;
    if (var.requires_grad() && var.grad().size() != 0) var.mutable_value() -= (lr * scale) * var.grad();
    var.zero_grad();
  }
}

std::vector<int> alignment_counts(const data::SentenceRecord& record) {
  std::vector<int> counts;
  counts.reserve(record.words.size());
  std::size_t total = 0;
  for (const auto& w : record.words) {
    const auto n = tokenize_words(w.text).size();
    if (n == 0) throw AlignError("record " + record.sentence_id + ": word '" + w.text + "' yields no tokens");
    counts.push_back(static_cast<int>(n));
    total += n;
  }
  const auto expected = tokenize_words(record.text).size();
  if (total != expected) {
    throw AlignError("record " + record.sentence_id + " (subject " + record.subject + "): words give " +
                     std::to_string(total) + " tokens, text gives " + std::to_string(expected));
  }
  return counts;
}

ad::Var alignment_loss(const BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                       const data::SentenceRecord& record, const EncodeOptions& options, Rng* rng) {
  const auto counts = alignment_counts(record);
  Matrix target;
  {
    ad::NoGradGuard no_grad;
    target = lm.embed_tokens(vocab.encode(record.text)).value();
  }
  const ad::Var z = brain.encode(record, options, rng);
  return ad::mse_loss(ad::repeat_rows(z, counts), ad::Var::constant(std::move(target)));
}

double mean_alignment_mse(const BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                          std::span<const data::SentenceRecord> records, const EncodeOptions& options) {
  if (records.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  EncodeOptions eval = options;
  eval.train_mode = false;
  double total = 0.0;
  for (const auto& r : records) total += alignment_loss(brain, lm, vocab, r, eval).item();
  return total / static_cast<double>(records.size());
}

TrainLog pretrain_lm(MiniLM& lm, const Vocabulary& vocab, std::span<const std::string> texts, const TrainPlan& plan) {
  plan.validate();
  std::vector<std::vector<int>> token_ids;
  for (const auto& t : texts) {
    auto ids = vocab.encode(t);
    if (!ids.empty()) token_ids.push_back(std::move(ids));
  }
  if (token_ids.empty()) throw DataError("pre-training corpus is empty");
  TrainPlan p = plan;
  p.stage = Stage::kPretrain;
  lm.params().set_requires_grad(true);
  if (p.freeze.contains(FreezeGroup::kLmEmbeddings)) lm.params().set_requires_grad(MiniLM::kEmbeddingName, false);

  const auto accumulate = [&](std::size_t item, double weight, Rng& rng) {
    const auto& ids = token_ids[item];
    std::bernoulli_distribution mask(p.mask_prob);
    std::vector<int> noisy = ids;
    for (auto& id : noisy) {
      if (mask(rng)) id = Vocabulary::kUnk;
    }
    std::vector<int> targets = ids;
    targets.push_back(Vocabulary::kEos);
    const nn::ForwardContext ctx{true, lm.config().dropout_rate, &rng};
    const ad::Var logits = lm.forward_teacher_forced(lm.embed_tokens(noisy), targets, ctx);
    const std::vector<double> weights(targets.size(), 1.0);
    const ad::Var loss = ad::cross_entropy(logits, targets, weights);
    ad::backward(ad::scale(loss, weight));
    return loss.item();
  };
  auto log = run_training(lm.params(), token_ids.size(), p, accumulate, nullptr, false);
  lm.params().set_requires_grad(true);
  return log;
}

TrainLog stage1_align(BrainEncoder& brain, const MiniLM& lm, const Vocabulary& vocab,
                      std::span<const data::SentenceRecord> train, std::span<const data::SentenceRecord> val,
                      const TrainPlan& plan, const EncodeOptions& options) {
  plan.validate();
  TrainPlan p = plan;
  p.stage = Stage::kAlign;
  p = p.with_forced_freeze();
  if (p.freeze.contains(FreezeGroup::kBrain)) {
    throw ConfigError("stage 1 trains the brain encoder; it cannot be frozen");
  }
  for (const auto& r : train) alignment_counts(r);
  brain.params().set_requires_grad(true);

  EncodeOptions train_opts = options;
  train_opts.train_mode = true;
  const auto accumulate = [&](std::size_t item, double weight, Rng& rng) {
    const ad::Var loss = alignment_loss(brain, lm, vocab, train[item], train_opts, &rng);
    ad::backward(ad::scale(loss, weight));
    return loss.item();
  };
  ValidateFn validate;
  if (!val.empty()) validate = [&] { return mean_alignment_mse(brain, lm, vocab, val, options); };
  return run_training(brain.params(), train.size(), p, accumulate, validate, false);
}

std::vector<Seq2SeqExample> brain_examples(const BrainEncoder& brain, const Vocabulary& vocab,
                                           std::span<const data::SentenceRecord> records,
                                           const EncodeOptions& options) {
  std::vector<Seq2SeqExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({brain.encode_value(r, options), target_ids_for(vocab, r.text)});
  return out;
}

std::vector<Seq2SeqExample> fixation_word_examples(const MiniLM& lm, const Vocabulary& vocab,
                                                   std::span<const data::SentenceRecord> records) {
  ad::NoGradGuard no_grad;
  std::vector<Seq2SeqExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::string fixated;
    for (const auto& w : r.words) fixated += (fixated.empty() ? "" : " ") + w.text;
    out.push_back({lm.embed_tokens(vocab.encode(fixated)).value(), target_ids_for(vocab, r.text)});
  }
  return out;
}

double mean_cross_entropy(const MiniLM& lm, std::span<const Seq2SeqExample> examples) {
  if (examples.empty()) return 0.0;
  ad::NoGradGuard no_grad;
  const nn::ForwardContext eval{};
  double total = 0.0;
  for (const auto& ex : examples) {
    const ad::Var logits = lm.forward_teacher_forced(ad::Var::constant(ex.encoder_input), ex.targets, eval);
    const std::vector<double> weights(ex.targets.size(), 1.0);
    total += ad::cross_entropy(logits, ex.targets, weights).item();
  }
  return total / static_cast<double>(examples.size());
}

TrainLog stage2_finetune(MiniLM& lm, const Vocabulary& vocab, std::span<const Seq2SeqExample> train,
                         std::span<const Seq2SeqExample> val, const TrainPlan& plan) {
  plan.validate();
  TrainPlan p = plan;
  p.stage = Stage::kFinetune;
  p = p.with_forced_freeze();
  lm.params().set_requires_grad(!p.freeze.contains(FreezeGroup::kLm));
  if (p.freeze.contains(FreezeGroup::kLmEmbeddings)) lm.params().set_requires_grad(MiniLM::kEmbeddingName, false);

  const auto accumulate = [&](std::size_t item, double weight, Rng& rng) {
    const auto& ex = train[item];
    const nn::ForwardContext ctx{true, lm.config().dropout_rate, &rng};
    const ad::Var logits = lm.forward_teacher_forced(ad::Var::constant(ex.encoder_input), ex.targets, ctx);
    const std::vector<double> weights(ex.targets.size(), 1.0);
    const ad::Var loss = ad::cross_entropy(logits, ex.targets, weights);
    ad::backward(ad::scale(loss, weight));
    return loss.item();
  };
  ValidateFn validate;
  bool higher_is_better = false;
  if (!val.empty()) {
    if (p.val_metric == ValMetric::kBleu1) {
      higher_is_better = true;
      validate = [&] {
        std::vector<std::string> candidates, references;
        for (const auto& ex : val) {
          const int max_len = static_cast<int>(ex.targets.size()) + 8;
          candidates.push_back(lm.greedy_decode(ex.encoder_input, max_len, &vocab).text);
          references.push_back(vocab.decode(ex.targets));
        }
        return bleu_n(candidates, references, 1);
      };
    } else {
      validate = [&] { return mean_cross_entropy(lm, val); };
    }
  }
  auto log = run_training(lm.params(), train.size(), p, accumulate, validate, higher_is_better);
  lm.params().set_requires_grad(true);
  return log;
}

TrainLog stage2_finetune(const BrainEncoder& brain, MiniLM& lm, const Vocabulary& vocab,
                         std::span<const data::SentenceRecord> train, std::span<const data::SentenceRecord> val,
                         const TrainPlan& plan, const EncodeOptions& options) {
  const auto train_ex = brain_examples(brain, vocab, train, options);
  const auto val_ex = brain_examples(brain, vocab, val, options);
  return stage2_finetune(lm, vocab, train_ex, val_ex, plan);
}

FiniteDiffReport finite_diff_check(const std::function<ad::Var()>& loss_fn, const nn::ParameterSet& params,
                                   double epsilon, double tolerance) {
  const nn::ParameterSet* sets[] = {&params};
  return finite_diff_check(loss_fn, sets, epsilon, tolerance);
}

FiniteDiffReport finite_diff_check(const std::function<ad::Var()>& loss_fn,
                                   std::span<const nn::ParameterSet* const> params, double epsilon,
                                   double tolerance) {
  std::vector<nn::ParameterSet::Entry> entries;
  for (const auto* set : params) entries.insert(entries.end(), set->entries().begin(), set->entries().end());
  std::vector<bool> previous;
  for (auto& e : entries) {
    previous.push_back(e.var.requires_grad());
    e.var.set_requires_grad(true);
    e.var.zero_grad();
  }

  const ad::Var loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericsError("finite_diff_check: non-finite loss");
  ad::backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(entries.size());
  for (const auto& e : entries) {
    analytic.push_back(e.var.grad().size() != 0 ? e.var.grad() : Matrix::Zero(e.var.rows(), e.var.cols()));
  }

  FiniteDiffReport report;
  {
    ad::NoGradGuard no_grad;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto var = entries[k].var;
      Matrix& value = var.mutable_value();
      for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double saved = value.data()[i];
        value.data()[i] = saved + epsilon;
        const double plus = loss_fn().item();
        value.data()[i] = saved - epsilon;
        const double minus = loss_fn().item();
        value.data()[i] = saved;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
          throw NumericsError("finite_diff_check: non-finite loss perturbing " + entries[k].name);
        }
        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double a = analytic[k].data()[i];
        const double abs_err = std::abs(a - numeric);
        const double denom = std::max(std::abs(a), std::abs(numeric));
        const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
        const double err = std::min(abs_err, rel_err);
        FiniteDiffEntry entry{entries[k].name, i, a, numeric, err};
        ++report.checked;
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (report.checked == 1 || err > report.max_error) {
          report.max_error = err;
          report.worst = entry;
        }
        if (err > tolerance) report.failing.push_back(std::move(entry));
      }
    }
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    entries[k].var.zero_grad();
    entries[k].var.set_requires_grad(previous[k]);
  }
  report.passed = report.checked > 0 && report.max_error <= tolerance;
  return report;
}

}  // namespace e2t
