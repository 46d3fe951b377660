// SPDX-License-Identifier: Apache-2.0
//
// Word-aligned EEG corpus: in-memory records, the on-disk corpus directory
// format (manifest.json + one "E2TB" blob per record), synthetic corpora,
// sentence-level splits and per-channel standardization.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace e2t::data {

/// C x T samples, channel-major, single precision (microvolts).
using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EEGSegment {
  SampleMatrix samples;

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index steps() const { return samples.cols(); }
};

struct Word {
  std::string text;
  EEGSegment eeg;
};

struct SentenceRecord {
  std::string sentence_id;
  std::string subject;
  std::string task;  // "NR-v1", "NR-v2" or "TSR-v1"
  std::string text;
  std::vector<Word> words;
};

struct RecordEntry {
  std::string sentence_id;
  std::string task;
  std::string subject;
  std::string text;
  std::string blob_path;  // relative to the corpus directory
  /// Fixated word list. Empty means "whitespace split of text"; only
  /// serialized when it differs from that split.
  std::vector<std::string> words;
};

struct CorpusManifest {
  std::string name = "corpus";
  int format_version = 1;
  std::vector<std::string> channel_names;
  double sampling_rate_hz = 500.0;
  std::vector<std::string> subjects;
  std::vector<RecordEntry> records;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<SentenceRecord> records;
};

bool is_valid_task(const std::string& task);
std::vector<std::string> whitespace_words(const std::string& text);
/// Exact text identity used for unique-sentence grouping: outer whitespace trimmed.
std::string sentence_key(const std::string& text);

/// Writes manifest.json and blobs/ under `dir`; returns `dir`. Manifest
/// record entries are regenerated from `records`.
std::filesystem::path write_corpus(const CorpusManifest& manifest, std::span<const SentenceRecord> records,
                                   const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Encodes one record's blob ("E2TB", version, word count, per-word payloads).
std::vector<std::uint8_t> encode_blob(const SentenceRecord& record, Eigen::Index channels);
/// Decodes a blob given the manifest channel count and expected word count.
std::vector<EEGSegment> decode_blob(std::span<const std::uint8_t> bytes, Eigen::Index channels,
                                    std::size_t expected_words, const std::string& record_name);

/// Throws on any broken type invariant (channel count, empty words, non-finite samples).
void validate_record(const SentenceRecord& record, Eigen::Index channels);

struct SynthSpec {
  int num_subjects = 2;
  int num_sentences = 20;
  int vocab_words = 40;
  int channels = 8;
  int min_steps = 8;
  int max_steps = 16;
  int min_words = 3;
  int max_words = 7;
  std::uint64_t seed = 0;
  bool subject_gain = true;
  double gain_min = 0.5;
  double gain_max = 2.0;
  /// Noise shared by every subject reading the same sentence position.
  double noise = 0.1;
  /// Extra independent noise per subject.
  double subject_noise = 0.0;
  /// Word types differ only in per-channel amplitude (shared phase and
  /// frequency), so channel gains are the main nuisance.
  bool amplitude_only = false;
  /// End every sentence with "." attached to its last word.
  bool punctuate = true;
  std::string task = "NR-v1";
  std::string name = "synthetic";
};

/// Every subject reads every sentence; each word type owns a fixed latent
/// channel pattern and subject s scales channel c by gain[s][c].
Corpus synthesize_corpus(const SynthSpec& spec);
/// Pseudo-word vocabulary of the synthetic corpus (depends on seed and vocab_words).
std::vector<std::string> synthetic_vocabulary(const SynthSpec& spec);
/// Text-only sentences over the same vocabulary, e.g. for language-model pre-training.
std::vector<std::string> synthesize_texts(const SynthSpec& spec, int count, std::uint64_t seed);
/// The per-subject channel gains used by synthesize_corpus (all ones when
/// subject_gain is off).
std::vector<std::vector<double>> synthetic_subject_gains(const SynthSpec& spec);

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

class SplitAssignment {
 public:
  void assign(const std::string& task, const std::string& text, Split split);
  Split of(const SentenceRecord& record) const;
  bool contains(const std::string& task, const std::string& text) const;
  /// Number of unique sentences assigned to `split`, over all tasks.
  std::size_t unique_count(Split split) const;
  const std::map<std::pair<std::string, std::string>, Split>& entries() const { return entries_; }

 private:
  std::map<std::pair<std::string, std::string>, Split> entries_;
};

/// Groups records by unique sentence within each task and deals the shuffled
/// groups into train/val/test. Val and test counts are round-half-up of
/// ratio * U, remainder to train.
SplitAssignment split_by_sentence(std::span<const SentenceRecord> records, SplitRatios ratios, std::uint64_t seed);

std::vector<SentenceRecord> select_split(std::span<const SentenceRecord> records, const SplitAssignment& split,
                                         Split which);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<int> zero_variance;  // flagged channel indices
};

/// Per-channel mean/variance over every sample of the given (train) records.
ChannelStats compute_channel_stats(std::span<const SentenceRecord> train);
/// z = (x - mean) / sqrt(var + 1e-8); flagged channels become exact zeros.
void apply_channel_stats(std::vector<SentenceRecord>& records, const ChannelStats& stats);

}  // namespace e2t::data
