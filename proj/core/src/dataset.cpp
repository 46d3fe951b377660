// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eeg2text/errors.hpp"

namespace e2t::data {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kBlobMagic[4] = {'E', '2', 'T', 'B'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr double kNormEps = 1e-8;
using Rng = std::mt19937_64;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos, const std::string& where) {
  if (pos + 4 > bytes.size()) throw IntegrityError(where + ": blob truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::vector<std::string> word_texts(const SentenceRecord& r) {
  std::vector<std::string> out;
  out.reserve(r.words.size());
  for (const auto& w : r.words) out.push_back(w.text);
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

bool is_valid_task(const std::string& task) { return task == "NR-v1" || task == "NR-v2" || task == "TSR-v1"; }

std::vector<std::string> whitespace_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string sentence_key(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

void validate_record(const SentenceRecord& record, Eigen::Index channels) {
  const std::string name = "record " + record.sentence_id + " (subject " + record.subject + ")";
  if (record.words.empty()) throw DataError(name + " has no words");
  for (std::size_t m = 0; m < record.words.size(); ++m) {
    const auto& seg = record.words[m].eeg;
    if (seg.channels() != channels) {
      throw FormatError(name + " word " + std::to_string(m) + " has " + std::to_string(seg.channels()) +
                        " channels, corpus has " + std::to_string(channels));
    }
    if (seg.steps() < 1) throw DataError(name + " word " + std::to_string(m) + " has no time steps");
    if (!seg.samples.allFinite()) {
      throw DataError(name + ": non-finite sample at word index " + std::to_string(m));
    }
  }
}

std::vector<std::uint8_t> encode_blob(const SentenceRecord& record, Eigen::Index channels) {
  std::vector<std::uint8_t> out(kBlobMagic, kBlobMagic + 4);
  put_u32(out, kBlobVersion);
  put_u32(out, static_cast<std::uint32_t>(record.words.size()));
  for (const auto& w : record.words) {
    if (w.eeg.channels() != channels) {
      throw FormatError("record " + record.sentence_id + ": segment has " + std::to_string(w.eeg.channels()) +
                        " channels, manifest has " + std::to_string(channels));
    }
    put_u32(out, static_cast<std::uint32_t>(w.eeg.steps()));
    // Row-major storage is already channel-major.
    const float* data = w.eeg.samples.data();
    for (Eigen::Index i = 0; i < w.eeg.samples.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  }
  return out;
}

std::vector<EEGSegment> decode_blob(std::span<const std::uint8_t> bytes, Eigen::Index channels,
                                    std::size_t expected_words, const std::string& record_name) {
  if (bytes.size() < 4 || !std::equal(kBlobMagic, kBlobMagic + 4, bytes.begin())) {
    throw FormatError(record_name + ": bad blob magic");
  }
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(bytes, pos, record_name);
  if (version != kBlobVersion) throw FormatError(record_name + ": unsupported blob version " + std::to_string(version));
  const std::uint32_t words = get_u32(bytes, pos, record_name);
  if (words != expected_words) {
    throw IntegrityError(record_name + ": blob holds " + std::to_string(words) + " words, manifest expects " +
                         std::to_string(expected_words));
  }
  std::vector<EEGSegment> out(words);
  for (std::uint32_t m = 0; m < words; ++m) {
    const std::uint32_t steps = get_u32(bytes, pos, record_name);
    if (steps == 0) throw IntegrityError(record_name + ": word " + std::to_string(m) + " has T=0");
    const std::size_t count = static_cast<std::size_t>(channels) * steps;
    if (pos + 4 * count > bytes.size()) throw IntegrityError(record_name + ": blob truncated");
    SampleMatrix samples(channels, steps);
    for (std::size_t i = 0; i < count; ++i) {
      samples.data()[i] = std::bit_cast<float>(get_u32(bytes, pos, record_name));
    }
    out[m].samples = std::move(samples);
  }
  if (pos != bytes.size()) throw IntegrityError(record_name + ": trailing bytes after last word");
  return out;
}

fs::path write_corpus(const CorpusManifest& manifest, std::span<const SentenceRecord> records, const fs::path& dir) {
  const auto channels = static_cast<Eigen::Index>(manifest.channel_names.size());
  if (channels == 0) throw FormatError("manifest declares no channels");
  const std::set<std::string> subjects(manifest.subjects.begin(), manifest.subjects.end());
  for (const auto& r : records) {
    if (!subjects.contains(r.subject)) throw FormatError("record " + r.sentence_id + ": unknown subject " + r.subject);
    validate_record(r, channels);
  }
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw IoError("cannot create " + (dir / "blobs").string() + ": " + ec.message());

  json jrecords = json::array();
  for (const auto& r : records) {
    const std::string rel = "blobs/" + sanitize(r.task) + "__" + sanitize(r.subject) + "__" + sanitize(r.sentence_id) + ".e2tb";
    const auto bytes = encode_blob(r, channels);
    std::ofstream out(dir / rel, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / rel).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + (dir / rel).string());
    json entry = {{"sentence_id", r.sentence_id}, {"task", r.task}, {"subject", r.subject}, {"text", r.text},
                  {"blob_path", rel}};
    auto words = word_texts(r);
    if (words != whitespace_words(r.text)) entry["words"] = words;
    jrecords.push_back(std::move(entry));
  }
  json j = {{"name", manifest.name},
            {"format_version", 1},
            {"channel_names", manifest.channel_names},
            {"sampling_rate_hz", manifest.sampling_rate_hz},
            {"subjects", manifest.subjects},
            {"records", std::move(jrecords)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to manifest.json");
  return dir;
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
  json j;
  try {
    std::ifstream in(manifest_path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  Corpus corpus;
  auto& m = corpus.manifest;
  try {
    m.name = j.at("name").get<std::string>();
    m.format_version = j.at("format_version").get<int>();
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    m.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
    m.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto& jr : j.at("records")) {
      RecordEntry e;
      e.sentence_id = jr.at("sentence_id").get<std::string>();
      e.task = jr.at("task").get<std::string>();
      e.subject = jr.at("subject").get<std::string>();
      e.text = jr.at("text").get<std::string>();
      e.blob_path = jr.at("blob_path").get<std::string>();
      if (jr.contains("words")) e.words = jr.at("words").get<std::vector<std::string>>();
      m.records.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  if (m.format_version != 1) throw FormatError("unsupported format_version " + std::to_string(m.format_version));
  const auto channels = static_cast<Eigen::Index>(m.channel_names.size());
  if (channels == 0) throw FormatError("manifest declares no channels");
  if (std::set<std::string>(m.channel_names.begin(), m.channel_names.end()).size() != m.channel_names.size()) {
    throw FormatError("duplicate channel names in manifest");
  }
  const std::set<std::string> subjects(m.subjects.begin(), m.subjects.end());
  std::set<std::tuple<std::string, std::string, std::string>> ids;
  for (const auto& e : m.records) {
    if (!subjects.contains(e.subject)) throw FormatError("record " + e.sentence_id + ": unknown subject " + e.subject);
    if (!is_valid_task(e.task)) throw FormatError("record " + e.sentence_id + ": unknown task " + e.task);
    if (!ids.emplace(e.subject, e.task, e.sentence_id).second) {
      throw FormatError("duplicate sentence_id " + e.sentence_id + " for subject " + e.subject);
    }
  }

  corpus.records.resize(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& e = m.records[i];
    auto& r = corpus.records[i];
    r.sentence_id = e.sentence_id;
    r.subject = e.subject;
    r.task = e.task;
    r.text = e.text;
    const auto words = e.words.empty() ? whitespace_words(e.text) : e.words;
    const std::string name = "record " + e.sentence_id + " (subject " + e.subject + ")";
    const auto bytes = read_file(dir / e.blob_path);
    auto segments = decode_blob(bytes, channels, words.size(), name);
    r.words.resize(words.size());
    for (std::size_t w = 0; w < words.size(); ++w) {
      r.words[w].text = words[w];
      r.words[w].eeg = std::move(segments[w]);
    }
    validate_record(r, channels);
  }
  return corpus;
}

std::vector<std::string> synthetic_vocabulary(const SynthSpec& spec) {
  if (spec.vocab_words < 1) throw ConfigError("synthetic_vocabulary: vocab_words must be >= 1");
  Rng vocab_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 1);
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "ch"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::set<std::string> seen;
  std::vector<std::string> vocab;
  std::uniform_int_distribution<int> onset(0, 15), vowel(0, 6), syllables(1, 3);
  while (static_cast<int>(vocab.size()) < spec.vocab_words) {
    std::string w;
    const int n = syllables(vocab_rng);
    for (int i = 0; i < n; ++i) w += std::string(kOnsets[onset(vocab_rng)]) + kVowels[vowel(vocab_rng)];
    if (seen.insert(w).second) vocab.push_back(w);
  }

  return vocab;
}

std::vector<std::string> synthesize_texts(const SynthSpec& spec, int count, std::uint64_t seed) {
  const auto vocab = synthetic_vocabulary(spec);
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 6);
  std::uniform_int_distribution<int> word_count(spec.min_words, spec.max_words);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(vocab.size()) - 1);
  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const int n = word_count(rng);
    std::string text;
    for (int w = 0; w < n; ++w) text += (w ? " " : "") + vocab[pick(rng)];
    if (spec.punctuate) text += ".";
    texts.push_back(std::move(text));
  }
  return texts;
}

std::vector<std::vector<double>> synthetic_subject_gains(const SynthSpec& spec) {
  Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + 5);
  std::uniform_real_distribution<double> gain(spec.gain_min, spec.gain_max);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(spec.num_subjects));
  for (auto& g : out) {
    g.resize(static_cast<std::size_t>(spec.channels), 1.0);
    if (spec.subject_gain) {
      for (auto& v : g) v = gain(rng);
    }
  }
  return out;
}

Corpus synthesize_corpus(const SynthSpec& spec) {
  if (spec.num_subjects < 1 || spec.num_sentences < 1 || spec.vocab_words < 1 || spec.channels < 1 ||
      spec.min_steps < 1 || spec.max_steps < spec.min_steps || spec.min_words < 1 || spec.max_words < spec.min_words) {
    throw ConfigError("synthesize_corpus: counts must be >= 1 and ranges ordered");
  }
  if (!is_valid_task(spec.task)) throw ConfigError("synthesize_corpus: unknown task " + spec.task);

  const std::vector<std::string> vocab = synthetic_vocabulary(spec);
  Rng pattern_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 5);

  // Latent pattern per word type: amplitude and phase per channel, one frequency.
  struct Pattern {
    std::vector<double> amplitude, phase;
    double frequency;
  };
  std::vector<Pattern> patterns(vocab.size());
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ph(0.0, 2.0 * std::numbers::pi), freq(0.5, 3.0);
  for (auto& p : patterns) {
    p.amplitude.resize(static_cast<std::size_t>(spec.channels));
    p.phase.resize(static_cast<std::size_t>(spec.channels));
    for (int c = 0; c < spec.channels; ++c) {
      p.amplitude[c] = amp(pattern_rng);
      p.phase[c] = ph(pattern_rng);
    }
    p.frequency = freq(pattern_rng);
    if (spec.amplitude_only) {
      // Positive magnitudes: the sign would otherwise be a gain-invariant cue.
      for (auto& a : p.amplitude) a = 0.25 + 0.75 * std::abs(a);
      std::fill(p.phase.begin(), p.phase.end(), 0.0);
      p.frequency = 1.0;
    }
  }

  Rng text_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 2);
  std::uniform_int_distribution<int> word_count(spec.min_words, spec.max_words);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(vocab.size()) - 1);
  std::set<std::string> texts;
  std::vector<std::vector<int>> sentences;
  int attempts = 0;
  while (static_cast<int>(sentences.size()) < spec.num_sentences) {
    if (++attempts > 1000 * spec.num_sentences) {
      throw ConfigError("synthesize_corpus: cannot draw enough distinct sentences from the vocabulary");
    }
    std::vector<int> ids(static_cast<std::size_t>(word_count(text_rng)));
    for (auto& id : ids) id = pick(text_rng);
    std::string text;
    for (std::size_t i = 0; i < ids.size(); ++i) text += (i ? " " : "") + vocab[ids[i]];
    if (spec.punctuate) text += ".";
    if (texts.insert(text).second) sentences.push_back(std::move(ids));
  }

  Corpus corpus;
  auto& m = corpus.manifest;
  m.name = spec.name;
  for (int c = 0; c < spec.channels; ++c) m.channel_names.push_back("Ch" + std::to_string(c));
  m.sampling_rate_hz = 500.0;
  for (int s = 0; s < spec.num_subjects; ++s) m.subjects.push_back("S" + std::to_string(s));
  const auto gains = synthetic_subject_gains(spec);

  Rng eeg_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 3);
  Rng subject_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 4);
  std::uniform_int_distribution<int> steps(spec.min_steps, spec.max_steps);
  std::normal_distribution<double> noise(0.0, 1.0);
  char id_buf[32];
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const auto& ids = sentences[si];
    // One base reading per sentence, shared by all subjects up to their gains.
    std::vector<Eigen::MatrixXd> base(ids.size());
    for (std::size_t w = 0; w < ids.size(); ++w) {
      const auto& p = patterns[ids[w]];
      const int T = steps(eeg_rng);
      base[w].resize(spec.channels, T);
      for (int c = 0; c < spec.channels; ++c) {
        for (int t = 0; t < T; ++t) {
          const double phase = 2.0 * std::numbers::pi * p.frequency * (t + 0.5) / T + p.phase[c];
          base[w](c, t) = p.amplitude[c] * std::sin(phase) + spec.noise * noise(eeg_rng);
        }
      }
    }
    std::snprintf(id_buf, sizeof(id_buf), "sent%05zu", si);
    for (int s = 0; s < spec.num_subjects; ++s) {
      SentenceRecord r;
      r.sentence_id = id_buf;
      r.subject = m.subjects[s];
      r.task = spec.task;
      for (std::size_t w = 0; w < ids.size(); ++w) {
        Word word;
        word.text = vocab[ids[w]] + (spec.punctuate && w + 1 == ids.size() ? "." : "");
        word.eeg.samples.resize(spec.channels, base[w].cols());
        for (int c = 0; c < spec.channels; ++c) {
          for (Eigen::Index t = 0; t < base[w].cols(); ++t) {
            double v = gains[s][c] * base[w](c, t);
            if (spec.subject_noise > 0.0) v += spec.subject_noise * noise(subject_rng);
            word.eeg.samples(c, t) = static_cast<float>(v);
          }
        }
        r.text += (w ? " " : "") + word.text;
        r.words.push_back(std::move(word));
      }
      corpus.records.push_back(std::move(r));
    }
  }
  for (const auto& r : corpus.records) {
    m.records.push_back({r.sentence_id, r.task, r.subject, r.text, "", {}});
  }
  return corpus;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split " + name);
}

void SplitAssignment::assign(const std::string& task, const std::string& text, Split split) {
  entries_[{task, sentence_key(text)}] = split;
}

Split SplitAssignment::of(const SentenceRecord& record) const {
  auto it = entries_.find({record.task, sentence_key(record.text)});
  if (it == entries_.end()) throw SplitError("sentence not in split assignment: " + record.text);
  return it->second;
}

bool SplitAssignment::contains(const std::string& task, const std::string& text) const {
  return entries_.contains({task, sentence_key(text)});
}

std::size_t SplitAssignment::unique_count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [split](const auto& kv) { return kv.second == split; }));
}

SplitAssignment split_by_sentence(std::span<const SentenceRecord> records, SplitRatios ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 ||
      ratios.test < 0) {
    throw SplitError("split ratios must be non-negative and sum to 1");
  }
  std::map<std::string, std::set<std::string>> by_task;
  for (const auto& r : records) by_task[r.task].insert(sentence_key(r.text));

  SplitAssignment out;
  for (const auto& [task, unique] : by_task) {
    const auto u = unique.size();
    if (u < 3) throw SplitError("task " + task + " has " + std::to_string(u) + " unique sentences, need >= 3");
    std::vector<std::string> order(unique.begin(), unique.end());
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto round_half_up = [](double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); };
    const std::size_t n_val = round_half_up(ratios.val * static_cast<double>(u));
    const std::size_t n_test = round_half_up(ratios.test * static_cast<double>(u));
    if (n_val + n_test > u) throw SplitError("split ratios leave no training sentences");
    const std::size_t n_train = u - n_val - n_test;
    for (std::size_t i = 0; i < u; ++i) {
      const Split s = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
      out.assign(task, order[i], s);
    }
  }
  return out;
}

std::vector<SentenceRecord> select_split(std::span<const SentenceRecord> records, const SplitAssignment& split,
                                         Split which) {
  std::vector<SentenceRecord> out;
  for (const auto& r : records) {
    if (split.of(r) == which) out.push_back(r);
  }
  return out;
}

ChannelStats compute_channel_stats(std::span<const SentenceRecord> train) {
  ChannelStats stats;
  if (train.empty() || train.front().words.empty()) throw DataError("channel statistics need at least one train record");
  const auto channels = static_cast<std::size_t>(train.front().words.front().eeg.channels());
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  double count = 0.0;
  // Two passes for a stable variance.
  for (const auto& r : train) {
    for (const auto& w : r.words) {
      for (std::size_t c = 0; c < channels; ++c) {
        sum[c] += w.eeg.samples.row(static_cast<Eigen::Index>(c)).cast<double>().sum();
      }
      count += static_cast<double>(w.eeg.steps());
    }
  }
  stats.mean.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) stats.mean[c] = sum[c] / count;
  for (const auto& r : train) {
    for (const auto& w : r.words) {
      for (std::size_t c = 0; c < channels; ++c) {
        sum_sq[c] += (w.eeg.samples.row(static_cast<Eigen::Index>(c)).cast<double>().array() - stats.mean[c])
                         .square()
                         .sum();
      }
    }
  }
  stats.stddev.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double var = sum_sq[c] / count;
    stats.stddev[c] = std::sqrt(var + kNormEps);
    if (var <= 1e-12) stats.zero_variance.push_back(static_cast<int>(c));
  }
  return stats;
}

void apply_channel_stats(std::vector<SentenceRecord>& records, const ChannelStats& stats) {
  const std::set<int> flagged(stats.zero_variance.begin(), stats.zero_variance.end());
  for (auto& r : records) {
    for (auto& w : r.words) {
      if (static_cast<std::size_t>(w.eeg.channels()) != stats.mean.size()) {
        throw FormatError("record " + r.sentence_id + ": channel count differs from statistics");
      }
      for (Eigen::Index c = 0; c < w.eeg.channels(); ++c) {
        if (flagged.contains(static_cast<int>(c))) {
          w.eeg.samples.row(c).setZero();
          continue;
        }
        const double mu = stats.mean[static_cast<std::size_t>(c)];
        const double sd = stats.stddev[static_cast<std::size_t>(c)];
        for (Eigen::Index t = 0; t < w.eeg.steps(); ++t) {
          w.eeg.samples(c, t) = static_cast<float>((static_cast<double>(w.eeg.samples(c, t)) - mu) / sd);
        }
      }
    }
  }
}

}  // namespace e2t::data
