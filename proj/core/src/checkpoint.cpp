// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "eeg2text/errors.hpp"

namespace e2t {
namespace {

constexpr char kMagic[4] = {'E', '2', 'T', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const nlohmann::json& config,
                                            std::span<const nn::ParameterSet* const> sets) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto* set : sets) {
    for (const auto& e : set->entries()) {
      tensors.push_back({{"name", e.name}, {"shape", {e.var.rows(), e.var.cols()}}, {"offset", offset}});
      offset += 4 * static_cast<std::uint64_t>(e.var.value().size());
    }
  }
  const std::string header = nlohmann::json{{"config", config}, {"tensors", tensors}}.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + offset);
  for (const auto* set : sets) {
    for (const auto& e : set->entries()) {
      const Matrix& m = e.var.value();
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("not an E2TP checkpoint");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size()) throw IntegrityError("checkpoint header truncated");
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header: " + std::string(e.what()));
  }
  const std::size_t payload = 12 + header_len;
  ck.config = header.value("config", nlohmann::json::object());
  std::size_t expected_end = payload;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const std::size_t start = payload + offset;
    const std::size_t count = static_cast<std::size_t>(rows * cols);
    if (start + 4 * count > bytes.size()) throw IntegrityError("checkpoint tensor " + name + " truncated");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < count; ++i) {
      m.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, start + 4 * i)));
    }
    expected_end = std::max(expected_end, start + 4 * count);
    ck.order.push_back(name);
    if (!ck.tensors.emplace(name, std::move(m)).second) throw FormatError("duplicate tensor " + name);
  }
  if (expected_end != bytes.size()) throw IntegrityError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     std::span<const nn::ParameterSet* const> sets) {
  const auto bytes = encode_checkpoint(config, sets);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const nn::ParameterSet& set) {
  const nn::ParameterSet* sets[] = {&set};
  save_checkpoint(path, config, sets);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

void restore_parameters(const Checkpoint& checkpoint, nn::ParameterSet& set) { set.load_values(checkpoint.tensors); }

}  // namespace e2t
