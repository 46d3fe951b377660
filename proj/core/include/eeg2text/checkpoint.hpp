// SPDX-License-Identifier: Apache-2.0
//
// "E2TP" parameter container:
//   magic "E2TP" | u32 version (1) | u32 header byte length | UTF-8 JSON header
//   | float32 payloads (little-endian, row-major, in header order)
// The header is {"config": ..., "tensors": [{"name", "shape": [r, c], "offset"}]}
// with offsets in bytes from the start of the payload section.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeg2text/autograd.hpp"
#include "eeg2text/layers.hpp"

namespace e2t {

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::string> order;
  std::map<std::string, Matrix> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const nlohmann::json& config,
                                            std::span<const nn::ParameterSet* const> sets);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     std::span<const nn::ParameterSet* const> sets);
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const nn::ParameterSet& set);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads every tensor of `set` from the checkpoint (extra tensors are ignored).
void restore_parameters(const Checkpoint& checkpoint, nn::ParameterSet& set);

}  // namespace e2t
