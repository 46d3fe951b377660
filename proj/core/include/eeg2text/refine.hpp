// SPDX-License-Identifier: Apache-2.0
//
// Inference-time sentence refinement through an OpenAI-compatible
// chat-completions endpoint. Failures never lose a sentence: the decoded
// original is kept whenever the model declines, the HTTP call keeps failing,
// or the reply cannot be parsed.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace e2t {

struct RefineConfig {
  bool enabled = false;
  /// Full URL, e.g. "https://api.openai.com/v1/chat/completions".
  std::string endpoint_url;
  /// Environment variable holding the bearer token; empty sends no Authorization header.
  std::string api_key_env;
  std::string model_name = "gpt-4";
  int max_in_flight = 4;
  double timeout_seconds = 60.0;
  int max_attempts = 3;
  /// Delay before retry k (1-based) is backoff_seconds * 2^(k-1).
  double backoff_seconds = 1.0;

  void validate() const;
};

enum class RefineStatus { kRefined, kDeclined, kHttpFailure, kMalformed };

struct RefineOutcome {
  std::string original;
  std::string refined;
  RefineStatus status = RefineStatus::kRefined;
  int attempts = 0;
  std::string detail;
};

extern const char* const kRefinePromptPrefix;

std::string refinement_prompt(const std::string& sentence);
nlohmann::json refinement_request_body(const RefineConfig& config, const std::string& sentence);
/// Text of choices[0].message.content; throws FormatError when absent.
std::string parse_refinement_response(const std::string& body);

/// One outcome per input, in input order.
std::vector<RefineOutcome> refine_sentences(const std::vector<std::string>& decoded, const RefineConfig& config);

const char* refine_status_name(RefineStatus status);

}  // namespace e2t
