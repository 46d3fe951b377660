// SPDX-License-Identifier: Apache-2.0
#include "eeg2text/refine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "eeg2text/errors.hpp"

namespace e2t {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("refinement endpoint must be an absolute URL: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

RefineOutcome refine_one(const std::string& sentence, const RefineConfig& config, const Endpoint& endpoint,
                         const std::string& token) {
  RefineOutcome out{sentence, sentence, RefineStatus::kHttpFailure, 0, ""};
  httplib::Client client(endpoint.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  const std::string body = refinement_request_body(config, sentence).dump();

  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    if (attempt > 1) {
      const double delay = config.backoff_seconds * std::pow(2.0, attempt - 2);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    out.attempts = attempt;
    const auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      out.detail = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      out.detail = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const std::string content = trim(parse_refinement_response(res->body));
      if (content.find("[False]") != std::string::npos) {
        out.status = RefineStatus::kDeclined;
        out.detail = "model declined";
      } else if (content.empty()) {
        out.status = RefineStatus::kMalformed;
        out.detail = "empty content";
      } else {
        out.status = RefineStatus::kRefined;
        out.refined = content;
        out.detail.clear();
      }
    } catch (const Error& e) {
      out.status = RefineStatus::kMalformed;
      out.detail = e.what();
    }
    return out;
  }
  return out;
}

}  // namespace

const char* const kRefinePromptPrefix =
    "As a text reconstructor, your task is to restore corrupted sentences to their original form while making "
    "minimum changes. You should adjust the spaces and punctuation marks as necessary. Do not introduce any "
    "additional information. If you are unable to reconstruct the text, respond with [False]. Reconstruct the "
    "following text: ";

void RefineConfig::validate() const {
  if (!enabled) return;
  if (endpoint_url.empty()) throw ConfigError("refinement enabled without an endpoint_url");
  split_url(endpoint_url);
  if (model_name.empty()) throw ConfigError("refinement model_name is empty");
  if (max_in_flight < 1) throw ConfigError("refinement max_in_flight must be >= 1");
  if (max_attempts < 1) throw ConfigError("refinement max_attempts must be >= 1");
  if (timeout_seconds <= 0.0 || backoff_seconds < 0.0) throw ConfigError("refinement timeouts must be positive");
}

std::string refinement_prompt(const std::string& sentence) { return kRefinePromptPrefix + sentence; }

nlohmann::json refinement_request_body(const RefineConfig& config, const std::string& sentence) {
  return {{"model", config.model_name},
          {"temperature", 0},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", refinement_prompt(sentence)}}})}};
}

std::string parse_refinement_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed completion response: ") + e.what());
  }
}

std::vector<RefineOutcome> refine_sentences(const std::vector<std::string>& decoded, const RefineConfig& config) {
  config.validate();
  const Endpoint endpoint = split_url(config.endpoint_url);
  std::string token;
  if (!config.api_key_env.empty()) {
    const char* value = std::getenv(config.api_key_env.c_str());
    if (value == nullptr) throw ConfigError("environment variable " + config.api_key_env + " is not set");
    token = value;
  }

  std::vector<RefineOutcome> outcomes(decoded.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < decoded.size(); i = next++) {
      outcomes[i] = refine_one(decoded[i], config, endpoint, token);
      if (outcomes[i].status != RefineStatus::kRefined) {
        std::lock_guard lock(log_mutex);
        std::clog << "refine: sentence " << i << " kept original (" << outcomes[i].detail << ")\n";
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), decoded.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return outcomes;
}

const char* refine_status_name(RefineStatus status) {
  switch (status) {
    case RefineStatus::kRefined: return "refined";
    case RefineStatus::kDeclined: return "declined";
    case RefineStatus::kHttpFailure: return "http_failure";
    case RefineStatus::kMalformed: return "malformed";
  }
  return "?";
}

}  // namespace e2t
