// Copyright 2026 The selfx Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace selfx {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// Candidate log-probabilities for one generated token. `candidates` always
// contains `token` itself.
struct TokenLogprobs {
  std::string token;
  std::map<std::string, double> candidates;

  bool operator==(const TokenLogprobs&) const = default;
};

struct CompletionResult {
  std::string text;
  std::vector<TokenLogprobs> token_logprobs;
  std::string model_id;

  // Every logprob <= 0 and every chosen token in its own candidate map.
  bool is_valid() const;
  bool operator==(const CompletionResult&) const = default;
};

enum class CacheMode { kOff, kRecord, kReplay, kRecordOrReplay };

std::string_view to_string(CacheMode mode);
CacheMode parse_cache_mode(std::string_view text);

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 64;
  int top_logprobs = 20;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_backoff{500};
};

struct GatewayConfig {
  std::string source;   // name used in reports; defaults to model
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env;  // name of the environment variable
  DecodingParams decoding;
  RetryPolicy retry;
  CacheMode cache_mode = CacheMode::kOff;
  std::filesystem::path cache_dir;
  int max_concurrency = 4;

  // Throws kConfigError. Requires top_logprobs >= 6 and max_attempts >= 1.
  void validate() const;
};

void to_json(nlohmann::json& j, const ChatMessage& m);
void from_json(const nlohmann::json& j, ChatMessage& m);
void to_json(nlohmann::json& j, const TokenLogprobs& t);
void from_json(const nlohmann::json& j, TokenLogprobs& t);
void to_json(nlohmann::json& j, const CompletionResult& r);
void from_json(const nlohmann::json& j, CompletionResult& r);

// Canonical request body hashed by request_key: model, decoding params and
// ordered messages. Endpoint and credentials are excluded.
nlohmann::json request_descriptor(const GatewayConfig& config,
                                  std::span<const ChatMessage> messages);

// Hex SHA-256 of the canonical request descriptor.
std::string request_key(const GatewayConfig& config,
                        std::span<const ChatMessage> messages);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Single attempt. Throws Error with kNetworkError / kRateLimited (retried by
  // the gateway), kAuthError or kProtocolError.
  virtual CompletionResult complete(const GatewayConfig& config,
                                    std::span<const ChatMessage> messages) = 0;
};

// OpenAI-style chat completions with logprobs over HTTP(S).
class OpenAiBackend : public ChatBackend {
 public:
  CompletionResult complete(const GatewayConfig& config,
                            std::span<const ChatMessage> messages) override;

  static nlohmann::json build_body(const GatewayConfig& config,
                                   std::span<const ChatMessage> messages);
  // Throws kProtocolError if choices or logprobs are missing.
  static CompletionResult parse_response(const nlohmann::json& body);
};

// Returns a fixed sequence of completions, one per call, in order.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<CompletionResult> script);
  static std::shared_ptr<ScriptedBackend> load(const std::filesystem::path& path);

  CompletionResult complete(const GatewayConfig& config,
                            std::span<const ChatMessage> messages) override;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<CompletionResult> script_;
  std::size_t next_ = 0;
};

// Content-addressed directory of {key, request, response, timestamp} files.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<CompletionResult> load(const std::string& key) const;
  // Atomic: written to a temporary file then renamed.
  void store(const std::string& key, const nlohmann::json& request,
             const CompletionResult& response) const;
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<ChatBackend> backend,
          SleepFn sleep = {});

  // Requires a non-empty message list starting with a system message. In
  // replay mode the backend is never called; a missing entry is kCacheMiss.
  CompletionResult send_chat(std::span<const ChatMessage> messages);

  const GatewayConfig& config() const { return config_; }
  std::size_t backend_calls() const { return backend_calls_.load(); }

 private:
  CompletionResult call_with_retries(std::span<const ChatMessage> messages);

  GatewayConfig config_;
  std::shared_ptr<ChatBackend> backend_;
  SleepFn sleep_;
  std::optional<ResponseCache> cache_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace selfx
