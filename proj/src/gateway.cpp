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

#include "selfx/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "selfx/errors.hpp"

namespace selfx {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  throw Error(ErrorCode::kParseError, "unknown role '" + std::string(text) + "'");
}

std::string_view to_string(CacheMode mode) {
  switch (mode) {
    case CacheMode::kOff: return "off";
    case CacheMode::kRecord: return "record";
    case CacheMode::kReplay: return "replay";
    case CacheMode::kRecordOrReplay: return "record_or_replay";
  }
  return "off";
}

CacheMode parse_cache_mode(std::string_view text) {
  if (text == "off") return CacheMode::kOff;
  if (text == "record") return CacheMode::kRecord;
  if (text == "replay") return CacheMode::kReplay;
  if (text == "record_or_replay") return CacheMode::kRecordOrReplay;
  throw Error(ErrorCode::kConfigError,
              "unknown cache mode '" + std::string(text) + "'");
}

bool CompletionResult::is_valid() const {
  for (const TokenLogprobs& t : token_logprobs) {
    if (!t.candidates.contains(t.token)) return false;
    for (const auto& [tok, lp] : t.candidates) {
      if (!(lp <= 0.0)) return false;
    }
  }
  return true;
}

void GatewayConfig::validate() const {
  if (model.empty()) throw Error(ErrorCode::kConfigError, "model id is empty");
  if (decoding.top_logprobs < 6) {
    throw Error(ErrorCode::kConfigError,
                "top_logprobs must be >= 6 so every label digit is observable");
  }
  if (decoding.max_tokens < 1) {
    throw Error(ErrorCode::kConfigError, "max_tokens must be >= 1");
  }
  if (retry.max_attempts < 1) {
    throw Error(ErrorCode::kConfigError, "max_attempts must be >= 1");
  }
  if (max_concurrency < 1) {
    throw Error(ErrorCode::kConfigError, "max_concurrency must be >= 1");
  }
  if (cache_mode != CacheMode::kOff && cache_dir.empty()) {
    throw Error(ErrorCode::kConfigError, "cache mode requires a cache directory");
  }
}

void to_json(nlohmann::json& j, const ChatMessage& m) {
  j = nlohmann::json{{"role", to_string(m.role)}, {"content", m.content}};
}

void from_json(const nlohmann::json& j, ChatMessage& m) {
  m.role = parse_role(j.at("role").get<std::string>());
  m.content = j.at("content").get<std::string>();
}

void to_json(nlohmann::json& j, const TokenLogprobs& t) {
  j = nlohmann::json{{"token", t.token}, {"candidates", t.candidates}};
}

void from_json(const nlohmann::json& j, TokenLogprobs& t) {
  t.token = j.at("token").get<std::string>();
  t.candidates = j.at("candidates").get<std::map<std::string, double>>();
}

void to_json(nlohmann::json& j, const CompletionResult& r) {
  j = nlohmann::json{{"text", r.text},
                     {"token_logprobs", r.token_logprobs},
                     {"model_id", r.model_id}};
}

void from_json(const nlohmann::json& j, CompletionResult& r) {
  r.text = j.at("text").get<std::string>();
  r.token_logprobs = j.at("token_logprobs").get<std::vector<TokenLogprobs>>();
  r.model_id = j.value("model_id", std::string());
}

nlohmann::json request_descriptor(const GatewayConfig& config,
                                  std::span<const ChatMessage> messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : messages) msgs.push_back(m);
  return nlohmann::json{{"model", config.model},
                        {"temperature", config.decoding.temperature},
                        {"max_tokens", config.decoding.max_tokens},
                        {"top_logprobs", config.decoding.top_logprobs},
                        {"messages", std::move(msgs)}};
}

std::string request_key(const GatewayConfig& config,
                        std::span<const ChatMessage> messages) {
  const std::string canonical = request_descriptor(config, messages).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCode::kPrecondition, "SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0')
        << static_cast<int>(digest[i]);
  }
  return hex.str();
}

ScriptedBackend::ScriptedBackend(std::vector<CompletionResult> script)
    : script_(std::move(script)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open script " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return std::make_shared<ScriptedBackend>(
      j.at("responses").get<std::vector<CompletionResult>>());
}

CompletionResult ScriptedBackend::complete(const GatewayConfig&,
                                           std::span<const ChatMessage>) {
  std::lock_guard lock(mu_);
  if (next_ >= script_.size()) {
    throw Error(ErrorCode::kProtocolError, "scripted backend exhausted");
  }
  return script_[next_++];
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return script_.size() - next_;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / (key + ".json");
}

std::optional<CompletionResult> ResponseCache::load(const std::string& key) const {
  std::ifstream in(path_for(key));
  if (!in) return std::nullopt;
  try {
    nlohmann::json j;
    in >> j;
    if (j.value("key", std::string()) != key) {
      throw Error(ErrorCode::kParseError, "cache entry key mismatch for " + key);
    }
    return j.at("response").get<CompletionResult>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError,
                "corrupt cache entry " + path_for(key).string() + ": " + e.what());
  }
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string temp_suffix() {
  static std::atomic<unsigned long> counter{0};
  std::ostringstream os;
  os << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
     << counter.fetch_add(1);
  return os.str();
}

}  // namespace

void ResponseCache::store(const std::string& key, const nlohmann::json& request,
                          const CompletionResult& response) const {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  const nlohmann::json entry{{"key", key},
                             {"request", request},
                             {"response", response},
                             {"timestamp", utc_timestamp()}};
  const std::filesystem::path final_path = path_for(key);
  const std::filesystem::path tmp = final_path.string() + temp_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << entry.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "write failed " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIoError, "cannot rename cache entry " + key);
  }
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<ChatBackend> backend,
                 SleepFn sleep)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      sleep_(std::move(sleep)),
      in_flight_(std::max(1, config_.max_concurrency)) {
  config_.validate();
  if (config_.source.empty()) config_.source = config_.model;
  if (!sleep_) {
    sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (config_.cache_mode != CacheMode::kOff) cache_.emplace(config_.cache_dir);
}

CompletionResult Gateway::send_chat(std::span<const ChatMessage> messages) {
  if (messages.empty()) {
    throw Error(ErrorCode::kPrecondition, "message list is empty");
  }
  if (messages.front().role != Role::kSystem) {
    throw Error(ErrorCode::kPrecondition, "first message must be a system message");
  }
  const CacheMode mode = config_.cache_mode;
  std::string key;
  if (mode != CacheMode::kOff) key = request_key(config_, messages);

  if (mode == CacheMode::kReplay || mode == CacheMode::kRecordOrReplay) {
    if (auto hit = cache_->load(key)) return *hit;
    if (mode == CacheMode::kReplay) {
      throw Error(ErrorCode::kCacheMiss, "no cached response for request key " + key);
    }
  }

  CompletionResult result = call_with_retries(messages);
  if (mode == CacheMode::kRecord || mode == CacheMode::kRecordOrReplay) {
    cache_->store(key, request_descriptor(config_, messages), result);
  }
  return result;
}

CompletionResult Gateway::call_with_retries(std::span<const ChatMessage> messages) {
  if (!backend_) {
    throw Error(ErrorCode::kConfigError, "no backend configured for " + config_.source);
  }
  for (int attempt = 1;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      backend_calls_.fetch_add(1);
      CompletionResult r = backend_->complete(config_, messages);
      if (!r.is_valid()) {
        throw Error(ErrorCode::kProtocolError,
                    "completion has malformed token log-probabilities");
      }
      return r;
    } catch (const Error& e) {
      const bool transient = e.code() == ErrorCode::kNetworkError ||
                             e.code() == ErrorCode::kRateLimited;
      if (!transient || attempt >= config_.retry.max_attempts) throw;
    }
    const auto factor = static_cast<long>(1L << std::min(attempt - 1, 16));
    sleep_(config_.retry.base_backoff * factor);
  }
}

}  // namespace selfx
