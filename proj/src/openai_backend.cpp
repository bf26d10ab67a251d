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

#include <cstdlib>

#include "httplib.h"
#include "selfx/errors.hpp"
#include "selfx/gateway.hpp"

namespace selfx {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::kConfigError, "endpoint must be an absolute URL: " + url);
  }
  const auto slash = url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = url.substr(0, slash);
  ep.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
  return ep;
}

}  // namespace

nlohmann::json OpenAiBackend::build_body(const GatewayConfig& config,
                                         std::span<const ChatMessage> messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : messages) msgs.push_back(m);
  return nlohmann::json{{"model", config.model},
                        {"messages", std::move(msgs)},
                        {"temperature", config.decoding.temperature},
                        {"max_tokens", config.decoding.max_tokens},
                        {"logprobs", true},
                        {"top_logprobs", config.decoding.top_logprobs}};
}

CompletionResult OpenAiBackend::parse_response(const nlohmann::json& body) {
  try {
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) {
      throw Error(ErrorCode::kProtocolError, "response has no choices");
    }
    const auto& choice = choices.at(0);
    CompletionResult r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? std::string() : content.get<std::string>();
    r.model_id = body.value("model", std::string());
    const auto lp = choice.find("logprobs");
    if (lp == choice.end() || lp->is_null() || !lp->contains("content") ||
        (*lp)["content"].is_null()) {
      throw Error(ErrorCode::kProtocolError, "response lacks token log-probabilities");
    }
    for (const auto& tok : (*lp)["content"]) {
      TokenLogprobs t;
      t.token = tok.at("token").get<std::string>();
      t.candidates[t.token] = tok.at("logprob").get<double>();
      if (tok.contains("top_logprobs")) {
        for (const auto& alt : tok["top_logprobs"]) {
          t.candidates.emplace(alt.at("token").get<std::string>(),
                               alt.at("logprob").get<double>());
        }
      }
      r.token_logprobs.push_back(std::move(t));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("malformed response: ") + e.what());
  }
}

CompletionResult OpenAiBackend::complete(const GatewayConfig& config,
                                         std::span<const ChatMessage> messages) {
  const Endpoint ep = split_endpoint(config.endpoint);
  httplib::Client client(ep.origin);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(std::chrono::seconds(120));

  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::kAuthError,
                  "environment variable " + config.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const std::string body = build_body(config, messages).dump();
  auto res = client.Post(ep.path + "/chat/completions", headers, body,
                         "application/json");
  if (!res) {
    throw Error(ErrorCode::kNetworkError,
                "request to " + config.endpoint + " failed: " +
                    httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw Error(ErrorCode::kAuthError, "HTTP " + std::to_string(status));
  }
  if (status == 429) throw Error(ErrorCode::kRateLimited, "HTTP 429");
  if (status >= 500) {
    throw Error(ErrorCode::kNetworkError, "HTTP " + std::to_string(status));
  }
  if (status != 200) {
    throw Error(ErrorCode::kProtocolError,
                "HTTP " + std::to_string(status) + ": " + res->body);
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("invalid JSON: ") + e.what());
  }
  return parse_response(parsed);
}

}  // namespace selfx
