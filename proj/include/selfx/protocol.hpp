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

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "selfx/domain.hpp"
#include "selfx/gateway.hpp"
#include "selfx/perturb.hpp"

namespace selfx {

enum class TemplateId {
  kClassifyFull,
  kExtractTopK,
  kClassifyTopKOnly,
  kClassifyRemoved,
};

std::string_view to_string(TemplateId id);

struct PromptTemplate {
  TemplateId id = TemplateId::kClassifyFull;
  std::string system;
  std::string user_prefix;  // ends with "Text:"
};

// System and user texts with {K} and the placeholder substituted.
PromptTemplate prompt_template(TemplateId id, int k,
                               std::string_view placeholder = kDefaultPlaceholder);

// [system, user] where user = prefix + " " + payload. Throws kPrecondition on
// an empty payload.
std::vector<ChatMessage> build_prompt(
    TemplateId id, std::string_view payload, int k,
    std::string_view placeholder = kDefaultPlaceholder);

// Second user turn of predict-then-explain.
std::string pe_explain_turn(int k, std::string_view text);
// First and second user turns of explain-then-predict.
std::string ep_extract_turn(int k, std::string_view text);
std::string ep_classify_turn(std::string_view text);

enum class PromptKind { kClassify, kExtract };

struct RecognizedPrompt {
  PromptKind kind = PromptKind::kClassify;
  int k = 0;  // extraction requests only
  std::string payload;
};

// Matches a user turn against every classification/extraction prefix used
// by the templates and flows.
std::optional<RecognizedPrompt> recognize_user_turn(std::string_view content);

enum class MalformedReason {
  kNotASingleDigit,
  kWrongWordCount,
  kWordNotInText,
  kEmptyOutput,
};

std::string_view to_string(MalformedReason reason);

struct MalformedOutput {
  std::string sample_id;
  TemplateId stage = TemplateId::kClassifyFull;
  std::string raw_text;
  MalformedReason reason = MalformedReason::kEmptyOutput;
};

// Exactly one ASCII digit 0-5 after trimming whitespace.
std::variant<Emotion, MalformedOutput> parse_label(std::string_view text);

// Comma-separated words, each trimmed and NFC-normalized; empty pieces are
// dropped. Requires exactly k words, each present in original_text, and no
// word repeated more often than it occurs there.
std::variant<Explanation, MalformedOutput> parse_topk_csv(
    std::string_view text, std::string_view original_text, int k);

struct Transcript {
  std::string sample_id;
  std::string source;
  std::string flow;  // "PE", "EP", "TopKOnly", "TopKRemoved"
  std::optional<Paradigm> paradigm;
  std::vector<ChatMessage> messages;
};

struct FlowOutcome {
  std::optional<Prediction> prediction;
  std::optional<Explanation> explanation;
  std::optional<MaskingReport> masking;  // TopKRemoved only
  Transcript transcript;
  std::vector<MalformedOutput> malformed;

  bool ok() const { return malformed.empty(); }
};

// Builds a full-text or variant prediction from a classification completion.
// The distribution comes from the first non-blank generated token.
std::variant<Prediction, MalformedOutput> prediction_from_completion(
    const CompletionResult& completion, const std::string& request_key,
    const Sample& sample, const std::string& source,
    std::optional<Paradigm> paradigm, InputVariant variant, TemplateId stage);

// Both flows stop at the first malformed assistant turn.
// One conversation: classify, then list the top-k words.
FlowOutcome run_pe(Gateway& gateway, const Sample& sample, int k);
// One conversation: list the top-k words, then classify.
FlowOutcome run_ep(Gateway& gateway, const Sample& sample, int k);
// Fresh conversation on the TopKOnly or TopKRemoved input.
FlowOutcome run_variant(Gateway& gateway, const Sample& sample,
                        const Explanation& explanation, InputVariant variant,
                        int k,
                        std::string_view placeholder = kDefaultPlaceholder);

void to_json(nlohmann::json& j, const Transcript& t);
void from_json(const nlohmann::json& j, Transcript& t);
void to_json(nlohmann::json& j, const MalformedOutput& m);
void to_json(nlohmann::json& j, const MaskingReport& r);
void from_json(const nlohmann::json& j, MaskingReport& r);

}  // namespace selfx
