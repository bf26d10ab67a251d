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

#include "selfx/protocol.hpp"

#include <algorithm>
#include <map>
#include <utility>

#include "selfx/calibrate.hpp"
#include "selfx/errors.hpp"

namespace selfx {
namespace {

constexpr std::string_view kSystemFull =
    "You are an emotion classifier. You must classify the emotion and output "
    "the top influential words in CSV format. For classifying, you are "
    "strictly required to output only one of the following English numbers: "
    "0, 1, 2, 3, 4, or 5. No other output is acceptable. For top influential "
    "words, you can only output Persian words in the text.";

constexpr std::string_view kSystemTopKOnly =
    "You are an emotion classifier. You are provided with some influential "
    "words that have been extracted from the text. You must classify the "
    "emotion based only on these words. For classifying, you are strictly "
    "required to output only one of the following English numbers: 0, 1, 2, "
    "3, 4, or 5. No other output is acceptable.";

constexpr std::string_view kSystemRemoved =
    "You are an emotion classifier. In the text, some influential words have "
    "been replaced with the placeholder {P}. You must classify the emotion "
    "based on the text, considering these {P} words as part of the context. "
    "For classifying, you are strictly required to output only one of the "
    "following English numbers: 0, 1, 2, 3, 4, or 5. No other output is "
    "acceptable.";

constexpr std::string_view kCategories =
    "Classify the following text into one of the categories: 'Sadness':0, "
    "'Happiness':1, 'Anger':2, 'Surprise':3, 'Hatred':4, 'Fear':5.";

constexpr std::string_view kOutputOnlyNumber =
    " Only output an English number showing the class of the text. Make sure "
    "not to output any other character. Text:";

// Full-text classification says "For each class," (with comma); the
// variant prompts omit the comma.
const std::string kUserClassifyFull = std::string(kCategories) +
                                      " For each class, output the mapped number." +
                                      std::string(kOutputOnlyNumber);
const std::string kUserClassifyVariant = std::string(kCategories) +
                                         " For each class output the mapped number." +
                                         std::string(kOutputOnlyNumber);
const std::string kUserClassifyThen = "Then, " + kUserClassifyFull;

constexpr std::string_view kUserExtract =
    "List the top {K} most influential words that contributed to this "
    "classification in CSV format (in a single line). I don't want you to "
    "classify in this stage. Only give me top {K} words. Make sure to provide "
    "only {K} Persian words which they exist in the original text and don't "
    "output any other token. Here is an example output: "
    "word1,word2,word3,word4,word5 Text:";

constexpr std::string_view kUserExtractFlow =
    "List the top {K} most influential words that contributed to this "
    "classification in CSV format (in a single line). Make sure to provide "
    "only {K} Persian words that exist in the original text and don't output "
    "any other token. Text:";

constexpr std::string_view kUserExplainThen =
    "Then, list the top {K} most influential words that contributed to this "
    "classification in CSV format (in a single line). Make sure to provide "
    "only {K} Persian words that exist in the original text and don't output "
    "any other token. Text:";

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string with_k(std::string_view tmpl, int k) {
  return replace_all(std::string(tmpl), "{K}", std::to_string(k));
}

std::string with_payload(std::string prefix, std::string_view payload) {
  prefix += ' ';
  prefix += payload;
  return prefix;
}

// Matches `content` against a template containing "{K}" markers followed by
// " " + payload.
std::optional<RecognizedPrompt> match_template(std::string_view content,
                                               std::string_view tmpl,
                                               PromptKind kind) {
  std::size_t ci = 0;
  std::size_t ti = 0;
  int k = 0;
  while (ti < tmpl.size()) {
    if (tmpl.substr(ti, 3) == "{K}") {
      std::size_t start = ci;
      int value = 0;
      while (ci < content.size() && content[ci] >= '0' && content[ci] <= '9' &&
             ci - start < 6) {
        value = value * 10 + (content[ci] - '0');
        ++ci;
      }
      if (ci == start) return std::nullopt;
      if (k != 0 && k != value) return std::nullopt;
      k = value;
      ti += 3;
      continue;
    }
    if (ci >= content.size() || content[ci] != tmpl[ti]) return std::nullopt;
    ++ci;
    ++ti;
  }
  if (ci >= content.size() || content[ci] != ' ') return std::nullopt;
  return RecognizedPrompt{kind, k, std::string(content.substr(ci + 1))};
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::kClassifyFull: return "ClassifyFull";
    case TemplateId::kExtractTopK: return "ExtractTopK";
    case TemplateId::kClassifyTopKOnly: return "ClassifyTopKOnly";
    case TemplateId::kClassifyRemoved: return "ClassifyRemoved";
  }
  return "ClassifyFull";
}

std::string_view to_string(MalformedReason reason) {
  switch (reason) {
    case MalformedReason::kNotASingleDigit: return "NotASingleDigit";
    case MalformedReason::kWrongWordCount: return "WrongWordCount";
    case MalformedReason::kWordNotInText: return "WordNotInText";
    case MalformedReason::kEmptyOutput: return "EmptyOutput";
  }
  return "EmptyOutput";
}

PromptTemplate prompt_template(TemplateId id, int k, std::string_view placeholder) {
  PromptTemplate t;
  t.id = id;
  switch (id) {
    case TemplateId::kClassifyFull:
      t.system = kSystemFull;
      t.user_prefix = kUserClassifyFull;
      break;
    case TemplateId::kExtractTopK:
      t.system = kSystemFull;
      t.user_prefix = with_k(kUserExtract, k);
      break;
    case TemplateId::kClassifyTopKOnly:
      t.system = kSystemTopKOnly;
      t.user_prefix = kUserClassifyVariant;
      break;
    case TemplateId::kClassifyRemoved:
      t.system = replace_all(std::string(kSystemRemoved), "{P}", placeholder);
      t.user_prefix = kUserClassifyVariant;
      break;
  }
  return t;
}

std::vector<ChatMessage> build_prompt(TemplateId id, std::string_view payload,
                                      int k, std::string_view placeholder) {
  if (trim(payload).empty()) {
    throw Error(ErrorCode::kPrecondition, "prompt payload is empty");
  }
  const PromptTemplate t = prompt_template(id, k, placeholder);
  return {ChatMessage{Role::kSystem, t.system},
          ChatMessage{Role::kUser, with_payload(t.user_prefix, payload)}};
}

std::string pe_explain_turn(int k, std::string_view text) {
  return with_payload(with_k(kUserExplainThen, k), text);
}

std::string ep_extract_turn(int k, std::string_view text) {
  return with_payload(with_k(kUserExtractFlow, k), text);
}

std::string ep_classify_turn(std::string_view text) {
  return with_payload(kUserClassifyThen, text);
}

std::optional<RecognizedPrompt> recognize_user_turn(std::string_view content) {
  static const std::vector<std::pair<std::string, PromptKind>> kPatterns = {
      {kUserClassifyFull, PromptKind::kClassify},
      {kUserClassifyVariant, PromptKind::kClassify},
      {kUserClassifyThen, PromptKind::kClassify},
      {std::string(kUserExtract), PromptKind::kExtract},
      {std::string(kUserExtractFlow), PromptKind::kExtract},
      {std::string(kUserExplainThen), PromptKind::kExtract},
  };
  for (const auto& [tmpl, kind] : kPatterns) {
    if (auto m = match_template(content, tmpl, kind)) return m;
  }
  return std::nullopt;
}

std::variant<Emotion, MalformedOutput> parse_label(std::string_view text) {
  const std::string_view t = trim(text);
  MalformedOutput bad;
  bad.raw_text = std::string(text);
  if (t.empty()) {
    bad.reason = MalformedReason::kEmptyOutput;
    return bad;
  }
  if (t.size() != 1 || t[0] < '0' || t[0] > '5') {
    bad.reason = MalformedReason::kNotASingleDigit;
    return bad;
  }
  return label_from_code(t[0] - '0');
}

std::variant<Explanation, MalformedOutput> parse_topk_csv(
    std::string_view text, std::string_view original_text, int k) {
  MalformedOutput bad;
  bad.stage = TemplateId::kExtractTopK;
  bad.raw_text = std::string(text);
  if (trim(text).empty()) {
    bad.reason = MalformedReason::kEmptyOutput;
    return bad;
  }
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view piece = trim(text.substr(start, comma - start));
    if (!piece.empty()) words.push_back(nfc(piece));
    start = comma + 1;
  }
  if (static_cast<int>(words.size()) != k) {
    bad.reason = MalformedReason::kWrongWordCount;
    return bad;
  }
  const auto matches = validate_words_in_text(words, original_text);
  std::map<std::string, std::size_t> seen;
  for (const WordMatch& m : matches) {
    if (!m.matched || ++seen[m.word] > m.positions.size()) {
      bad.reason = MalformedReason::kWordNotInText;
      return bad;
    }
  }
  Explanation e;
  e.words = std::move(words);
  return e;
}

std::variant<Prediction, MalformedOutput> prediction_from_completion(
    const CompletionResult& completion, const std::string& request_key,
    const Sample& sample, const std::string& source,
    std::optional<Paradigm> paradigm, InputVariant variant, TemplateId stage) {
  auto parsed = parse_label(completion.text);
  if (auto* bad = std::get_if<MalformedOutput>(&parsed)) {
    bad->sample_id = sample.id;
    bad->stage = stage;
    return *bad;
  }
  const TokenLogprobs* label_token = nullptr;
  for (const TokenLogprobs& t : completion.token_logprobs) {
    if (!trim(t.token).empty()) {
      label_token = &t;
      break;
    }
  }
  if (label_token == nullptr) {
    throw Error(ErrorCode::kProtocolError,
                "completion for " + sample.id + " carries no token log-probabilities");
  }
  const LabelDistribution dist = distribution_from_logprobs(label_token->candidates);
  const Emotion emitted = std::get<Emotion>(parsed);
  nlohmann::json raw{{"request_key", request_key},
                     {"text", completion.text},
                     {"label_token", label_token->token},
                     {"candidates", label_token->candidates}};
  if (dist.argmax() != emitted) raw["label_mismatch"] = true;
  return Prediction::from_distribution(sample.id, source, paradigm, variant, dist,
                                       std::move(raw));
}

namespace {

struct Turn {
  CompletionResult completion;
  std::string key;
};

Turn send(Gateway& gateway, std::vector<ChatMessage>& messages) {
  Turn t;
  t.key = request_key(gateway.config(), messages);
  t.completion = gateway.send_chat(messages);
  messages.push_back(ChatMessage{Role::kAssistant, t.completion.text});
  return t;
}

void classify_into(FlowOutcome& out, const Turn& turn, const Sample& sample,
                   const std::string& source, std::optional<Paradigm> paradigm,
                   InputVariant variant, TemplateId stage) {
  auto result = prediction_from_completion(turn.completion, turn.key, sample,
                                           source, paradigm, variant, stage);
  if (auto* p = std::get_if<Prediction>(&result)) {
    out.prediction = std::move(*p);
  } else {
    out.malformed.push_back(std::get<MalformedOutput>(std::move(result)));
  }
}

void explain_into(FlowOutcome& out, const Turn& turn, const Sample& sample,
                  const std::string& source, Paradigm paradigm, int k) {
  auto result = parse_topk_csv(turn.completion.text, sample.text, k);
  if (auto* e = std::get_if<Explanation>(&result)) {
    e->sample_id = sample.id;
    e->source = source;
    e->paradigm = paradigm;
    out.explanation = std::move(*e);
  } else {
    auto bad = std::get<MalformedOutput>(std::move(result));
    bad.sample_id = sample.id;
    out.malformed.push_back(std::move(bad));
  }
}

FlowOutcome begin_flow(const Gateway& gateway, const Sample& sample,
                       std::string flow, std::optional<Paradigm> paradigm) {
  if (trim(sample.text).empty()) {
    throw Error(ErrorCode::kPrecondition, "sample " + sample.id + " has empty text");
  }
  FlowOutcome out;
  out.transcript.sample_id = sample.id;
  out.transcript.source = gateway.config().source;
  out.transcript.flow = std::move(flow);
  out.transcript.paradigm = paradigm;
  return out;
}

}  // namespace

FlowOutcome run_pe(Gateway& gateway, const Sample& sample, int k) {
  FlowOutcome out = begin_flow(gateway, sample, "PE", Paradigm::kPE);
  const std::string& source = gateway.config().source;
  auto& msgs = out.transcript.messages;
  msgs = build_prompt(TemplateId::kClassifyFull, sample.text, k);

  const Turn classify = send(gateway, msgs);
  classify_into(out, classify, sample, source, Paradigm::kPE,
                InputVariant::kFullText, TemplateId::kClassifyFull);
  if (!out.ok()) return out;

  msgs.push_back(ChatMessage{Role::kUser, pe_explain_turn(k, sample.text)});
  const Turn explain = send(gateway, msgs);
  explain_into(out, explain, sample, source, Paradigm::kPE, k);
  return out;
}

FlowOutcome run_ep(Gateway& gateway, const Sample& sample, int k) {
  FlowOutcome out = begin_flow(gateway, sample, "EP", Paradigm::kEP);
  const std::string& source = gateway.config().source;
  auto& msgs = out.transcript.messages;
  msgs.push_back(ChatMessage{Role::kSystem,
                             prompt_template(TemplateId::kExtractTopK, k).system});
  msgs.push_back(ChatMessage{Role::kUser, ep_extract_turn(k, sample.text)});

  const Turn explain = send(gateway, msgs);
  explain_into(out, explain, sample, source, Paradigm::kEP, k);
  if (!out.ok()) return out;

  msgs.push_back(ChatMessage{Role::kUser, ep_classify_turn(sample.text)});
  const Turn classify = send(gateway, msgs);
  classify_into(out, classify, sample, source, Paradigm::kEP,
                InputVariant::kFullText, TemplateId::kClassifyFull);
  return out;
}

FlowOutcome run_variant(Gateway& gateway, const Sample& sample,
                        const Explanation& explanation, InputVariant variant,
                        int k, std::string_view placeholder) {
  if (variant == InputVariant::kFullText) {
    throw Error(ErrorCode::kPrecondition, "run_variant needs TopKOnly or TopKRemoved");
  }
  if (explanation.words.empty()) {
    throw Error(ErrorCode::kPrecondition, "explanation has no words");
  }
  FlowOutcome out = begin_flow(gateway, sample, std::string(to_string(variant)),
                               explanation.paradigm);
  out.explanation = explanation;
  TemplateId id = TemplateId::kClassifyTopKOnly;
  std::string payload;
  if (variant == InputVariant::kTopKOnly) {
    payload = topk_only_payload(explanation.words);
  } else {
    id = TemplateId::kClassifyRemoved;
    MaskResult masked = mask_topk(sample.text, explanation.words, placeholder);
    masked.report.sample_id = sample.id;
    payload = std::move(masked.text);
    out.masking = std::move(masked.report);
  }
  auto& msgs = out.transcript.messages;
  msgs = build_prompt(id, payload, k, placeholder);
  const Turn turn = send(gateway, msgs);
  classify_into(out, turn, sample, gateway.config().source, explanation.paradigm,
                variant, id);
  return out;
}

void to_json(nlohmann::json& j, const Transcript& t) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : t.messages) msgs.push_back(m);
  j = nlohmann::json{{"sample_id", t.sample_id},
                     {"source", t.source},
                     {"flow", t.flow},
                     {"paradigm", t.paradigm ? nlohmann::json(to_string(*t.paradigm))
                                             : nlohmann::json(nullptr)},
                     {"messages", std::move(msgs)}};
}

void from_json(const nlohmann::json& j, Transcript& t) {
  t.sample_id = j.at("sample_id").get<std::string>();
  t.source = j.at("source").get<std::string>();
  t.flow = j.at("flow").get<std::string>();
  const auto& p = j.value("paradigm", nlohmann::json());
  t.paradigm = p.is_null() ? std::nullopt
                           : std::optional(parse_paradigm(p.get<std::string>()));
  t.messages = j.at("messages").get<std::vector<ChatMessage>>();
}

void to_json(nlohmann::json& j, const MalformedOutput& m) {
  j = nlohmann::json{{"sample_id", m.sample_id},
                     {"stage", to_string(m.stage)},
                     {"raw_text", m.raw_text},
                     {"reason", to_string(m.reason)}};
}

void to_json(nlohmann::json& j, const MaskingReport& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"counts", r.counts},
                     {"fallback_used", r.fallback_used},
                     {"unmatched", r.unmatched}};
}

void from_json(const nlohmann::json& j, MaskingReport& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.counts = j.at("counts").get<std::map<std::string, int>>();
  r.fallback_used = j.at("fallback_used").get<bool>();
  r.unmatched = j.at("unmatched").get<std::vector<std::string>>();
}

}  // namespace selfx
