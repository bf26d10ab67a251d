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

#include "selfx/domain.hpp"

#include <cmath>
#include <utility>

#include "selfx/errors.hpp"

namespace selfx {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kPrecondition: return "PreconditionViolation";
    case ErrorCode::kNetworkError: return "NetworkError";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kCacheMiss: return "CacheMiss";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kUnrecognizedPrompt: return "UnrecognizedPrompt";
    case ErrorCode::kNoLabelMass: return "NoLabelMass";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kInsufficientClassCount: return "InsufficientClassCount";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kStage1Incomplete: return "Stage1Incomplete";
    case ErrorCode::kNotAssigned: return "NotAssigned";
    case ErrorCode::kInvalidWordSelection: return "InvalidWordSelection";
    case ErrorCode::kDuplicate: return "Duplicate";
    case ErrorCode::kNotFound: return "NotFound";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "Sadness", "Happiness", "Anger", "Surprise", "Hatred", "Fear"};

}  // namespace

Emotion label_from_code(int code) {
  if (code < 0 || code >= kNumLabels) {
    throw Error(ErrorCode::kOutOfRange,
                "emotion code " + std::to_string(code) + " not in [0, 5]");
  }
  return static_cast<Emotion>(code);
}

std::string_view label_name(Emotion label) { return kLabelNames[code(label)]; }

std::optional<Emotion> label_from_name(std::string_view name) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (kLabelNames[i] == name) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Split split) {
  return split == Split::kCalibration ? "calibration" : "evaluation";
}

std::string_view to_string(Paradigm paradigm) {
  return paradigm == Paradigm::kPE ? "PE" : "EP";
}

std::string_view to_string(InputVariant variant) {
  switch (variant) {
    case InputVariant::kFullText: return "FullText";
    case InputVariant::kTopKOnly: return "TopKOnly";
    case InputVariant::kTopKRemoved: return "TopKRemoved";
  }
  return "FullText";
}

Split parse_split(std::string_view text) {
  if (text == "calibration") return Split::kCalibration;
  if (text == "evaluation") return Split::kEvaluation;
  throw Error(ErrorCode::kParseError, "unknown split '" + std::string(text) + "'");
}

Paradigm parse_paradigm(std::string_view text) {
  if (text == "PE" || text == "P-E") return Paradigm::kPE;
  if (text == "EP" || text == "E-P") return Paradigm::kEP;
  throw Error(ErrorCode::kParseError,
              "unknown paradigm '" + std::string(text) + "'");
}

InputVariant parse_variant(std::string_view text) {
  for (InputVariant v : kAllVariants) {
    if (to_string(v) == text) return v;
  }
  throw Error(ErrorCode::kParseError,
              "unknown input variant '" + std::string(text) + "'");
}

Emotion LabelDistribution::argmax() const {
  int best = 0;
  for (int i = 1; i < kNumLabels; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<Emotion>(best);
}

bool LabelDistribution::is_valid() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

LabelDistribution LabelDistribution::uniform() {
  LabelDistribution d;
  d.probs.fill(1.0 / kNumLabels);
  return d;
}

Prediction Prediction::from_distribution(std::string sample_id,
                                         std::string source,
                                         std::optional<Paradigm> paradigm,
                                         InputVariant variant,
                                         const LabelDistribution& dist,
                                         nlohmann::json raw) {
  if (!dist.is_valid()) {
    throw Error(ErrorCode::kPrecondition,
                "label distribution for " + sample_id + " is not normalized");
  }
  Prediction p;
  p.sample_id = std::move(sample_id);
  p.source = std::move(source);
  p.paradigm = paradigm;
  p.variant = variant;
  p.label = dist.argmax();
  p.distribution = dist;
  p.confidence = dist[p.label];
  p.raw = std::move(raw);
  return p;
}

Prediction Prediction::label_only(std::string sample_id, std::string source,
                                  std::optional<Paradigm> paradigm,
                                  InputVariant variant, Emotion label) {
  Prediction p;
  p.sample_id = std::move(sample_id);
  p.source = std::move(source);
  p.paradigm = paradigm;
  p.variant = variant;
  p.label = label;
  return p;
}

void to_json(nlohmann::json& j, const Sample& s) {
  j = nlohmann::json{{"id", s.id},
                     {"text", s.text},
                     {"label", code(s.gold)},
                     {"split", to_string(s.split)}};
}

void from_json(const nlohmann::json& j, Sample& s) {
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.gold = label_from_code(j.at("label").get<int>());
  s.split = j.contains("split") ? parse_split(j.at("split").get<std::string>())
                                : Split::kEvaluation;
}

void to_json(nlohmann::json& j, const LabelDistribution& d) {
  j = nlohmann::json::array();
  for (double p : d.probs) j.push_back(p);
}

void from_json(const nlohmann::json& j, LabelDistribution& d) {
  if (!j.is_array() || j.size() != kNumLabels) {
    throw Error(ErrorCode::kParseError, "distribution must have 6 entries");
  }
  for (int i = 0; i < kNumLabels; ++i) d.probs[i] = j[i].get<double>();
}

namespace {

nlohmann::json paradigm_json(const std::optional<Paradigm>& p) {
  return p ? nlohmann::json(to_string(*p)) : nlohmann::json(nullptr);
}

std::optional<Paradigm> paradigm_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return parse_paradigm(j.get<std::string>());
}

}  // namespace

void to_json(nlohmann::json& j, const Explanation& e) {
  j = nlohmann::json{{"sample_id", e.sample_id},
                     {"source", e.source},
                     {"paradigm", paradigm_json(e.paradigm)},
                     {"words", e.words}};
}

void from_json(const nlohmann::json& j, Explanation& e) {
  e.sample_id = j.at("sample_id").get<std::string>();
  e.source = j.at("source").get<std::string>();
  e.paradigm = paradigm_from(j.value("paradigm", nlohmann::json()));
  e.words = j.at("words").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{{"sample_id", p.sample_id},
                     {"source", p.source},
                     {"paradigm", paradigm_json(p.paradigm)},
                     {"variant", to_string(p.variant)},
                     {"label", code(p.label)}};
  j["distribution"] =
      p.distribution ? nlohmann::json(*p.distribution) : nlohmann::json(nullptr);
  j["confidence"] =
      p.confidence ? nlohmann::json(*p.confidence) : nlohmann::json(nullptr);
  j["raw"] = p.raw.is_null() ? nlohmann::json::object() : p.raw;
}

void from_json(const nlohmann::json& j, Prediction& p) {
  p.sample_id = j.at("sample_id").get<std::string>();
  p.source = j.at("source").get<std::string>();
  p.paradigm = paradigm_from(j.value("paradigm", nlohmann::json()));
  p.variant = parse_variant(j.at("variant").get<std::string>());
  p.label = label_from_code(j.at("label").get<int>());
  const auto& dist = j.value("distribution", nlohmann::json());
  if (dist.is_null()) {
    p.distribution.reset();
  } else {
    p.distribution = dist.get<LabelDistribution>();
  }
  const auto& conf = j.value("confidence", nlohmann::json());
  if (conf.is_null()) {
    p.confidence.reset();
  } else {
    p.confidence = conf.get<double>();
  }
  p.raw = j.value("raw", nlohmann::json::object());
}

}  // namespace selfx
