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

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace selfx {

inline constexpr int kNumLabels = 6;
inline constexpr int kDefaultTopK = 5;

enum class Emotion : int {
  kSadness = 0,
  kHappiness = 1,
  kAnger = 2,
  kSurprise = 3,
  kHatred = 4,
  kFear = 5,
};

inline constexpr std::array<Emotion, kNumLabels> kAllEmotions = {
    Emotion::kSadness,  Emotion::kHappiness, Emotion::kAnger,
    Emotion::kSurprise, Emotion::kHatred,    Emotion::kFear};

constexpr int code(Emotion label) { return static_cast<int>(label); }

// Throws Error(kOutOfRange) for codes outside [0, 5].
Emotion label_from_code(int code);
std::string_view label_name(Emotion label);
std::optional<Emotion> label_from_name(std::string_view name);

enum class Split { kCalibration, kEvaluation };
enum class Paradigm { kPE, kEP };
enum class InputVariant { kFullText, kTopKOnly, kTopKRemoved };

inline constexpr std::array<Paradigm, 2> kAllParadigms = {Paradigm::kPE,
                                                          Paradigm::kEP};
inline constexpr std::array<InputVariant, 3> kAllVariants = {
    InputVariant::kFullText, InputVariant::kTopKOnly,
    InputVariant::kTopKRemoved};

std::string_view to_string(Split split);
std::string_view to_string(Paradigm paradigm);
std::string_view to_string(InputVariant variant);
Split parse_split(std::string_view text);
Paradigm parse_paradigm(std::string_view text);
InputVariant parse_variant(std::string_view text);

struct Sample {
  std::string id;
  std::string text;
  Emotion gold = Emotion::kSadness;
  Split split = Split::kEvaluation;
};

// Six-way probability vector indexed by label code.
struct LabelDistribution {
  std::array<double, kNumLabels> probs{};

  // Lowest code wins ties.
  Emotion argmax() const;
  double operator[](Emotion label) const { return probs[code(label)]; }
  // Entries >= 0 and sum within 1e-9 of 1.
  bool is_valid() const;

  static LabelDistribution uniform();
  bool operator==(const LabelDistribution&) const = default;
};

struct Explanation {
  std::string sample_id;
  std::string source;
  std::optional<Paradigm> paradigm;  // absent for human annotators
  std::vector<std::string> words;
};

struct Prediction {
  std::string sample_id;
  std::string source;
  std::optional<Paradigm> paradigm;  // absent for human annotators
  InputVariant variant = InputVariant::kFullText;
  Emotion label = Emotion::kSadness;
  std::optional<LabelDistribution> distribution;
  std::optional<double> confidence;
  nlohmann::json raw;  // provenance: request key, first-token candidates

  bool has_confidence() const { return confidence.has_value(); }

  // label = argmax(dist), confidence = dist[label]. Throws kPrecondition on
  // an invalid distribution.
  static Prediction from_distribution(std::string sample_id, std::string source,
                                      std::optional<Paradigm> paradigm,
                                      InputVariant variant,
                                      const LabelDistribution& dist,
                                      nlohmann::json raw = {});
  static Prediction label_only(std::string sample_id, std::string source,
                               std::optional<Paradigm> paradigm,
                               InputVariant variant, Emotion label);
};

void to_json(nlohmann::json& j, const Sample& s);
void from_json(const nlohmann::json& j, Sample& s);
void to_json(nlohmann::json& j, const LabelDistribution& d);
void from_json(const nlohmann::json& j, LabelDistribution& d);
void to_json(nlohmann::json& j, const Explanation& e);
void from_json(const nlohmann::json& j, Explanation& e);
void to_json(nlohmann::json& j, const Prediction& p);
void from_json(const nlohmann::json& j, Prediction& p);

}  // namespace selfx
