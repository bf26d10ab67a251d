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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "selfx/domain.hpp"
#include "selfx/gateway.hpp"

namespace selfx {

struct LexiconEntry {
  Emotion label = Emotion::kSadness;
  double weight = 1.0;
};

// Word -> (emotion, weight). Words are stored NFC-normalized.
class MockLexicon {
 public:
  MockLexicon() = default;
  explicit MockLexicon(std::map<std::string, LexiconEntry> entries);

  // {"words": [{"word": str, "label": int, "weight": num}, ...]}
  static MockLexicon from_json(const nlohmann::json& j);
  static MockLexicon load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const LexiconEntry* find(const std::string& word) const;
  const std::map<std::string, LexiconEntry>& entries() const { return entries_; }

 private:
  std::map<std::string, LexiconEntry> entries_;
};

// Deterministic stand-in for a chat model. Reads the last user turn:
//  - classification: each token (punctuation-stripped) adds its lexicon
//    weight to its emotion's score; the reply is the argmax digit (lowest
//    code on ties) with logprobs log softmax(scores) over "0".."5".
//  - extraction: the k distinct matched lexicon words by descending weight
//    (first occurrence breaks ties), padded with the longest remaining
//    tokens, joined by ", ".
// Throws kUnrecognizedPrompt when the turn matches no template.
CompletionResult mock_complete(const MockLexicon& lexicon,
                               std::span<const ChatMessage> messages);

// Scores used by mock_complete for a classification payload.
std::array<double, kNumLabels> mock_scores(const MockLexicon& lexicon,
                                           std::string_view payload);

class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(MockLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  CompletionResult complete(const GatewayConfig& config,
                            std::span<const ChatMessage> messages) override;

 private:
  MockLexicon lexicon_;
};

}  // namespace selfx
