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

#include "selfx/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "selfx/errors.hpp"
#include "selfx/perturb.hpp"
#include "selfx/protocol.hpp"

namespace selfx {

MockLexicon::MockLexicon(std::map<std::string, LexiconEntry> entries) {
  for (auto& [word, entry] : entries) entries_[nfc(word)] = entry;
}

MockLexicon MockLexicon::from_json(const nlohmann::json& j) {
  std::map<std::string, LexiconEntry> entries;
  for (const auto& w : j.at("words")) {
    LexiconEntry e;
    e.label = label_from_code(w.at("label").get<int>());
    e.weight = w.value("weight", 1.0);
    entries[w.at("word").get<std::string>()] = e;
  }
  return MockLexicon(std::move(entries));
}

MockLexicon MockLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open lexicon " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

nlohmann::json MockLexicon::to_json() const {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& [word, e] : entries_) {
    words.push_back({{"word", word}, {"label", code(e.label)}, {"weight", e.weight}});
  }
  return {{"words", std::move(words)}};
}

const LexiconEntry* MockLexicon::find(const std::string& word) const {
  const auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

std::array<double, kNumLabels> mock_scores(const MockLexicon& lexicon,
                                           std::string_view payload) {
  std::array<double, kNumLabels> scores{};
  for (const Token& t : tokenize(payload)) {
    if (const LexiconEntry* e = lexicon.find(t.core)) {
      scores[code(e->label)] += e->weight;
    }
  }
  return scores;
}

namespace {

CompletionResult classify(const MockLexicon& lexicon, std::string_view payload) {
  const auto scores = mock_scores(lexicon, payload);
  const double max_score = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - max_score);
  const double log_z = max_score + std::log(z);

  int best = 0;
  for (int i = 1; i < kNumLabels; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  TokenLogprobs tok;
  tok.token = std::to_string(best);
  for (int i = 0; i < kNumLabels; ++i) {
    tok.candidates[std::to_string(i)] = std::min(0.0, scores[i] - log_z);
  }
  CompletionResult r;
  r.text = tok.token;
  r.token_logprobs.push_back(std::move(tok));
  return r;
}

CompletionResult extract(const MockLexicon& lexicon, std::string_view payload,
                         int k) {
  struct Candidate {
    std::string word;
    double weight;
    std::size_t length;
    std::size_t position;
  };
  std::vector<Candidate> matched;
  std::vector<Candidate> others;
  std::set<std::string> seen;
  std::size_t position = 0;
  for (const Token& t : tokenize(payload)) {
    ++position;
    if (t.core.empty() || !seen.insert(t.core).second) continue;
    if (const LexiconEntry* e = lexicon.find(t.core)) {
      matched.push_back({t.core, e->weight, 0, position});
    } else {
      others.push_back({t.core, 0.0, codepoint_length(t.core), position});
    }
  }
  std::stable_sort(matched.begin(), matched.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.weight > b.weight;
                   });
  std::stable_sort(others.begin(), others.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.length > b.length;
                   });
  std::vector<std::string> words;
  for (const auto* pool : {&matched, &others}) {
    for (const Candidate& c : *pool) {
      if (static_cast<int>(words.size()) >= k) break;
      words.push_back(c.word);
    }
  }
  CompletionResult r;
  r.text = topk_only_payload(words);
  TokenLogprobs tok;
  tok.token = r.text;
  tok.candidates[r.text] = 0.0;
  r.token_logprobs.push_back(std::move(tok));
  return r;
}

}  // namespace

CompletionResult mock_complete(const MockLexicon& lexicon,
                               std::span<const ChatMessage> messages) {
  const ChatMessage* last_user = nullptr;
  for (const ChatMessage& m : messages) {
    if (m.role == Role::kUser) last_user = &m;
  }
  if (last_user == nullptr) {
    throw Error(ErrorCode::kUnrecognizedPrompt, "conversation has no user turn");
  }
  const auto recognized = recognize_user_turn(last_user->content);
  if (!recognized) {
    throw Error(ErrorCode::kUnrecognizedPrompt,
                "user turn matches no prompt template");
  }
  if (recognized->kind == PromptKind::kClassify) {
    return classify(lexicon, recognized->payload);
  }
  return extract(lexicon, recognized->payload, recognized->k);
}

CompletionResult MockBackend::complete(const GatewayConfig& config,
                                       std::span<const ChatMessage> messages) {
  CompletionResult r = mock_complete(lexicon_, messages);
  r.model_id = config.model;
  return r;
}

}  // namespace selfx
