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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfx {

// Placeholder substituted for masked words in Persian payloads.
inline constexpr std::string_view kDefaultPlaceholder = "[حذف شده]";
inline constexpr std::string_view kZwnj = "\u200c";

// NFC, horizontal whitespace runs collapsed to one space, ends trimmed.
// ZWNJ is never touched. Idempotent.
std::string normalize_text(std::string_view text);

// NFC only.
std::string nfc(std::string_view text);

// Removes leading/trailing whitespace (not ZWNJ).
std::string_view trim(std::string_view text);

std::size_t codepoint_length(std::string_view text);

// Whitespace-delimited token. `core` is the token with leading and trailing
// Unicode punctuation removed; offsets are byte offsets into the source text.
struct Token {
  std::string text;
  std::string core;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t core_begin = 0;
  std::size_t core_end = 0;
};

std::vector<Token> tokenize(std::string_view text);

struct WordMatch {
  std::string word;
  bool matched = false;
  bool fallback = false;  // substring-level match, no token hit
  std::vector<std::size_t> positions;  // byte offsets of each occurrence
};

// Token match on punctuation-stripped cores first; substring occurrence
// otherwise, flagged as fallback. Inputs are expected NFC-normalized.
std::vector<WordMatch> validate_words_in_text(std::span<const std::string> words,
                                              std::string_view text);

struct MaskingReport {
  std::string sample_id;
  std::map<std::string, int> counts;  // matched word -> occurrences replaced
  bool fallback_used = false;
  std::vector<std::string> unmatched;
};

struct MaskResult {
  std::string text;
  MaskingReport report;
};

// Replaces every occurrence of every word with `placeholder`. Token-level hits
// first, substring fallback for words with no token hit, longest word claimed
// first. Punctuation around a token is preserved. Throws kPrecondition when
// the placeholder equals one of the words.
MaskResult mask_topk(std::string_view text, std::span<const std::string> words,
                     std::string_view placeholder);

// Words joined by ", " in explanation order.
std::string topk_only_payload(std::span<const std::string> words);

}  // namespace selfx
