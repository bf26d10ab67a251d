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

#include "selfx/perturb.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "selfx/errors.hpp"

namespace selfx {
namespace {

constexpr UChar32 kZwnjCp = 0x200C;

// Decodes one code point at `pos`; returns U+FFFD for malformed input.
UChar32 next_cp(std::string_view s, std::size_t& pos) {
  int32_t i = static_cast<int32_t>(pos);
  UChar32 c;
  U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), i,
          static_cast<int32_t>(s.size()), c);
  pos = static_cast<std::size_t>(i);
  return c < 0 ? 0xFFFD : c;
}

bool is_space(UChar32 c) { return c != kZwnjCp && u_isUWhiteSpace(c); }

bool is_horizontal_space(UChar32 c) {
  return is_space(c) && c != '\n' && c != '\r' && c != 0x0B && c != 0x0C &&
         c != 0x85 && c != 0x2028 && c != 0x2029;
}

bool is_punct(UChar32 c) { return u_ispunct(c); }

}  // namespace

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kPrecondition, "ICU NFC normalizer unavailable");
  }
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (norm->isNormalized(src, status) && U_SUCCESS(status)) {
    return std::string(text);
  }
  status = U_ZERO_ERROR;
  icu::UnicodeString out = norm->normalize(src, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kPrecondition, "NFC normalization failed");
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

std::string_view trim(std::string_view text) {
  std::size_t begin = 0;
  while (begin < text.size()) {
    std::size_t next = begin;
    if (!is_space(next_cp(text, next))) break;
    begin = next;
  }
  std::size_t end = begin;
  std::size_t pos = begin;
  while (pos < text.size()) {
    UChar32 c = next_cp(text, pos);
    if (!is_space(c)) end = pos;
  }
  return text.substr(begin, end - begin);
}

std::size_t codepoint_length(std::string_view text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    next_cp(text, pos);
    ++n;
  }
  return n;
}

std::string normalize_text(std::string_view text) {
  const std::string composed = nfc(text);
  std::string out;
  out.reserve(composed.size());
  std::size_t pos = 0;
  bool pending_space = false;
  while (pos < composed.size()) {
    const std::size_t start = pos;
    const UChar32 c = next_cp(composed, pos);
    if (is_horizontal_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.append(composed, start, pos - start);
  }
  return std::string(trim(out));
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t start = pos;
    UChar32 c = next_cp(text, pos);
    if (is_space(c)) continue;
    std::size_t end = pos;
    while (pos < text.size()) {
      std::size_t probe = pos;
      if (is_space(next_cp(text, probe))) break;
      pos = probe;
      end = pos;
    }
    Token tok;
    tok.begin = start;
    tok.end = end;
    tok.text = std::string(text.substr(start, end - start));

    // Strip punctuation from both ends of the token.
    std::vector<std::pair<std::size_t, UChar32>> cps;
    for (std::size_t p = start; p < end;) {
      std::size_t at = p;
      cps.emplace_back(at, next_cp(text, p));
    }
    std::size_t first = 0;
    std::size_t last = cps.size();
    while (first < last && is_punct(cps[first].second)) ++first;
    while (last > first && is_punct(cps[last - 1].second)) --last;
    tok.core_begin = first < cps.size() ? cps[first].first : end;
    tok.core_end = last < cps.size() ? cps[last].first : end;
    if (first >= last) tok.core_begin = tok.core_end = end;
    tok.core = std::string(text.substr(tok.core_begin, tok.core_end - tok.core_begin));
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

namespace {

std::vector<std::size_t> substring_positions(std::string_view text,
                                             std::string_view word) {
  std::vector<std::size_t> out;
  if (word.empty()) return out;
  std::size_t pos = text.find(word);
  while (pos != std::string_view::npos) {
    out.push_back(pos);
    pos = text.find(word, pos + word.size());
  }
  return out;
}

}  // namespace

std::vector<WordMatch> validate_words_in_text(std::span<const std::string> words,
                                              std::string_view text) {
  const std::vector<Token> tokens = tokenize(text);
  std::vector<WordMatch> out;
  out.reserve(words.size());
  for (const std::string& word : words) {
    WordMatch m;
    m.word = word;
    if (!word.empty()) {
      for (const Token& t : tokens) {
        if (t.core == word) m.positions.push_back(t.core_begin);
      }
      if (m.positions.empty()) {
        m.positions = substring_positions(text, word);
        m.fallback = !m.positions.empty();
      }
    }
    m.matched = !m.positions.empty();
    out.push_back(std::move(m));
  }
  return out;
}

MaskResult mask_topk(std::string_view text, std::span<const std::string> words,
                     std::string_view placeholder) {
  MaskResult result;
  for (const std::string& w : words) {
    if (w == placeholder) {
      throw Error(ErrorCode::kPrecondition,
                  "placeholder must differ from every masked word");
    }
  }
  if (words.empty()) {
    result.text = std::string(text);
    return result;
  }

  // Distinct words, longest first; stable on explanation order.
  std::vector<std::string> order;
  for (const std::string& w : words) {
    if (!w.empty() && std::find(order.begin(), order.end(), w) == order.end()) {
      order.push_back(w);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const std::string& a, const std::string& b) {
                     return codepoint_length(a) > codepoint_length(b);
                   });

  const std::vector<Token> tokens = tokenize(text);
  std::vector<std::pair<std::size_t, std::size_t>> claimed;  // [begin, end)
  auto overlaps = [&claimed](std::size_t b, std::size_t e) {
    return std::any_of(claimed.begin(), claimed.end(), [&](const auto& r) {
      return b < r.second && r.first < e;
    });
  };

  for (const std::string& word : order) {
    int hits = 0;
    for (const Token& t : tokens) {
      if (t.core == word && !overlaps(t.core_begin, t.core_end)) {
        claimed.emplace_back(t.core_begin, t.core_end);
        ++hits;
      }
    }
    if (hits == 0) {
      for (std::size_t p : substring_positions(text, word)) {
        if (!overlaps(p, p + word.size())) {
          claimed.emplace_back(p, p + word.size());
          ++hits;
        }
      }
      if (hits > 0) result.report.fallback_used = true;
    }
    if (hits > 0) {
      result.report.counts[word] = hits;
    } else {
      result.report.unmatched.push_back(word);
    }
  }
  // Report unmatched words in explanation order.
  std::vector<std::string> unmatched;
  for (const std::string& w : words) {
    if (std::find(result.report.unmatched.begin(), result.report.unmatched.end(),
                  w) != result.report.unmatched.end() &&
        std::find(unmatched.begin(), unmatched.end(), w) == unmatched.end()) {
      unmatched.push_back(w);
    }
  }
  result.report.unmatched = std::move(unmatched);

  std::sort(claimed.begin(), claimed.end());
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const auto& [b, e] : claimed) {
    out.append(text.substr(cursor, b - cursor));
    out.append(placeholder);
    cursor = e;
  }
  out.append(text.substr(cursor));
  result.text = normalize_text(out);
  return result;
}

std::string topk_only_payload(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ", ";
    out += words[i];
  }
  return out;
}

}  // namespace selfx
