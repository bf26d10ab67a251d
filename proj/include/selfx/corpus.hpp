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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "selfx/domain.hpp"

namespace selfx {

struct Corpus {
  std::vector<Sample> samples;
  std::size_t skipped_labels = 0;  // rows with a label outside 0-5
};

// JSONL {"id","text","label"} or CSV with header id,text,label, chosen by
// extension (.jsonl/.json vs .csv). Text is normalized. Throws kParseError
// (with line number), kDuplicateId, kIoError.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_jsonl_corpus(const std::string& content);
Corpus parse_csv_corpus(const std::string& content);

struct SplitConfig {
  std::size_t eval_per_class = 50;
  std::size_t calib_per_class = 35;
  std::uint64_t seed = 13;
};

struct SplitResult {
  std::vector<Sample> evaluation;
  std::vector<Sample> calibration;
};

// Per class: sort by id, seeded shuffle, first eval_per_class to evaluation,
// next calib_per_class to calibration. Output ordered by class then shuffle
// position. Throws kInsufficientClassCount naming the class.
SplitResult balanced_split(const std::vector<Sample>& samples,
                           const SplitConfig& config);

// Fisher-Yates with mt19937_64, j = rng() % (i + 1), i from n-1 down to 1.
template <typename T, typename Rng>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace selfx
