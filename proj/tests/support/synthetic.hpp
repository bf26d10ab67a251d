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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfx/domain.hpp"

namespace selfx::testing {

struct LexWord {
  std::string word;
  int label = 0;
  double weight = 1.0;
};

// Four words per class, weight 1.
std::vector<LexWord> lexicon_a();
// Three words per class (the fourth is dropped), varied weights.
std::vector<LexWord> lexicon_b();
nlohmann::json lexicon_json(const std::vector<LexWord>& words);

// Neutral words never present in a lexicon.
const std::vector<std::string>& filler_words();

// per_class samples per label. Each text has 2-3 words of its class (or, for
// roughly one in five, one word of its class and two of another), plus 3-5
// distinct fillers, in seeded order. Ids are "s0001", ...
std::vector<Sample> synthetic_corpus(std::size_t per_class, std::uint64_t seed);

std::filesystem::path make_temp_dir(const std::string& tag);
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
void write_jsonl_corpus(const std::filesystem::path& path, const std::vector<Sample>& samples);

struct ScenarioOptions {
  std::size_t per_class = 10;
  std::size_t eval_per_class = 5;
  std::size_t calib_per_class = 5;
  std::uint64_t corpus_seed = 7;
  std::uint64_t split_seed = 13;
  std::vector<std::string> paradigms{"PE", "EP"};
  std::vector<std::string> sources{"mock-a", "mock-b"};
  std::string cache_mode = "off";
  int k = 5;
  int max_concurrency = 4;
};

struct Scenario {
  std::filesystem::path dir;
  std::filesystem::path config;
  std::filesystem::path corpus;
  std::filesystem::path cache;
  std::vector<Sample> samples;
  nlohmann::json config_json;
};

// Writes corpus, lexicons ("mock-a" -> lexicon_a, "mock-b" -> lexicon_b) and
// config.json into dir.
Scenario write_mock_scenario(const std::filesystem::path& dir, const ScenarioOptions& opts);

}  // namespace selfx::testing
