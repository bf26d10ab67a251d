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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfx/domain.hpp"

namespace selfx {

// conf_full - conf_removed. May be negative.
double comprehensiveness(double conf_full, double conf_removed);
// conf_full - conf_topk_only. Negative when the words alone are more
// confident than the full text.
double sufficiency(double conf_full, double conf_topk_only);

// Throws kPrecondition when either prediction carries no confidence (human
// sources have labels only).
double comprehensiveness(const Prediction& full, const Prediction& removed);
double sufficiency(const Prediction& full, const Prediction& topk_only);

// Fraction of index-aligned pairs whose labels differ.
double decision_flip_rate(std::span<const Emotion> labels_full,
                          std::span<const Emotion> labels_variant);

using WordSet = std::set<std::string>;

// NFC-normalized set; duplicates collapse.
WordSet to_word_set(std::span<const std::string> words);

// |A n B| / k. Throws kSizeMismatch unless |A| = |B| = k.
double feature_agreement(const WordSet& a, const WordSet& b, int k);
// |A n B| / |A u B|. Throws kEmptyInput if either set is empty.
double iou(const WordSet& a, const WordSet& b);

struct AgreementCell {
  std::string source_a;
  std::string source_b;
  double feature_agreement = 0.0;
  double iou = 0.0;
  std::size_t n_matched = 0;   // samples where both sources chose the same label
  std::size_t n_skipped = 0;   // label-matching samples with fewer than k distinct words
};

// One participant: top-k words and full-text label per included sample.
struct AgreementSource {
  std::string source;
  std::map<std::string, std::vector<std::string>> words;
  std::map<std::string, Emotion> labels;
};

struct AgreementMatrix {
  std::vector<std::string> sources;
  // cells[i][j] is absent when sources i and j never agree on a label.
  std::vector<std::vector<std::optional<AgreementCell>>> cells;
};

// For each source pair, averages feature_agreement and iou over samples
// present in both where both predicted the same label.
AgreementMatrix pairwise_agreement(std::span<const AgreementSource> sources, int k);

// Single cell; throws kNoOverlap when no sample has matching labels.
AgreementCell agreement_cell(const AgreementSource& a, const AgreementSource& b,
                             int k);

struct ClassMetrics {
  Emotion label = Emotion::kSadness;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
  bool never_predicted = false;  // precision set to 0
};

struct ClassificationReport {
  std::array<ClassMetrics, kNumLabels> per_class{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  // confusion[gold][predicted]
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};
  std::size_t n = 0;
};

ClassificationReport classification_report(std::span<const Emotion> predicted,
                                           std::span<const Emotion> gold);

// Table-4 style row. comp/suff absent for label-only sources; df values
// absent when no variant predictions exist.
struct FaithfulnessRow {
  std::string source;
  std::optional<Paradigm> paradigm;
  std::optional<double> comp;
  std::optional<double> suff;
  std::optional<double> df_removed;
  std::optional<double> df_only;
  std::size_t n = 0;
};

// Per-sample (full, topk_only, topk_removed) predictions of one source.
struct VariantTriple {
  const Prediction* full = nullptr;
  const Prediction* topk_only = nullptr;
  const Prediction* topk_removed = nullptr;
};

// Arithmetic means over the triples. When `temperature` is set, every
// confidence is recomputed from its distribution scaled by T.
FaithfulnessRow faithfulness_row(const std::string& source,
                                 std::optional<Paradigm> paradigm,
                                 std::span<const VariantTriple> triples,
                                 std::optional<double> temperature = std::nullopt);

// Confidence of the prediction, optionally after temperature scaling.
double confidence_of(const Prediction& p, std::optional<double> temperature);

void to_json(nlohmann::json& j, const AgreementCell& c);
void to_json(nlohmann::json& j, const ClassMetrics& m);
void to_json(nlohmann::json& j, const ClassificationReport& r);
void to_json(nlohmann::json& j, const FaithfulnessRow& r);

}  // namespace selfx
