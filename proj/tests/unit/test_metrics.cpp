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


#include <gtest/gtest.h>

#include <vector>

#include "selfx/errors.hpp"
#include "selfx/metrics.hpp"

namespace selfx {
namespace {

TEST(Faithfulness, ComprehensivenessAndSufficiency) {
  EXPECT_NEAR(comprehensiveness(0.9, 0.6), 0.3, 1e-15);
  EXPECT_EQ(comprehensiveness(0.7, 0.7), 0.0);
  EXPECT_NEAR(sufficiency(0.8, 0.9), -0.1, 1e-15);
  EXPECT_EQ(sufficiency(0.4, 0.4), 0.0);
}

TEST(Faithfulness, LabelOnlyPredictionsRejected) {
  const Prediction a = Prediction::label_only("s", "human", std::nullopt,
                                              InputVariant::kFullText, Emotion::kAnger);
  const Prediction b = a;
  try {
    comprehensiveness(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
}

TEST(FlipRate, Cases) {
  std::vector<Emotion> full(10, Emotion::kSadness);
  std::vector<Emotion> var = full;
  EXPECT_EQ(decision_flip_rate(full, var), 0.0);
  var[0] = var[4] = var[9] = Emotion::kFear;
  EXPECT_DOUBLE_EQ(decision_flip_rate(full, var), 0.3);
  for (std::size_t i = 0; i < full.size(); ++i) {
    full[i] = label_from_code(static_cast<int>(i % 6));
    var[i] = label_from_code(static_cast<int>((i + 1) % 6));
  }
  EXPECT_EQ(decision_flip_rate(full, var), 1.0);
  var.pop_back();
  EXPECT_THROW(decision_flip_rate(full, var), Error);
  EXPECT_THROW(decision_flip_rate({}, {}), Error);
}

WordSet ws(std::vector<std::string> v) { return to_word_set(v); }

TEST(Agreement, FeatureAgreementAndIou) {
  const WordSet a = ws({"a", "b", "c", "d", "e"});
  const WordSet b = ws({"a", "b", "x", "y", "z"});
  const WordSet c = ws({"p", "q", "r", "s", "t"});
  EXPECT_DOUBLE_EQ(feature_agreement(a, b, 5), 0.4);
  EXPECT_DOUBLE_EQ(iou(a, b), 0.25);
  EXPECT_EQ(feature_agreement(a, a, 5), 1.0);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(feature_agreement(a, c, 5), 0.0);
  EXPECT_EQ(iou(a, c), 0.0);
}

TEST(Agreement, SizeAndEmptyErrors) {
  try {
    feature_agreement(ws({"a", "b"}), ws({"a", "b", "c", "d", "e"}), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSizeMismatch);
  }
  try {
    iou(ws({}), ws({"a"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(Agreement, WordSetsAreNfc) {
  EXPECT_EQ(ws({"آ", "آ"}).size(), 1u);
}

AgreementSource source(const std::string& name,
                       std::map<std::string, std::pair<Emotion, std::vector<std::string>>> rows) {
  AgreementSource s;
  s.source = name;
  for (auto& [id, row] : rows) {
    s.labels[id] = row.first;
    s.words[id] = row.second;
  }
  return s;
}

TEST(Agreement, IdenticalSources) {
  const auto s = source("m", {{"1", {Emotion::kAnger, {"a", "b", "c", "d", "e"}}},
                              {"2", {Emotion::kFear, {"f", "g", "h", "i", "j"}}}});
  const AgreementCell c = agreement_cell(s, s, 5);
  EXPECT_EQ(c.feature_agreement, 1.0);
  EXPECT_EQ(c.iou, 1.0);
  EXPECT_EQ(c.n_matched, 2u);
}

TEST(Agreement, OnlyLabelMatchingSamplesCount) {
  const auto a = source("a", {{"1", {Emotion::kAnger, {"a", "b", "c", "d", "e"}}},
                              {"2", {Emotion::kFear, {"f", "g", "h", "i", "j"}}},
                              {"3", {Emotion::kFear, {"a", "b", "c", "d", "f"}}}});
  const auto b = source("b", {{"1", {Emotion::kAnger, {"a", "b", "x", "y", "z"}}},
                              {"2", {Emotion::kSadness, {"f", "g", "h", "i", "j"}}},
                              {"3", {Emotion::kFear, {"a", "b", "c", "d", "e"}}}});
  const AgreementCell c = agreement_cell(a, b, 5);
  EXPECT_EQ(c.n_matched, 2u);
  EXPECT_NEAR(c.feature_agreement, (0.4 + 0.8) / 2, 1e-15);
  EXPECT_NEAR(c.iou, (2.0 / 8 + 4.0 / 6) / 2, 1e-15);
}

TEST(Agreement, MatrixLeavesNonOverlappingCellsEmpty) {
  const auto a = source("a", {{"1", {Emotion::kAnger, {"a", "b", "c", "d", "e"}}}});
  const auto b = source("b", {{"1", {Emotion::kFear, {"a", "b", "c", "d", "e"}}}});
  const auto c = source("c", {{"1", {Emotion::kAnger, {"a", "b", "c", "x", "y"}}}});
  const std::vector<AgreementSource> all = {a, b, c};
  const AgreementMatrix m = pairwise_agreement(all, 5);
  ASSERT_EQ(m.sources.size(), 3u);
  EXPECT_FALSE(m.cells[0][1]);
  EXPECT_FALSE(m.cells[1][0]);
  ASSERT_TRUE(m.cells[0][2]);
  ASSERT_TRUE(m.cells[2][0]);
  EXPECT_DOUBLE_EQ(m.cells[0][2]->feature_agreement, 0.6);
  EXPECT_EQ(m.cells[2][0]->source_a, "c");
  EXPECT_EQ(m.cells[1][1]->iou, 1.0);
  try {
    agreement_cell(a, b, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }
}

TEST(Agreement, ShortExplanationsSkipped) {
  const auto a = source("a", {{"1", {Emotion::kAnger, {"a", "b", "c", "d", "e"}}},
                              {"2", {Emotion::kAnger, {"a", "a", "c", "d", "e"}}}});
  const AgreementCell c = agreement_cell(a, a, 5);
  EXPECT_EQ(c.n_matched, 2u);
  EXPECT_EQ(c.n_skipped, 1u);
  EXPECT_EQ(c.feature_agreement, 1.0);
}

TEST(Classification, AllCorrectSingleClass) {
  const std::vector<Emotion> y(4, Emotion::kSurprise);
  const ClassificationReport r = classification_report(y, y);
  const ClassMetrics& m = r.per_class[code(Emotion::kSurprise)];
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.confusion[3][3], 4u);
}

TEST(Classification, NeverPredictedClassFlagged) {
  const std::vector<Emotion> gold = {Emotion::kSurprise, Emotion::kSurprise, Emotion::kAnger,
                                     Emotion::kAnger};
  const std::vector<Emotion> pred = {Emotion::kAnger, Emotion::kAnger, Emotion::kAnger,
                                     Emotion::kAnger};
  const ClassificationReport r = classification_report(pred, gold);
  const ClassMetrics& s = r.per_class[code(Emotion::kSurprise)];
  EXPECT_TRUE(s.never_predicted);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  const ClassMetrics& a = r.per_class[code(Emotion::kAnger)];
  EXPECT_DOUBLE_EQ(a.precision, 0.5);
  EXPECT_DOUBLE_EQ(a.recall, 1.0);
  EXPECT_DOUBLE_EQ(a.f1, 2 * 0.5 / 1.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, (2 * 0.5 / 1.5) / 6);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.confusion[3][2], 2u);  // gold Surprise, predicted Anger
}

Prediction pred(Emotion label, double conf, InputVariant v) {
  LabelDistribution d;
  d.probs.fill((1.0 - conf) / 5.0);
  d.probs[code(label)] = conf;
  return Prediction::from_distribution("s", "m", Paradigm::kPE, v, d);
}

TEST(FaithfulnessRow, MeansOverTriples) {
  const Prediction f1 = pred(Emotion::kAnger, 0.9, InputVariant::kFullText);
  const Prediction o1 = pred(Emotion::kAnger, 0.95, InputVariant::kTopKOnly);
  const Prediction r1 = pred(Emotion::kFear, 0.5, InputVariant::kTopKRemoved);
  const Prediction f2 = pred(Emotion::kSadness, 0.6, InputVariant::kFullText);
  const Prediction o2 = pred(Emotion::kHatred, 0.7, InputVariant::kTopKOnly);
  const Prediction r2 = pred(Emotion::kSadness, 0.4, InputVariant::kTopKRemoved);
  const std::vector<VariantTriple> t = {{&f1, &o1, &r1}, {&f2, &o2, &r2}};
  const FaithfulnessRow row = faithfulness_row("m", Paradigm::kPE, t);
  EXPECT_EQ(row.n, 2u);
  // Each prediction contributes the confidence of its own label.
  EXPECT_NEAR(*row.comp, ((0.9 - 0.5) + (0.6 - 0.4)) / 2, 1e-12);
  EXPECT_NEAR(*row.suff, ((0.9 - 0.95) + (0.6 - 0.7)) / 2, 1e-12);
  EXPECT_DOUBLE_EQ(*row.df_removed, 0.5);
  EXPECT_DOUBLE_EQ(*row.df_only, 0.5);
}

TEST(FaithfulnessRow, HumanRowHasNoCompOrSuff) {
  const Prediction f = Prediction::label_only("s", "human", std::nullopt,
                                              InputVariant::kFullText, Emotion::kAnger);
  const Prediction o = Prediction::label_only("s", "human", std::nullopt,
                                              InputVariant::kTopKOnly, Emotion::kAnger);
  const Prediction r = Prediction::label_only("s", "human", std::nullopt,
                                              InputVariant::kTopKRemoved, Emotion::kFear);
  const std::vector<VariantTriple> t = {{&f, &o, &r}};
  const FaithfulnessRow row = faithfulness_row("human", std::nullopt, t);
  EXPECT_FALSE(row.comp);
  EXPECT_FALSE(row.suff);
  EXPECT_EQ(*row.df_removed, 1.0);
  EXPECT_EQ(*row.df_only, 0.0);
  const FaithfulnessRow empty = faithfulness_row("human", std::nullopt, {});
  EXPECT_FALSE(empty.df_only);
  EXPECT_EQ(empty.n, 0u);
}

TEST(FaithfulnessRow, TemperatureRescalesConfidences) {
  const Prediction f = pred(Emotion::kAnger, 0.9, InputVariant::kFullText);
  const Prediction o = pred(Emotion::kAnger, 0.8, InputVariant::kTopKOnly);
  const Prediction r = pred(Emotion::kAnger, 0.5, InputVariant::kTopKRemoved);
  const std::vector<VariantTriple> t = {{&f, &o, &r}};
  const FaithfulnessRow row = faithfulness_row("m", Paradigm::kPE, t, 2.0);
  auto scaled = [](double c) {
    const double rest = std::sqrt((1.0 - c) / 5.0);
    return std::sqrt(c) / (std::sqrt(c) + 5 * rest);
  };
  EXPECT_NEAR(*row.comp, scaled(0.9) - scaled(0.5), 1e-12);
  EXPECT_NEAR(*row.suff, scaled(0.9) - scaled(0.8), 1e-12);
}

TEST(Json, RowCarriesNulls) {
  FaithfulnessRow row;
  row.source = "human";
  row.df_only = 0.25;
  const nlohmann::json j = row;
  EXPECT_TRUE(j["comp"].is_null());
  EXPECT_TRUE(j["paradigm"].is_null());
  EXPECT_EQ(j["df_only"], 0.25);
}

}  // namespace
}  // namespace selfx
