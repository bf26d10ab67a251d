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

#include <set>

#include "selfx/corpus.hpp"
#include "selfx/errors.hpp"
#include "synthetic.hpp"

namespace selfx {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kOutOfRange;
}

TEST(Jsonl, ThreeLines) {
  const Corpus c = parse_jsonl_corpus(
      "{\"id\":\"a\",\"text\":\"غم  زیاد\",\"label\":0}\n"
      "{\"id\":\"b\",\"text\":\"شاد\",\"label\":1}\n"
      "\n"
      "{\"id\":\"c\",\"text\":\"ترس\",\"label\":5}\n");
  ASSERT_EQ(c.samples.size(), 3u);
  EXPECT_EQ(c.samples[0].text, "غم زیاد");
  EXPECT_EQ(c.samples[2].gold, Emotion::kFear);
  EXPECT_EQ(c.skipped_labels, 0u);
}

TEST(Jsonl, OutOfRangeLabelSkipped) {
  const Corpus c = parse_jsonl_corpus(
      "{\"id\":\"a\",\"text\":\"x\",\"label\":6}\n{\"id\":\"b\",\"text\":\"y\",\"label\":2}\n");
  EXPECT_EQ(c.samples.size(), 1u);
  EXPECT_EQ(c.skipped_labels, 1u);
}

TEST(Jsonl, Errors) {
  EXPECT_EQ(code_of([] {
              parse_jsonl_corpus(
                  "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"a\",\"text\":\"y\",\"label\":2}\n");
            }),
            ErrorCode::kDuplicateId);
  try {
    parse_jsonl_corpus("{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{oops\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_jsonl_corpus("{\"id\":\"a\",\"label\":1}\n"); }),
            ErrorCode::kParseError);
}

TEST(Csv, QuotedFields) {
  const Corpus c = parse_csv_corpus(
      "id,text,label\n"
      "a,\"سلام، دنیا\",1\n"
      "b,\"he said \"\"hi\"\"\",3\n"
      "c,\"two\nlines\",4\n"
      "d,x,9\n");
  ASSERT_EQ(c.samples.size(), 3u);
  EXPECT_EQ(c.samples[0].text, "سلام، دنیا");
  EXPECT_EQ(c.samples[1].text, "he said \"hi\"");
  EXPECT_EQ(c.samples[2].gold, Emotion::kHatred);
  EXPECT_EQ(c.skipped_labels, 1u);
}

TEST(Csv, BadHeader) {
  EXPECT_EQ(code_of([] { parse_csv_corpus("text,id,label\nx,a,1\n"); }), ErrorCode::kParseError);
}

TEST(Load, ByExtension) {
  const auto dir = testing::make_temp_dir("corpus");
  testing::write_file(dir / "c.csv", "id,text,label\na,x,1\n");
  testing::write_file(dir / "c.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n");
  EXPECT_EQ(load_corpus(dir / "c.csv").samples.size(), 1u);
  EXPECT_EQ(load_corpus(dir / "c.jsonl").samples.size(), 1u);
  EXPECT_EQ(code_of([&] { load_corpus(dir / "missing.jsonl"); }), ErrorCode::kIoError);
}

TEST(Split, BalancedAndDisjoint) {
  const auto samples = testing::synthetic_corpus(90, 1);
  const SplitResult r = balanced_split(samples, {50, 35, 13});
  EXPECT_EQ(r.evaluation.size(), 300u);
  EXPECT_EQ(r.calibration.size(), 210u);
  std::set<std::string> ids;
  std::array<int, kNumLabels> eval_count{}, calib_count{};
  for (const Sample& s : r.evaluation) {
    ids.insert(s.id);
    ++eval_count[code(s.gold)];
    EXPECT_EQ(s.split, Split::kEvaluation);
  }
  for (const Sample& s : r.calibration) {
    ids.insert(s.id);
    ++calib_count[code(s.gold)];
    EXPECT_EQ(s.split, Split::kCalibration);
  }
  EXPECT_EQ(ids.size(), 510u);
  for (int c = 0; c < kNumLabels; ++c) {
    EXPECT_EQ(eval_count[c], 50);
    EXPECT_EQ(calib_count[c], 35);
  }
}

TEST(Split, DeterministicAndOrderIndependent) {
  auto samples = testing::synthetic_corpus(12, 2);
  const SplitResult a = balanced_split(samples, {5, 5, 99});
  std::reverse(samples.begin(), samples.end());
  const SplitResult b = balanced_split(samples, {5, 5, 99});
  ASSERT_EQ(a.evaluation.size(), b.evaluation.size());
  for (std::size_t i = 0; i < a.evaluation.size(); ++i) {
    EXPECT_EQ(a.evaluation[i].id, b.evaluation[i].id);
  }
  const SplitResult c = balanced_split(samples, {5, 5, 100});
  bool differs = false;
  for (std::size_t i = 0; i < a.evaluation.size(); ++i) {
    differs |= a.evaluation[i].id != c.evaluation[i].id;
  }
  EXPECT_TRUE(differs);
}

TEST(Split, InsufficientClassNamed) {
  std::vector<Sample> samples = testing::synthetic_corpus(60, 3);
  std::erase_if(samples, [n = 0](const Sample& s) mutable {
    return s.gold == Emotion::kFear && ++n > 10;
  });
  try {
    balanced_split(samples, {50, 0, 13});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientClassCount);
    EXPECT_NE(std::string(e.what()).find("Fear"), std::string::npos);
  }
}

TEST(Shuffle, FisherYates) {
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
  struct Fixed {
    std::uint64_t operator()() { return 0; }
  } zero;
  // j = 0 every step: each position i swaps with 0.
  seeded_shuffle(v, zero);
  EXPECT_EQ(v, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 0}));
}

}  // namespace
}  // namespace selfx
