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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfx/domain.hpp"
#include "selfx/perturb.hpp"

namespace selfx {

inline constexpr std::string_view kHumanSource = "human";

struct Assignment {
  std::string annotator_id;
  int stage = 1;
  std::vector<std::string> sample_ids;
  // Stage 2: sample id -> annotator whose stage-1 words built the variants.
  std::map<std::string, std::string> variant_author;
};

// Seeded equal partition: ids sorted, shuffled, then cut into contiguous
// blocks; the first n % A annotators get one extra sample. Throws
// kInsufficientSamples when there are fewer samples than annotators.
std::vector<Assignment> create_stage1_assignments(
    const std::vector<std::string>& sample_ids,
    const std::vector<std::string>& annotators, std::uint64_t seed);

// Annotator i receives the stage-1 block of annotator (i + s) mod A for a
// seeded shift s in [1, A-1]. Needs at least two annotators.
std::vector<Assignment> create_stage2_assignments(
    const std::vector<Assignment>& stage1, std::uint64_t seed);

struct AnnotationRecord {
  std::string record_id;
  std::string annotator_id;
  std::string sample_id;
  int stage = 1;
  std::optional<InputVariant> variant;  // stage 2 only
  Emotion label = Emotion::kSadness;
  std::vector<std::string> selected_words;  // stage 1 only
  std::optional<std::string> verified_by;
  std::string timestamp;
};

void to_json(nlohmann::json& j, const AnnotationRecord& r);
void from_json(const nlohmann::json& j, AnnotationRecord& r);

// Append-only JSONL event log. Each write rewrites the file through a
// temporary and renames it into place.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);

  // Assigns the record id. The caller has validated the record.
  std::string append(AnnotationRecord record);
  void append_verification(const std::string& record_id,
                           const std::string& verifier_id,
                           const std::string& timestamp);

  std::vector<AnnotationRecord> snapshot() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void persist_locked(const nlohmann::json& event);

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::vector<nlohmann::json> events_;
  std::vector<AnnotationRecord> records_;
  std::size_t next_id_ = 1;
};

// Imported "human" source for the pipeline.
struct HumanSource {
  std::vector<Explanation> explanations;
  std::vector<Prediction> predictions;
  nlohmann::json coverage;
};

void to_json(nlohmann::json& j, const HumanSource& h);
void from_json(const nlohmann::json& j, HumanSource& h);
HumanSource load_human_source(const std::filesystem::path& path);

// Stage 1 -> explanations + full-text label-only predictions; stage 2 ->
// variant label-only predictions. Output sorted by sample id.
HumanSource export_human_source(const std::vector<AnnotationRecord>& records,
                                std::size_t total_samples);

using ClockFn = std::function<std::string()>;

struct AnnotationSettings {
  int k = kDefaultTopK;
  std::string placeholder{kDefaultPlaceholder};
  std::uint64_t seed = 13;
};

class AnnotationService {
 public:
  AnnotationService(std::vector<Sample> samples, std::vector<std::string> annotators,
                    AnnotationSettings settings, std::shared_ptr<AnnotationStore> store,
                    ClockFn clock = {});

  // Stage 2 variants built from these explanations instead of the human
  // stage-1 words (ablation).
  void use_model_explanations(std::map<std::string, Explanation> by_sample);

  const Assignment& assignment(const std::string& annotator_id, int stage);
  // Assignment plus texts, tokens (stage 1) and variant payloads (stage 2).
  nlohmann::json assignment_view(const std::string& annotator_id, int stage);

  // Throws kNotAssigned, kInvalidWordSelection, kDuplicate, kNotFound.
  std::string submit(AnnotationRecord record);
  // Throws kNotFound, kPrecondition (self-verification), kDuplicate.
  void verify(const std::string& record_id, const std::string& verifier_id);

  nlohmann::json progress() const;
  HumanSource export_human() const;

  const std::vector<std::string>& annotators() const { return annotators_; }
  const std::vector<Assignment>& stage1() const { return stage1_; }
  // Throws kStage1Incomplete until every stage-1 sample has a record.
  const std::vector<Assignment>& stage2();

 private:
  std::size_t annotator_index(const std::string& id) const;
  std::vector<std::string> variant_words(const std::string& sample_id,
                                         const std::string& author) const;

  std::map<std::string, Sample> samples_;
  std::vector<std::string> annotators_;
  AnnotationSettings settings_;
  std::shared_ptr<AnnotationStore> store_;
  ClockFn clock_;
  std::vector<Assignment> stage1_;
  std::optional<std::vector<Assignment>> stage2_;
  std::map<std::string, Explanation> model_explanations_;
  std::mutex mu_;  // serializes validation + append
};

class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service,
                   std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Returns the bound port (port 0 picks a free one).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace selfx
