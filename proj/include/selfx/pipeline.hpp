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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfx/calibrate.hpp"
#include "selfx/corpus.hpp"
#include "selfx/domain.hpp"
#include "selfx/gateway.hpp"
#include "selfx/metrics.hpp"
#include "selfx/protocol.hpp"

namespace selfx {

// One model source. `backend` is "openai", "mock" or "scripted".
struct SourceSpec {
  GatewayConfig gateway;
  std::string backend = "openai";
  std::filesystem::path lexicon;  // mock
  std::filesystem::path script;   // scripted
};

struct CalibrationSettings {
  TemperatureGrid grid;
  int m_fit = 10;
  int m_diagram = 20;
};

struct RunConfig {
  std::filesystem::path corpus;
  int k = kDefaultTopK;
  std::vector<Paradigm> paradigms{Paradigm::kPE, Paradigm::kEP};
  std::vector<SourceSpec> sources;
  std::filesystem::path human_annotations;  // optional export file
  CalibrationSettings calibration;
  std::string placeholder{kDefaultPlaceholder};
  SplitConfig split;
  std::filesystem::path cache_dir;
  CacheMode cache_mode = CacheMode::kOff;
  std::filesystem::path output_dir;

  // Throws kConfigError.
  void validate() const;

  // Relative paths are resolved against base_dir. Per-source cache settings
  // are filled from the run-level ones.
  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  // Pushes cache_dir/cache_mode into each source's gateway config. Each source
  // gets its own subdirectory.
  void apply_cache_settings();
};

// Written to config.json. output_dir is omitted: it is where the bundle lives.
void to_json(nlohmann::json& j, const RunConfig& c);

struct Exclusion {
  std::string sample_id;
  std::string source;
  std::optional<Paradigm> paradigm;
  Split split = Split::kEvaluation;
  std::string reason;   // "malformed:<stage>:<reason>", "error:<code>", "masking:unmatched"
  nlohmann::json detail;
};

struct MaskingEntry {
  std::string source;
  Paradigm paradigm = Paradigm::kPE;
  MaskingReport report;
};

void to_json(nlohmann::json& j, const Exclusion& e);
void from_json(const nlohmann::json& j, Exclusion& e);
void to_json(nlohmann::json& j, const MaskingEntry& m);
void from_json(const nlohmann::json& j, MaskingEntry& m);

// Everything persisted by a run; reports are a pure function of this.
struct RunRecord {
  RunConfig config;
  std::vector<Sample> evaluation;
  std::vector<Sample> calibration;
  std::vector<Transcript> transcripts;
  std::vector<Prediction> predictions;
  std::vector<Explanation> explanations;
  std::vector<Exclusion> exclusions;
  std::vector<MaskingEntry> masking;
  std::size_t corpus_skipped = 0;
};

struct ClassificationEntry {
  std::string source;
  std::optional<Paradigm> paradigm;
  ClassificationReport report;
};

struct CalibrationSummary {
  std::string source;
  Paradigm paradigm = Paradigm::kPE;
  std::optional<CalibrationModel> model;  // absent with no usable calibration sample
  std::size_t n_calibration = 0;
  std::size_t n_evaluation = 0;
  std::optional<double> eval_ece_pre;
  std::optional<double> eval_ece_post;
};

struct ConfidenceReduction {
  std::string source;
  Paradigm paradigm = Paradigm::kPE;
  InputVariant variant = InputVariant::kFullText;
  double mean_pre = 0.0;
  double mean_post = 0.0;
  double reduction = 0.0;  // mean_pre - mean_post
  std::size_t n = 0;
};

struct AgreementReport {
  Paradigm paradigm = Paradigm::kPE;
  AgreementMatrix matrix;
};

struct ReliabilityEntry {
  std::string source;
  Paradigm paradigm = Paradigm::kPE;
  Split dataset = Split::kEvaluation;
  bool post = false;
  int num_bins = 20;
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
};

struct ExclusionSummary {
  std::string source;
  std::optional<Paradigm> paradigm;
  std::size_t n_eval = 0;
  std::size_t n_included = 0;
  std::size_t n_excluded = 0;
  std::map<std::string, std::size_t> by_reason;
};

struct ReportBundle {
  std::uint64_t seed = 0;
  int k = kDefaultTopK;
  int m_fit = 10;
  int m_diagram = 20;
  std::vector<ClassificationEntry> classification;
  std::vector<FaithfulnessRow> faithfulness_pre;
  std::vector<FaithfulnessRow> faithfulness_post;
  std::vector<CalibrationSummary> calibration;
  std::vector<ConfidenceReduction> confidence_reduction;
  std::vector<AgreementReport> agreement;
  std::vector<ReliabilityEntry> reliability;
  std::vector<ExclusionSummary> exclusions;
  std::vector<Exclusion> excluded;
  std::vector<MaskingEntry> masking;
  std::size_t corpus_skipped = 0;
};

void to_json(nlohmann::json& j, const CalibrationSummary& s);
void to_json(nlohmann::json& j, const ConfidenceReduction& r);
void to_json(nlohmann::json& j, const AgreementReport& r);
void to_json(nlohmann::json& j, const ReliabilityEntry& r);
void to_json(nlohmann::json& j, const ExclusionSummary& s);
void to_json(nlohmann::json& j, const ReportBundle& b);

using BackendFactory =
    std::function<std::shared_ptr<ChatBackend>(const SourceSpec&)>;

// openai -> OpenAiBackend, mock -> MockBackend(lexicon), scripted ->
// ScriptedBackend(script).
std::shared_ptr<ChatBackend> default_backend(const SourceSpec& spec);

struct RunOptions {
  BackendFactory backend_factory = default_backend;
  SleepFn sleep;                 // gateway retry sleep; real sleep when empty
  bool calibration_only = false;
};

// Loads the corpus, splits it, runs every source x paradigm flow on both
// splits and the variants on the evaluation split. Per-sample failures
// become exclusions; kCacheMiss, kAuthError, kConfigError and
// kUnrecognizedPrompt abort.
RunRecord execute_run(const RunConfig& config, const RunOptions& options = {});

// Fits temperatures and computes every report table from stored records.
ReportBundle compute_reports(const RunRecord& record);

// execute_run + compute_reports + write_bundle.
ReportBundle run_experiment(const RunConfig& config, const RunOptions& options = {});

// Bundle directory I/O.
void write_bundle(const RunRecord& record, const ReportBundle& bundle,
                  const std::filesystem::path& dir);
void write_calibration_only(const RunRecord& record, const ReportBundle& bundle,
                            const std::filesystem::path& dir);
RunRecord load_bundle(const std::filesystem::path& dir);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> mismatches;  // JSON pointer paths
};

// Recomputes reports from the stored records and compares them with
// reports/bundle.json (relative tolerance 1e-12).
VerifyResult verify_bundle(const std::filesystem::path& dir);

}  // namespace selfx
