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

#include "selfx/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>

#include "selfx/corpus.hpp"
#include "selfx/errors.hpp"
#include "selfx/protocol.hpp"
#include "selfx/report.hpp"

namespace selfx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seeded offset in [1, a-1]; separate stream from the stage-1 shuffle.
std::size_t stage2_shift(std::size_t a, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5354414745320000ULL);
  return 1 + static_cast<std::size_t>(rng() % (a - 1));
}

}  // namespace

std::vector<Assignment> create_stage1_assignments(
    const std::vector<std::string>& sample_ids,
    const std::vector<std::string>& annotators, std::uint64_t seed) {
  if (annotators.empty()) throw Error(ErrorCode::kPrecondition, "no annotators");
  if (std::set<std::string>(annotators.begin(), annotators.end()).size() !=
      annotators.size()) {
    throw Error(ErrorCode::kPrecondition, "duplicate annotator id");
  }
  if (sample_ids.size() < annotators.size()) {
    throw Error(ErrorCode::kInsufficientSamples,
                std::to_string(sample_ids.size()) + " samples for " +
                    std::to_string(annotators.size()) + " annotators");
  }
  std::vector<std::string> ids = sample_ids;
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  seeded_shuffle(ids, rng);

  const std::size_t a = annotators.size();
  const std::size_t base = ids.size() / a;
  const std::size_t extra = ids.size() % a;
  std::vector<Assignment> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < a; ++i) {
    Assignment as;
    as.annotator_id = annotators[i];
    as.stage = 1;
    const std::size_t n = base + (i < extra ? 1 : 0);
    as.sample_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                         ids.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    out.push_back(std::move(as));
  }
  return out;
}

std::vector<Assignment> create_stage2_assignments(const std::vector<Assignment>& stage1,
                                                  std::uint64_t seed) {
  const std::size_t a = stage1.size();
  if (a < 2) {
    throw Error(ErrorCode::kInsufficientSamples,
                "stage 2 needs at least two annotators to keep stages disjoint");
  }
  const std::size_t shift = stage2_shift(a, seed);
  std::vector<Assignment> out;
  for (std::size_t i = 0; i < a; ++i) {
    const Assignment& src = stage1[(i + shift) % a];
    Assignment as;
    as.annotator_id = stage1[i].annotator_id;
    as.stage = 2;
    as.sample_ids = src.sample_ids;
    for (const std::string& id : src.sample_ids) as.variant_author[id] = src.annotator_id;
    out.push_back(std::move(as));
  }
  return out;
}

void to_json(json& j, const AnnotationRecord& r) {
  j = json{{"record_id", r.record_id},
           {"annotator_id", r.annotator_id},
           {"sample_id", r.sample_id},
           {"stage", r.stage},
           {"variant", r.variant ? json(to_string(*r.variant)) : json(nullptr)},
           {"label", code(r.label)},
           {"selected_words", r.selected_words},
           {"verified_by", r.verified_by ? json(*r.verified_by) : json(nullptr)},
           {"timestamp", r.timestamp}};
}

void from_json(const json& j, AnnotationRecord& r) {
  r.record_id = j.value("record_id", std::string());
  r.annotator_id = j.at("annotator_id").get<std::string>();
  r.sample_id = j.at("sample_id").get<std::string>();
  r.stage = j.at("stage").get<int>();
  const json v = j.value("variant", json());
  r.variant = v.is_null() ? std::nullopt : std::optional(parse_variant(v.get<std::string>()));
  r.label = label_from_code(j.at("label").get<int>());
  r.selected_words = j.value("selected_words", std::vector<std::string>{});
  const json vb = j.value("verified_by", json());
  r.verified_by = vb.is_null() ? std::nullopt : std::optional(vb.get<std::string>());
  r.timestamp = j.value("timestamp", std::string());
}

// ---- store ------------------------------------------------------------------

namespace {

std::string format_record_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rec-%06zu", n);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

AnnotationStore::AnnotationStore(fs::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;  // new store
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  path_.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    const std::string type = ev.value("type", std::string());
    if (type == "annotation") {
      AnnotationRecord r = ev.at("record").get<AnnotationRecord>();
      records_.push_back(r);
    } else if (type == "verification") {
      const std::string id = ev.at("record_id").get<std::string>();
      for (AnnotationRecord& r : records_) {
        if (r.record_id == id) r.verified_by = ev.at("verifier_id").get<std::string>();
      }
    } else {
      throw Error(ErrorCode::kParseError,
                  path_.string() + ":" + std::to_string(n) + ": unknown event type");
    }
    events_.push_back(std::move(ev));
  }
  next_id_ = records_.size() + 1;
}

void AnnotationStore::persist_locked(const json& event) {
  std::string content;
  for (const json& e : events_) content += e.dump() + "\n";
  content += event.dump() + "\n";
  write_text_file(path_, content);
  events_.push_back(event);
}

std::string AnnotationStore::append(AnnotationRecord record) {
  std::unique_lock lock(mu_);
  record.record_id = format_record_id(next_id_);
  persist_locked(json{{"type", "annotation"}, {"record", record}});
  ++next_id_;
  records_.push_back(record);
  return record.record_id;
}

void AnnotationStore::append_verification(const std::string& record_id,
                                          const std::string& verifier_id,
                                          const std::string& timestamp) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const AnnotationRecord& r) { return r.record_id == record_id; });
  if (it == records_.end()) throw Error(ErrorCode::kNotFound, "no record " + record_id);
  persist_locked(json{{"type", "verification"},
                      {"record_id", record_id},
                      {"verifier_id", verifier_id},
                      {"timestamp", timestamp}});
  it->verified_by = verifier_id;
}

std::vector<AnnotationRecord> AnnotationStore::snapshot() const {
  std::shared_lock lock(mu_);
  return records_;
}

// ---- human source export ------------------------------------------------------

void to_json(json& j, const HumanSource& h) {
  j = json{{"explanations", h.explanations},
           {"predictions", h.predictions},
           {"coverage", h.coverage}};
}

void from_json(const json& j, HumanSource& h) {
  h.explanations = j.value("explanations", std::vector<Explanation>{});
  h.predictions = j.value("predictions", std::vector<Prediction>{});
  h.coverage = j.value("coverage", json::object());
}

HumanSource load_human_source(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read " + path.string());
  try {
    return json::parse(in).get<HumanSource>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

HumanSource export_human_source(const std::vector<AnnotationRecord>& records,
                                std::size_t total_samples) {
  std::vector<AnnotationRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.sample_id, a.stage, a.variant ? static_cast<int>(*a.variant) : -1,
                           a.record_id) <
           std::make_tuple(b.sample_id, b.stage, b.variant ? static_cast<int>(*b.variant) : -1,
                           b.record_id);
  });
  HumanSource h;
  const std::string source(kHumanSource);
  std::set<std::string> stage1;
  std::set<std::string> stage2_only;
  std::set<std::string> stage2_removed;
  for (const AnnotationRecord& r : sorted) {
    if (r.stage == 1) {
      if (!stage1.insert(r.sample_id).second) continue;
      h.explanations.push_back(Explanation{r.sample_id, source, std::nullopt, r.selected_words});
      h.predictions.push_back(Prediction::label_only(r.sample_id, source, std::nullopt,
                                                     InputVariant::kFullText, r.label));
    } else if (r.variant) {
      auto& seen = *r.variant == InputVariant::kTopKOnly ? stage2_only : stage2_removed;
      if (!seen.insert(r.sample_id).second) continue;
      h.predictions.push_back(
          Prediction::label_only(r.sample_id, source, std::nullopt, *r.variant, r.label));
    }
  }
  std::size_t both = 0;
  for (const std::string& id : stage2_only) both += stage2_removed.count(id);
  auto frac = [&](std::size_t n) {
    return total_samples == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total_samples);
  };
  h.coverage = json{{"total_samples", total_samples},
                    {"stage1_samples", stage1.size()},
                    {"stage2_topk_only", stage2_only.size()},
                    {"stage2_topk_removed", stage2_removed.size()},
                    {"stage2_complete", both},
                    {"stage1_coverage", frac(stage1.size())},
                    {"stage2_coverage", frac(both)}};
  return h;
}

// ---- service ------------------------------------------------------------------

AnnotationService::AnnotationService(std::vector<Sample> samples,
                                     std::vector<std::string> annotators,
                                     AnnotationSettings settings,
                                     std::shared_ptr<AnnotationStore> store, ClockFn clock)
    : annotators_(std::move(annotators)),
      settings_(std::move(settings)),
      store_(std::move(store)),
      clock_(std::move(clock)) {
  if (!store_) throw Error(ErrorCode::kPrecondition, "annotation store is required");
  if (!clock_) clock_ = utc_now;
  std::vector<std::string> ids;
  for (Sample& s : samples) {
    ids.push_back(s.id);
    samples_.emplace(s.id, std::move(s));
  }
  stage1_ = create_stage1_assignments(ids, annotators_, settings_.seed);
}

void AnnotationService::use_model_explanations(std::map<std::string, Explanation> by_sample) {
  std::lock_guard lock(mu_);
  model_explanations_ = std::move(by_sample);
}

std::size_t AnnotationService::annotator_index(const std::string& id) const {
  auto it = std::find(annotators_.begin(), annotators_.end(), id);
  if (it == annotators_.end()) throw Error(ErrorCode::kNotFound, "unknown annotator " + id);
  return static_cast<std::size_t>(it - annotators_.begin());
}

const std::vector<Assignment>& AnnotationService::stage2() {
  if (stage2_) return *stage2_;
  const std::vector<AnnotationRecord> records = store_->snapshot();
  std::set<std::pair<std::string, std::string>> done;  // (annotator, sample)
  for (const AnnotationRecord& r : records) {
    if (r.stage == 1) done.emplace(r.annotator_id, r.sample_id);
  }
  std::size_t missing = 0;
  for (const Assignment& a : stage1_) {
    for (const std::string& id : a.sample_ids) {
      if (!done.count({a.annotator_id, id})) ++missing;
    }
  }
  if (missing > 0 && model_explanations_.empty()) {
    throw Error(ErrorCode::kStage1Incomplete,
                std::to_string(missing) + " stage-1 samples have no record");
  }
  stage2_ = create_stage2_assignments(stage1_, settings_.seed);
  return *stage2_;
}

const Assignment& AnnotationService::assignment(const std::string& annotator_id, int stage) {
  const std::size_t i = annotator_index(annotator_id);
  if (stage == 1) return stage1_[i];
  if (stage == 2) {
    std::lock_guard lock(mu_);
    return stage2()[i];
  }
  throw Error(ErrorCode::kPrecondition, "stage must be 1 or 2");
}

std::vector<std::string> AnnotationService::variant_words(const std::string& sample_id,
                                                          const std::string& author) const {
  if (auto it = model_explanations_.find(sample_id); it != model_explanations_.end()) {
    return it->second.words;
  }
  for (const AnnotationRecord& r : store_->snapshot()) {
    if (r.stage == 1 && r.sample_id == sample_id && r.annotator_id == author) {
      return r.selected_words;
    }
  }
  throw Error(ErrorCode::kStage1Incomplete, "no stage-1 words for " + sample_id);
}

json AnnotationService::assignment_view(const std::string& annotator_id, int stage) {
  const Assignment& a = assignment(annotator_id, stage);
  json items = json::array();
  for (const std::string& id : a.sample_ids) {
    const Sample& s = samples_.at(id);
    if (stage == 1) {
      json tokens = json::array();
      for (const Token& t : tokenize(s.text)) {
        if (!t.core.empty()) tokens.push_back(t.core);
      }
      items.push_back(json{{"sample_id", id}, {"text", s.text}, {"tokens", std::move(tokens)}});
    } else {
      const std::vector<std::string> words = variant_words(id, a.variant_author.at(id));
      const MaskResult masked = mask_topk(s.text, words, settings_.placeholder);
      items.push_back(json{{"sample_id", id},
                           {"variants",
                            {{"TopKOnly", topk_only_payload(words)},
                             {"TopKRemoved", masked.text}}}});
    }
  }
  return json{{"annotator_id", a.annotator_id},
              {"stage", stage},
              {"k", settings_.k},
              {"placeholder", settings_.placeholder},
              {"labels", {"Sadness", "Happiness", "Anger", "Surprise", "Hatred", "Fear"}},
              {"items", std::move(items)}};
}

std::string AnnotationService::submit(AnnotationRecord record) {
  std::lock_guard lock(mu_);
  annotator_index(record.annotator_id);
  if (record.stage != 1 && record.stage != 2) {
    throw Error(ErrorCode::kPrecondition, "stage must be 1 or 2");
  }
  const Assignment& a = record.stage == 1 ? stage1_[annotator_index(record.annotator_id)]
                                          : stage2()[annotator_index(record.annotator_id)];
  if (std::find(a.sample_ids.begin(), a.sample_ids.end(), record.sample_id) ==
      a.sample_ids.end()) {
    throw Error(ErrorCode::kNotAssigned, record.sample_id + " is not assigned to " +
                                             record.annotator_id + " in stage " +
                                             std::to_string(record.stage));
  }
  const Sample& sample = samples_.at(record.sample_id);
  if (record.stage == 1) {
    if (record.variant) {
      throw Error(ErrorCode::kInvalidWordSelection, "stage-1 records carry no variant");
    }
    if (record.selected_words.size() != static_cast<std::size_t>(settings_.k)) {
      throw Error(ErrorCode::kInvalidWordSelection,
                  "expected " + std::to_string(settings_.k) + " words, got " +
                      std::to_string(record.selected_words.size()));
    }
    std::map<std::string, int> available;
    for (const Token& t : tokenize(sample.text)) {
      if (!t.core.empty()) ++available[t.core];
    }
    for (std::string& w : record.selected_words) {
      w = nfc(trim(w));
      auto it = available.find(w);
      if (it == available.end() || it->second == 0) {
        throw Error(ErrorCode::kInvalidWordSelection, "'" + w + "' is not a token of the text");
      }
      --it->second;
    }
  } else {
    if (!record.variant || *record.variant == InputVariant::kFullText) {
      throw Error(ErrorCode::kInvalidWordSelection,
                  "stage-2 records need variant TopKOnly or TopKRemoved");
    }
    if (!record.selected_words.empty()) {
      throw Error(ErrorCode::kInvalidWordSelection, "stage-2 records carry no words");
    }
  }
  for (const AnnotationRecord& r : store_->snapshot()) {
    if (r.annotator_id == record.annotator_id && r.sample_id == record.sample_id &&
        r.stage == record.stage && r.variant == record.variant) {
      throw Error(ErrorCode::kDuplicate, "already submitted as " + r.record_id);
    }
  }
  record.verified_by.reset();
  record.timestamp = clock_();
  return store_->append(std::move(record));
}

void AnnotationService::verify(const std::string& record_id, const std::string& verifier_id) {
  std::lock_guard lock(mu_);
  annotator_index(verifier_id);
  for (const AnnotationRecord& r : store_->snapshot()) {
    if (r.record_id != record_id) continue;
    if (r.annotator_id == verifier_id) {
      throw Error(ErrorCode::kPrecondition, "annotators cannot verify their own records");
    }
    if (r.verified_by) throw Error(ErrorCode::kDuplicate, record_id + " is already verified");
    store_->append_verification(record_id, verifier_id, clock_());
    return;
  }
  throw Error(ErrorCode::kNotFound, "no record " + record_id);
}

json AnnotationService::progress() const {
  const std::vector<AnnotationRecord> records = store_->snapshot();
  json out = json::array();
  for (std::size_t i = 0; i < annotators_.size(); ++i) {
    const std::string& id = annotators_[i];
    std::size_t s1 = 0;
    std::size_t s2 = 0;
    std::size_t verified = 0;
    for (const AnnotationRecord& r : records) {
      if (r.annotator_id != id) continue;
      (r.stage == 1 ? s1 : s2) += 1;
      if (r.verified_by) ++verified;
    }
    const std::size_t assigned = stage1_[i].sample_ids.size();
    // Two variants per stage-2 sample.
    std::size_t assigned2 = 0;
    if (annotators_.size() >= 2) {
      const std::size_t shift = stage2_shift(annotators_.size(), settings_.seed);
      assigned2 = 2 * stage1_[(i + shift) % annotators_.size()].sample_ids.size();
    }
    out.push_back(json{{"annotator_id", id},
                       {"stage1", {{"done", s1}, {"total", assigned}}},
                       {"stage2", {{"done", s2}, {"total", assigned2}}},
                       {"verified", verified}});
  }
  return json{{"annotators", std::move(out)}, {"records", records.size()}};
}

HumanSource AnnotationService::export_human() const {
  return export_human_source(store_->snapshot(), samples_.size());
}

}  // namespace selfx
