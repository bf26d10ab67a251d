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

#include "selfx/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "selfx/errors.hpp"
#include "selfx/perturb.hpp"

namespace selfx {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Appends a row unless the label is out of range.
void add_row(Corpus& corpus, std::set<std::string>& seen, std::string id,
             std::string_view text, long long label, std::size_t line) {
  if (id.empty()) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": empty id");
  }
  if (!seen.insert(id).second) {
    throw Error(ErrorCode::kDuplicateId,
                "line " + std::to_string(line) + ": duplicate id " + id);
  }
  if (label < 0 || label >= kNumLabels) {
    ++corpus.skipped_labels;
    return;
  }
  Sample s;
  s.id = std::move(id);
  s.text = normalize_text(text);
  s.gold = label_from_code(static_cast<int>(label));
  corpus.samples.push_back(std::move(s));
}

long long parse_label_field(const std::string& field, std::size_t line) {
  const std::string_view t = trim(field);
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(std::string(t), &pos);
    if (pos != t.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(line) + ": bad label '" + field + "'");
  }
}

// RFC 4180 records: quoted fields may contain commas, doubled quotes and
// newlines. Returns records with the line each starts on.
std::vector<std::pair<std::size_t, std::vector<std::string>>> csv_records(
    const std::string& content) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> out;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_row = [&] {
    if (any || !field.empty() || !row.empty()) {
      row.push_back(std::move(field));
      out.emplace_back(row_line, std::move(row));
    }
    row.clear();
    field.clear();
    any = false;
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
      ++line;
      row_line = line;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(row_line) + ": unterminated quote");
  }
  end_row();
  return out;
}

}  // namespace

Corpus parse_jsonl_corpus(const std::string& content) {
  Corpus corpus;
  std::set<std::string> seen;
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(n) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
        !j.contains("label") || !j["text"].is_string() ||
        !j["label"].is_number_integer()) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(n) + ": expected {id, text, label}");
    }
    std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    add_row(corpus, seen, std::move(id), j["text"].get<std::string>(),
            j["label"].get<long long>(), n);
  }
  return corpus;
}

Corpus parse_csv_corpus(const std::string& content) {
  Corpus corpus;
  std::set<std::string> seen;
  const auto records = csv_records(content);
  if (records.empty()) return corpus;
  const auto& header = records.front().second;
  if (header.size() != 3 || trim(header[0]) != "id" || trim(header[1]) != "text" ||
      trim(header[2]) != "label") {
    throw Error(ErrorCode::kParseError, "line 1: header must be id,text,label");
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& [line, fields] = records[r];
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    if (fields.size() != 3) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line) + ": expected 3 fields");
    }
    add_row(corpus, seen, std::string(trim(fields[0])), fields[1],
            parse_label_field(fields[2], line), line);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const std::string ext = path.extension().string();
  if (ext == ".csv") return parse_csv_corpus(content);
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") {
    return parse_jsonl_corpus(content);
  }
  throw Error(ErrorCode::kConfigError, "unknown corpus format: " + path.string());
}

SplitResult balanced_split(const std::vector<Sample>& samples,
                           const SplitConfig& config) {
  std::array<std::vector<Sample>, kNumLabels> by_class;
  for (const Sample& s : samples) by_class[code(s.gold)].push_back(s);
  const std::size_t need = config.eval_per_class + config.calib_per_class;
  for (Emotion e : kAllEmotions) {
    if (by_class[code(e)].size() < need) {
      throw Error(ErrorCode::kInsufficientClassCount,
                  std::string(label_name(e)) + " has " +
                      std::to_string(by_class[code(e)].size()) + " samples, needs " +
                      std::to_string(need));
    }
  }
  SplitResult out;
  std::mt19937_64 rng(config.seed);
  for (auto& cls : by_class) {
    std::sort(cls.begin(), cls.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    seeded_shuffle(cls, rng);
    for (std::size_t i = 0; i < need; ++i) {
      Sample s = cls[i];
      if (i < config.eval_per_class) {
        s.split = Split::kEvaluation;
        out.evaluation.push_back(std::move(s));
      } else {
        s.split = Split::kCalibration;
        out.calibration.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace selfx
