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

#include "selfx/metrics.hpp"

#include <algorithm>

#include "selfx/calibrate.hpp"
#include "selfx/errors.hpp"
#include "selfx/perturb.hpp"

namespace selfx {

double comprehensiveness(double conf_full, double conf_removed) {
  return conf_full - conf_removed;
}

double sufficiency(double conf_full, double conf_topk_only) {
  return conf_full - conf_topk_only;
}

namespace {

void require_confidence(const Prediction& p) {
  if (!p.has_confidence()) {
    throw Error(ErrorCode::kPrecondition,
                "source " + p.source + " has no confidences; comp/suff undefined");
  }
}

}  // namespace

double comprehensiveness(const Prediction& full, const Prediction& removed) {
  require_confidence(full);
  require_confidence(removed);
  return comprehensiveness(*full.confidence, *removed.confidence);
}

double sufficiency(const Prediction& full, const Prediction& topk_only) {
  require_confidence(full);
  require_confidence(topk_only);
  return sufficiency(*full.confidence, *topk_only.confidence);
}

double decision_flip_rate(std::span<const Emotion> labels_full,
                          std::span<const Emotion> labels_variant) {
  if (labels_full.size() != labels_variant.size()) {
    throw Error(ErrorCode::kLengthMismatch, "label lists differ in length");
  }
  if (labels_full.empty()) throw Error(ErrorCode::kEmptyInput, "no labels");
  std::size_t flips = 0;
  for (std::size_t i = 0; i < labels_full.size(); ++i) {
    if (labels_full[i] != labels_variant[i]) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(labels_full.size());
}

WordSet to_word_set(std::span<const std::string> words) {
  WordSet out;
  for (const std::string& w : words) out.insert(nfc(trim(w)));
  return out;
}

double feature_agreement(const WordSet& a, const WordSet& b, int k) {
  if (k < 1 || a.size() != static_cast<std::size_t>(k) ||
      b.size() != static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kSizeMismatch, "feature agreement needs two sets of size k");
  }
  std::size_t common = 0;
  for (const std::string& w : a) common += b.count(w);
  return static_cast<double>(common) / k;
}

double iou(const WordSet& a, const WordSet& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "empty word set");
  std::size_t common = 0;
  for (const std::string& w : a) common += b.count(w);
  const std::size_t uni = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

AgreementCell agreement_cell(const AgreementSource& a, const AgreementSource& b,
                             int k) {
  AgreementCell cell;
  cell.source_a = a.source;
  cell.source_b = b.source;
  double fa_sum = 0.0;
  double iou_sum = 0.0;
  std::size_t used = 0;
  for (const auto& [sample_id, label_a] : a.labels) {
    const auto lb = b.labels.find(sample_id);
    if (lb == b.labels.end() || lb->second != label_a) continue;
    const auto wa = a.words.find(sample_id);
    const auto wb = b.words.find(sample_id);
    if (wa == a.words.end() || wb == b.words.end()) continue;
    ++cell.n_matched;
    const WordSet sa = to_word_set(wa->second);
    const WordSet sb = to_word_set(wb->second);
    if (sa.size() != static_cast<std::size_t>(k) ||
        sb.size() != static_cast<std::size_t>(k)) {
      ++cell.n_skipped;
      continue;
    }
    fa_sum += feature_agreement(sa, sb, k);
    iou_sum += iou(sa, sb);
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::kNoOverlap,
                a.source + " and " + b.source + " share no label-matching sample");
  }
  cell.feature_agreement = fa_sum / static_cast<double>(used);
  cell.iou = iou_sum / static_cast<double>(used);
  return cell;
}

AgreementMatrix pairwise_agreement(std::span<const AgreementSource> sources, int k) {
  AgreementMatrix m;
  const std::size_t n = sources.size();
  for (const AgreementSource& s : sources) m.sources.push_back(s.source);
  m.cells.assign(n, std::vector<std::optional<AgreementCell>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      try {
        AgreementCell c = agreement_cell(sources[i], sources[j], k);
        m.cells[i][j] = c;
        std::swap(c.source_a, c.source_b);
        m.cells[j][i] = c;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoOverlap) throw;
      }
    }
  }
  return m;
}

ClassificationReport classification_report(std::span<const Emotion> predicted,
                                           std::span<const Emotion> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorCode::kLengthMismatch, "prediction and gold lists differ");
  }
  if (predicted.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions");
  ClassificationReport r;
  r.n = predicted.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    r.confusion[code(gold[i])][code(predicted[i])] += 1;
    if (predicted[i] == gold[i]) ++correct;
  }
  for (int c = 0; c < kNumLabels; ++c) {
    ClassMetrics& m = r.per_class[c];
    m.label = static_cast<Emotion>(c);
    const std::size_t tp = r.confusion[c][c];
    for (int o = 0; o < kNumLabels; ++o) {
      m.support += r.confusion[c][o];
      m.predicted += r.confusion[o][c];
    }
    m.never_predicted = m.predicted == 0;
    m.precision = m.predicted == 0 ? 0.0
                                   : static_cast<double>(tp) / static_cast<double>(m.predicted);
    m.recall = m.support == 0 ? 0.0
                              : static_cast<double>(tp) / static_cast<double>(m.support);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  r.macro_precision /= kNumLabels;
  r.macro_recall /= kNumLabels;
  r.macro_f1 /= kNumLabels;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  return r;
}

double confidence_of(const Prediction& p, std::optional<double> temperature) {
  if (!p.has_confidence()) {
    throw Error(ErrorCode::kPrecondition,
                "source " + p.source + " has no confidences");
  }
  if (!temperature || !p.distribution) return *p.confidence;
  return apply_temperature(*p.distribution, *temperature)[p.label];
}

FaithfulnessRow faithfulness_row(const std::string& source,
                                 std::optional<Paradigm> paradigm,
                                 std::span<const VariantTriple> triples,
                                 std::optional<double> temperature) {
  FaithfulnessRow row;
  row.source = source;
  row.paradigm = paradigm;
  row.n = triples.size();
  if (triples.empty()) return row;

  const bool scored = std::all_of(triples.begin(), triples.end(), [](const auto& t) {
    return t.full->has_confidence() && t.topk_only->has_confidence() &&
           t.topk_removed->has_confidence();
  });
  std::vector<Emotion> full;
  std::vector<Emotion> only;
  std::vector<Emotion> removed;
  double comp_sum = 0.0;
  double suff_sum = 0.0;
  for (const VariantTriple& t : triples) {
    full.push_back(t.full->label);
    only.push_back(t.topk_only->label);
    removed.push_back(t.topk_removed->label);
    if (scored) {
      const double cf = confidence_of(*t.full, temperature);
      comp_sum += comprehensiveness(cf, confidence_of(*t.topk_removed, temperature));
      suff_sum += sufficiency(cf, confidence_of(*t.topk_only, temperature));
    }
  }
  const double n = static_cast<double>(triples.size());
  if (scored) {
    row.comp = comp_sum / n;
    row.suff = suff_sum / n;
  }
  row.df_removed = decision_flip_rate(full, removed);
  row.df_only = decision_flip_rate(full, only);
  return row;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void to_json(nlohmann::json& j, const AgreementCell& c) {
  j = nlohmann::json{{"source_a", c.source_a},
                     {"source_b", c.source_b},
                     {"feature_agreement", c.feature_agreement},
                     {"iou", c.iou},
                     {"n_matched", c.n_matched},
                     {"n_skipped", c.n_skipped}};
}

void to_json(nlohmann::json& j, const ClassMetrics& m) {
  j = nlohmann::json{{"label", code(m.label)},
                     {"name", label_name(m.label)},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"support", m.support},
                     {"predicted", m.predicted},
                     {"never_predicted", m.never_predicted}};
}

void to_json(nlohmann::json& j, const ClassificationReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassMetrics& m : r.per_class) per_class.push_back(m);
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : r.confusion) confusion.push_back(row);
  j = nlohmann::json{{"per_class", std::move(per_class)},
                     {"macro",
                      {{"precision", r.macro_precision},
                       {"recall", r.macro_recall},
                       {"f1", r.macro_f1},
                       {"accuracy", r.accuracy}}},
                     {"confusion", std::move(confusion)},
                     {"n", r.n}};
}

void to_json(nlohmann::json& j, const FaithfulnessRow& r) {
  j = nlohmann::json{{"source", r.source},
                     {"paradigm", r.paradigm ? nlohmann::json(to_string(*r.paradigm))
                                             : nlohmann::json(nullptr)},
                     {"comp", opt(r.comp)},
                     {"suff", opt(r.suff)},
                     {"df_removed", opt(r.df_removed)},
                     {"df_only", opt(r.df_only)},
                     {"n", r.n}};
}

}  // namespace selfx
