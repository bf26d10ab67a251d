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

#include "selfx/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selfx/errors.hpp"

namespace selfx {

LabelDistribution distribution_from_logprobs(
    const std::map<std::string, double>& candidates) {
  if (candidates.empty()) {
    throw Error(ErrorCode::kPrecondition, "empty candidate map");
  }
  LabelDistribution d;
  bool any = false;
  for (int i = 0; i < kNumLabels; ++i) {
    const auto it = candidates.find(std::to_string(i));
    if (it != candidates.end()) {
      d.probs[i] = std::exp(it->second);
      any = true;
    } else {
      d.probs[i] = kLabelFloor;
    }
  }
  if (!any) {
    throw Error(ErrorCode::kNoLabelMass, "no label digit among top candidates");
  }
  double sum = 0.0;
  for (double p : d.probs) sum += p;
  for (double& p : d.probs) p /= sum;
  return d;
}

LabelDistribution apply_temperature(const LabelDistribution& dist,
                                    double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTemperature,
                "temperature must be positive, got " + std::to_string(temperature));
  }
  if (temperature == 1.0) return dist;
  std::array<double, kNumLabels> logits{};
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNumLabels; ++i) {
    logits[i] = dist.probs[i] > 0.0 ? std::log(dist.probs[i]) / temperature
                                    : -std::numeric_limits<double>::infinity();
    max_logit = std::max(max_logit, logits[i]);
  }
  if (!std::isfinite(max_logit)) {
    throw Error(ErrorCode::kPrecondition, "distribution has no mass");
  }
  LabelDistribution out;
  double sum = 0.0;
  for (int i = 0; i < kNumLabels; ++i) {
    out.probs[i] = std::exp(logits[i] - max_logit);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

std::vector<ReliabilityBin> reliability_bins(std::span<const double> confidences,
                                             const std::vector<bool>& correct,
                                             int num_bins) {
  if (confidences.size() != correct.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "confidences and correctness lists differ in length");
  }
  if (confidences.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions");
  if (num_bins < 1) throw Error(ErrorCode::kPrecondition, "bin count must be >= 1");

  std::vector<ReliabilityBin> bins(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> hits(num_bins, 0);
  for (int m = 0; m < num_bins; ++m) {
    bins[m].index = m + 1;
    bins[m].lower = static_cast<double>(m) / num_bins;
    bins[m].upper = static_cast<double>(m + 1) / num_bins;
  }
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) {
      throw Error(ErrorCode::kPrecondition, "confidence outside [0, 1]");
    }
    int m = std::clamp(static_cast<int>(std::floor(c * num_bins)), 0, num_bins - 1);
    // c * M can round across an edge; settle against the interval bounds.
    if (m > 0 && c < bins[m].lower) --m;
    if (m + 1 < num_bins && c >= bins[m + 1].lower) ++m;
    bins[m].count += 1;
    conf_sum[m] += c;
    if (correct[i]) hits[m] += 1;
  }
  for (int m = 0; m < num_bins; ++m) {
    if (bins[m].count == 0) continue;
    const double n = static_cast<double>(bins[m].count);
    bins[m].accuracy = static_cast<double>(hits[m]) / n;
    bins[m].confidence = conf_sum[m] / n;
  }
  return bins;
}

double ece_from_bins(std::span<const ReliabilityBin> bins) {
  std::size_t n = 0;
  for (const ReliabilityBin& b : bins) n += b.count;
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "no predictions");
  double total = 0.0;
  for (const ReliabilityBin& b : bins) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / static_cast<double>(n) *
             std::abs(b.accuracy - b.confidence);
  }
  return total;
}

double ece(std::span<const double> confidences, const std::vector<bool>& correct,
           int num_bins) {
  return ece_from_bins(reliability_bins(confidences, correct, num_bins));
}

std::vector<double> TemperatureGrid::values() const {
  validate();
  std::vector<double> out;
  const auto steps =
      static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= steps; ++i) {
    out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return out;
}

void TemperatureGrid::validate() const {
  if (!(lo > 0.0) || !(hi >= lo) || !(step > 0.0)) {
    throw Error(ErrorCode::kConfigError,
                "temperature grid needs 0 < lo <= hi and step > 0");
  }
}

void scaled_confidences(std::span<const CalibrationPoint> points,
                        double temperature, std::vector<double>& confidences,
                        std::vector<bool>& correct) {
  confidences.clear();
  correct.clear();
  for (const CalibrationPoint& p : points) {
    const Emotion label = p.dist.argmax();
    const LabelDistribution scaled = apply_temperature(p.dist, temperature);
    confidences.push_back(scaled[label]);
    correct.push_back(label == p.gold);
  }
}

CalibrationModel fit_temperature(std::span<const CalibrationPoint> points,
                                 const TemperatureGrid& grid, int num_bins) {
  if (points.empty()) {
    throw Error(ErrorCode::kEmptyInput, "calibration set is empty");
  }
  CalibrationModel model;
  model.grid = grid;
  model.num_bins = num_bins;
  model.n = points.size();

  std::vector<double> conf;
  std::vector<bool> correct;
  scaled_confidences(points, 1.0, conf, correct);
  model.fit_ece_before = ece(conf, correct, num_bins);

  bool first = true;
  for (double t : grid.values()) {
    scaled_confidences(points, t, conf, correct);
    const double e = ece(conf, correct, num_bins);
    if (first || e < model.fit_ece_after) {
      model.fit_ece_after = e;
      model.temperature = t;
      first = false;
    }
  }
  return model;
}

void to_json(nlohmann::json& j, const ReliabilityBin& b) {
  j = nlohmann::json{{"index", b.index},       {"lower", b.lower},
                     {"upper", b.upper},       {"count", b.count},
                     {"accuracy", b.accuracy}, {"confidence", b.confidence}};
}

void to_json(nlohmann::json& j, const TemperatureGrid& g) {
  j = nlohmann::json{{"lo", g.lo}, {"hi", g.hi}, {"step", g.step}};
}

void from_json(const nlohmann::json& j, TemperatureGrid& g) {
  if (j.is_array()) {
    g.lo = j.at(0).get<double>();
    g.hi = j.at(1).get<double>();
    g.step = j.at(2).get<double>();
    return;
  }
  g.lo = j.value("lo", 0.1);
  g.hi = j.value("hi", 21.0);
  g.step = j.value("step", 0.1);
}

void to_json(nlohmann::json& j, const CalibrationModel& m) {
  j = nlohmann::json{{"temperature", m.temperature},
                     {"num_bins", m.num_bins},
                     {"grid", m.grid},
                     {"fit_ece_before", m.fit_ece_before},
                     {"fit_ece_after", m.fit_ece_after},
                     {"n", m.n}};
}

}  // namespace selfx
