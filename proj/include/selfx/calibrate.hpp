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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfx/domain.hpp"

namespace selfx {

// Probability assigned to a label digit missing from the candidate map.
inline constexpr double kLabelFloor = 1e-10;

// exp(logprob) of the candidates "0".."5", floored and renormalized. Throws
// kNoLabelMass when none of the six digits is a candidate.
LabelDistribution distribution_from_logprobs(
    const std::map<std::string, double>& candidates);

// softmax(ln(p) / T). Zero entries stay zero; T = 1 returns dist unchanged.
// Throws kNonPositiveTemperature.
LabelDistribution apply_temperature(const LabelDistribution& dist,
                                    double temperature);

struct ReliabilityBin {
  int index = 0;  // 1-based, as in I_m = [(m-1)/M, m/M)
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    // 0 for empty bins
  double confidence = 0.0;  // 0 for empty bins
};

// Confidence 1.0 lands in the last bin. Throws kLengthMismatch, kEmptyInput,
// and kPrecondition for M < 1 or a confidence outside [0, 1].
std::vector<ReliabilityBin> reliability_bins(std::span<const double> confidences,
                                             const std::vector<bool>& correct,
                                             int num_bins);

// sum_m |B_m|/n * |acc(B_m) - conf(B_m)|, accumulated over reliability_bins in
// bin order.
double ece(std::span<const double> confidences, const std::vector<bool>& correct,
           int num_bins);

// Same sum over precomputed bins; ece() is defined as this.
double ece_from_bins(std::span<const ReliabilityBin> bins);

struct TemperatureGrid {
  double lo = 0.1;
  double hi = 21.0;
  double step = 0.1;

  // lo, lo+step, ..., hi (inclusive), each value rounded to 1e-9 so that
  // 1.0 appears exactly on the default grid.
  std::vector<double> values() const;
  void validate() const;
};

struct CalibrationPoint {
  LabelDistribution dist;
  Emotion gold = Emotion::kSadness;
};

struct CalibrationModel {
  double temperature = 1.0;
  int num_bins = 10;
  TemperatureGrid grid;
  double fit_ece_before = 0.0;  // at T = 1
  double fit_ece_after = 0.0;   // at the fitted T
  std::size_t n = 0;
};

// Confidence of the (temperature-invariant) argmax label under dist scaled
// by T, and whether that label matches gold.
void scaled_confidences(std::span<const CalibrationPoint> points,
                        double temperature, std::vector<double>& confidences,
                        std::vector<bool>& correct);

// Exhaustive grid search minimizing ECE; ties go to the smallest T.
CalibrationModel fit_temperature(std::span<const CalibrationPoint> points,
                                 const TemperatureGrid& grid, int num_bins);

void to_json(nlohmann::json& j, const ReliabilityBin& b);
void to_json(nlohmann::json& j, const TemperatureGrid& g);
void from_json(const nlohmann::json& j, TemperatureGrid& g);
void to_json(nlohmann::json& j, const CalibrationModel& m);

}  // namespace selfx
