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

#include <filesystem>
#include <string>
#include <string_view>

#include "selfx/pipeline.hpp"

namespace selfx {

// 100 * v rounded half-up to two decimals, printed with exactly two.
std::string format_percent(double v);

// [A-Za-z0-9._-] kept, anything else becomes '_'.
std::string sanitize_filename(std::string_view name);

enum class ReportFormat { kJson, kCsv, kMarkdown };

// Writes reports/ contents for one format into `dir`. Output bytes depend
// only on the bundle. Throws kIoError.
void export_report(const ReportBundle& bundle, ReportFormat format,
                   const std::filesystem::path& dir);
void export_all_reports(const ReportBundle& bundle, const std::filesystem::path& dir);

// Individual renderings, used by export_report.
std::string confusion_csv(const ClassificationReport& report);
std::string classification_csv(const ReportBundle& bundle);
std::string faithfulness_csv(const ReportBundle& bundle);
std::string calibration_csv(const ReportBundle& bundle);
std::string reliability_csv(const ReportBundle& bundle);
std::string agreement_csv(const AgreementReport& report);
std::string confidence_reduction_csv(const ReportBundle& bundle);
std::string exclusions_csv(const ReportBundle& bundle);
std::string markdown_report(const ReportBundle& bundle);

// Writes `content` to `path` via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace selfx
