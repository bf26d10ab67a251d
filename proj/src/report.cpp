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

#include "selfx/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "selfx/errors.hpp"

namespace selfx {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_percent(double v) {
  double r = std::floor(v * 100.0 * 100.0 + 0.5) / 100.0;
  if (r == 0.0) r = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

std::string sanitize_filename(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    out.push_back(keep ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

void write_text_file(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::kIoError, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename to " + path.string());
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string pct(const std::optional<double>& v) { return v ? format_percent(*v) : ""; }

std::string md_pct(const std::optional<double>& v) { return v ? format_percent(*v) : "-"; }

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::string paradigm_str(const std::optional<Paradigm>& p) {
  return p ? std::string(to_string(*p)) : std::string();
}

std::string group_name(const std::string& source, const std::optional<Paradigm>& p) {
  return sanitize_filename(p ? source + "_" + std::string(to_string(*p)) : source);
}

template <typename... Ts>
std::string row(const Ts&... fields) {
  std::string out;
  bool first = true;
  ((out += (first ? "" : ","), out += csv_field(fields), first = false), ...);
  out += '\n';
  return out;
}

}  // namespace

std::string confusion_csv(const ClassificationReport& report) {
  std::string out;
  for (int c = 0; c < kNumLabels; ++c) {
    if (c) out += ',';
    out += label_name(static_cast<Emotion>(c));
  }
  out += '\n';
  for (const auto& r : report.confusion) {
    for (int c = 0; c < kNumLabels; ++c) {
      if (c) out += ',';
      out += std::to_string(r[c]);
    }
    out += '\n';
  }
  return out;
}

std::string classification_csv(const ReportBundle& bundle) {
  std::string out = row("source", "paradigm", "class", "precision", "recall", "f1",
                        "support", "predicted", "never_predicted");
  for (const ClassificationEntry& e : bundle.classification) {
    const std::string p = paradigm_str(e.paradigm);
    for (const ClassMetrics& m : e.report.per_class) {
      out += row(e.source, p, std::string(label_name(m.label)), format_percent(m.precision),
                 format_percent(m.recall), format_percent(m.f1), std::to_string(m.support),
                 std::to_string(m.predicted), std::string(m.never_predicted ? "1" : "0"));
    }
    out += row(e.source, p, std::string("macro"), format_percent(e.report.macro_precision),
               format_percent(e.report.macro_recall), format_percent(e.report.macro_f1),
               std::to_string(e.report.n), std::to_string(e.report.n), std::string("0"));
    out += row(e.source, p, std::string("accuracy"), std::string(), std::string(),
               format_percent(e.report.accuracy), std::to_string(e.report.n),
               std::to_string(e.report.n), std::string("0"));
  }
  return out;
}

std::string faithfulness_csv(const ReportBundle& bundle) {
  std::string out = row("scaling", "source", "paradigm", "comp", "suff", "df_topk_removed",
                        "df_topk_only", "n");
  auto emit = [&](const char* scaling, const std::vector<FaithfulnessRow>& rows) {
    for (const FaithfulnessRow& r : rows) {
      out += row(std::string(scaling), r.source, paradigm_str(r.paradigm), pct(r.comp),
                 pct(r.suff), pct(r.df_removed), pct(r.df_only), std::to_string(r.n));
    }
  };
  emit("pre", bundle.faithfulness_pre);
  emit("post", bundle.faithfulness_post);
  return out;
}

std::string calibration_csv(const ReportBundle& bundle) {
  std::string out = row("source", "paradigm", "temperature", "num_bins",
                        "calibration_ece_pre", "calibration_ece_post",
                        "evaluation_ece_pre", "evaluation_ece_post", "n_calibration",
                        "n_evaluation");
  for (const CalibrationSummary& s : bundle.calibration) {
    std::string t;
    if (s.model) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f", s.model->temperature);
      t = buf;
    }
    out += row(s.source, std::string(to_string(s.paradigm)), t,
               std::to_string(bundle.m_fit),
               s.model ? format_percent(s.model->fit_ece_before) : std::string(),
               s.model ? format_percent(s.model->fit_ece_after) : std::string(),
               pct(s.eval_ece_pre), pct(s.eval_ece_post), std::to_string(s.n_calibration),
               std::to_string(s.n_evaluation));
  }
  return out;
}

std::string reliability_csv(const ReportBundle& bundle) {
  std::string out = row("source", "paradigm", "dataset", "scaling", "bin", "lower", "upper",
                        "count", "accuracy", "confidence");
  for (const ReliabilityEntry& r : bundle.reliability) {
    for (const ReliabilityBin& bin : r.bins) {
      json lo = bin.lower;
      json hi = bin.upper;
      json acc = bin.accuracy;
      json conf = bin.confidence;
      out += row(r.source, std::string(to_string(r.paradigm)),
                 std::string(to_string(r.dataset)), std::string(r.post ? "post" : "pre"),
                 std::to_string(bin.index), lo.dump(), hi.dump(), std::to_string(bin.count),
                 acc.dump(), conf.dump());
    }
  }
  return out;
}

std::string agreement_csv(const AgreementReport& report) {
  std::string out =
      row("source_a", "source_b", "feature_agreement", "iou", "n_matched", "n_skipped");
  const auto& m = report.matrix;
  for (std::size_t i = 0; i < m.sources.size(); ++i) {
    for (std::size_t j = 0; j < m.sources.size(); ++j) {
      const auto& c = m.cells[i][j];
      if (c) {
        out += row(m.sources[i], m.sources[j], format_percent(c->feature_agreement),
                   format_percent(c->iou), std::to_string(c->n_matched),
                   std::to_string(c->n_skipped));
      } else {
        out += row(m.sources[i], m.sources[j], std::string(), std::string(), std::string("0"),
                   std::string());
      }
    }
  }
  return out;
}

std::string confidence_reduction_csv(const ReportBundle& bundle) {
  std::string out =
      row("source", "paradigm", "variant", "mean_pre", "mean_post", "reduction", "n");
  for (const ConfidenceReduction& r : bundle.confidence_reduction) {
    out += row(r.source, std::string(to_string(r.paradigm)), std::string(to_string(r.variant)),
               format_percent(r.mean_pre), format_percent(r.mean_post),
               format_percent(r.reduction), std::to_string(r.n));
  }
  return out;
}

std::string exclusions_csv(const ReportBundle& bundle) {
  std::string out = row("source", "paradigm", "sample_id", "split", "reason");
  for (const Exclusion& e : bundle.excluded) {
    out += row(e.source, paradigm_str(e.paradigm), e.sample_id,
               std::string(to_string(e.split)), e.reason);
  }
  return out;
}

std::string markdown_report(const ReportBundle& b) {
  std::ostringstream md;
  md << "# Faithfulness report\n\n";
  md << "- seed: " << b.seed << "\n";
  md << "- k: " << b.k << "\n";
  md << "- ECE bins: " << b.m_fit << " for fitting and summary tables, " << b.m_diagram
     << " for reliability data\n";
  md << "- values are percentages\n\n";

  md << "## Classification (full text)\n\n";
  md << "| Source | Paradigm | Accuracy | Macro P | Macro R | Macro F1 | n |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const ClassificationEntry& e : b.classification) {
    md << "| " << md_cell(e.source) << " | " << md_cell(paradigm_str(e.paradigm)) << " | "
       << format_percent(e.report.accuracy) << " | "
       << format_percent(e.report.macro_precision) << " | "
       << format_percent(e.report.macro_recall) << " | "
       << format_percent(e.report.macro_f1) << " | " << e.report.n << " |\n";
  }
  md << "\n### Per-class F1\n\n| Source | Paradigm |";
  for (Emotion e : kAllEmotions) md << " " << label_name(e) << " |";
  md << "\n|---|---|";
  for (int i = 0; i < kNumLabels; ++i) md << "---|";
  md << "\n";
  for (const ClassificationEntry& e : b.classification) {
    md << "| " << md_cell(e.source) << " | " << md_cell(paradigm_str(e.paradigm)) << " |";
    for (const ClassMetrics& m : e.report.per_class) {
      md << " " << format_percent(m.f1) << (m.never_predicted ? "*" : "") << " |";
    }
    md << "\n";
  }
  md << "\n`*` class never predicted; precision set to 0.\n\n";

  md << "## Calibration\n\n";
  md << "| Source | Paradigm | T | Calib. pre | Calib. post | Eval. pre | Eval. post |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const CalibrationSummary& s : b.calibration) {
    char t[32] = "-";
    if (s.model) std::snprintf(t, sizeof t, "%.1f", s.model->temperature);
    md << "| " << md_cell(s.source) << " | " << to_string(s.paradigm) << " | " << t << " | "
       << (s.model ? format_percent(s.model->fit_ece_before) : "-") << " | "
       << (s.model ? format_percent(s.model->fit_ece_after) : "-") << " | "
       << md_pct(s.eval_ece_pre) << " | " << md_pct(s.eval_ece_post) << " |\n";
  }

  auto faithfulness = [&](const char* title, const std::vector<FaithfulnessRow>& rows) {
    md << "\n## " << title << "\n\n";
    md << "| Model | Paradigm | Comp | Suff | DF_TopKRemoved | DF_TopKOnly | n |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const FaithfulnessRow& r : rows) {
      md << "| " << md_cell(r.source) << " | "
         << (r.paradigm ? std::string(to_string(*r.paradigm)) : "-") << " | "
         << md_pct(r.comp) << " | " << md_pct(r.suff) << " | " << md_pct(r.df_removed)
         << " | " << md_pct(r.df_only) << " | " << r.n << " |\n";
    }
  };
  faithfulness("Faithfulness (post-scaling)", b.faithfulness_post);
  faithfulness("Faithfulness (pre-scaling)", b.faithfulness_pre);

  md << "\n## Confidence reduction after scaling\n\n";
  md << "| Source | Paradigm | Input | Mean pre | Mean post | Reduction |\n";
  md << "|---|---|---|---|---|---|\n";
  for (const ConfidenceReduction& r : b.confidence_reduction) {
    md << "| " << md_cell(r.source) << " | " << to_string(r.paradigm) << " | "
       << to_string(r.variant) << " | " << format_percent(r.mean_pre) << " | "
       << format_percent(r.mean_post) << " | " << format_percent(r.reduction) << " |\n";
  }

  for (const AgreementReport& a : b.agreement) {
    const auto& m = a.matrix;
    for (int which = 0; which < 2; ++which) {
      md << "\n## " << (which == 0 ? "Feature agreement" : "IoU") << " ("
         << to_string(a.paradigm) << ")\n\n|  |";
      for (const std::string& s : m.sources) md << " " << md_cell(s) << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < m.sources.size(); ++i) md << "---|";
      md << "\n";
      for (std::size_t i = 0; i < m.sources.size(); ++i) {
        md << "| " << md_cell(m.sources[i]) << " |";
        for (std::size_t j = 0; j < m.sources.size(); ++j) {
          const auto& c = m.cells[i][j];
          md << " "
             << (c ? format_percent(which == 0 ? c->feature_agreement : c->iou) : "-")
             << " |";
        }
        md << "\n";
      }
    }
  }

  md << "\n## Exclusions\n\n";
  md << "| Source | Paradigm | Evaluated | Included | Excluded |\n";
  md << "|---|---|---|---|---|\n";
  for (const ExclusionSummary& s : b.exclusions) {
    md << "| " << md_cell(s.source) << " | "
       << (s.paradigm ? std::string(to_string(*s.paradigm)) : "-") << " | " << s.n_eval
       << " | " << s.n_included << " | " << s.n_excluded << " |\n";
  }
  if (!b.excluded.empty()) {
    md << "\n| Sample | Source | Paradigm | Split | Reason |\n";
    md << "|---|---|---|---|---|\n";
    for (const Exclusion& e : b.excluded) {
      md << "| " << md_cell(e.sample_id) << " | " << md_cell(e.source) << " | "
         << (e.paradigm ? std::string(to_string(*e.paradigm)) : "-") << " | "
         << to_string(e.split) << " | " << md_cell(e.reason) << " |\n";
    }
  }
  if (b.corpus_skipped) {
    md << "\nCorpus rows skipped for labels outside 0-5: " << b.corpus_skipped << "\n";
  }
  return md.str();
}

void export_report(const ReportBundle& bundle, ReportFormat format, const fs::path& dir) {
  switch (format) {
    case ReportFormat::kJson:
      write_text_file(dir / "bundle.json", json(bundle).dump(2) + "\n");
      return;
    case ReportFormat::kCsv:
      write_text_file(dir / "classification.csv", classification_csv(bundle));
      for (const ClassificationEntry& e : bundle.classification) {
        write_text_file(dir / ("confusion_" + group_name(e.source, e.paradigm) + ".csv"),
                        confusion_csv(e.report));
      }
      write_text_file(dir / "faithfulness.csv", faithfulness_csv(bundle));
      write_text_file(dir / "calibration.csv", calibration_csv(bundle));
      write_text_file(dir / "reliability.csv", reliability_csv(bundle));
      write_text_file(dir / "confidence_reduction.csv", confidence_reduction_csv(bundle));
      write_text_file(dir / "exclusions.csv", exclusions_csv(bundle));
      for (const AgreementReport& a : bundle.agreement) {
        write_text_file(dir / ("agreement_" + std::string(to_string(a.paradigm)) + ".csv"),
                        agreement_csv(a));
      }
      return;
    case ReportFormat::kMarkdown:
      write_text_file(dir / "report.md", markdown_report(bundle));
      return;
  }
}

void export_all_reports(const ReportBundle& bundle, const fs::path& dir) {
  export_report(bundle, ReportFormat::kJson, dir);
  export_report(bundle, ReportFormat::kCsv, dir);
  export_report(bundle, ReportFormat::kMarkdown, dir);
}

}  // namespace selfx
