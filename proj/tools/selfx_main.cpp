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

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "selfx/annotation.hpp"
#include "selfx/errors.hpp"
#include "selfx/pipeline.hpp"
#include "selfx/report.hpp"

namespace {

using namespace selfx;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<std::string> cache_mode;
  std::optional<std::string> out;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Split seed");
  cmd->add_option("--k", o.k, "Number of influential words");
  cmd->add_option("--cache-mode", o.cache_mode, "off | record | replay | record_or_replay");
  cmd->add_option("--out", o.out, "Bundle output directory");
}

RunConfig load_config(const Overrides& o) {
  RunConfig c = RunConfig::load(o.config);
  if (o.seed) c.split.seed = *o.seed;
  if (o.k) c.k = *o.k;
  if (o.cache_mode) c.cache_mode = parse_cache_mode(*o.cache_mode);
  if (o.out) c.output_dir = std::filesystem::absolute(*o.out).lexically_normal();
  c.apply_cache_settings();
  return c;
}

void print_summary(const ReportBundle& b, bool calibration_only) {
  for (const CalibrationSummary& s : b.calibration) {
    std::cout << s.source << " " << to_string(s.paradigm) << ": ";
    if (s.model) {
      std::cout << "T=" << s.model->temperature << " calib ECE "
                << format_percent(s.model->fit_ece_before) << " -> "
                << format_percent(s.model->fit_ece_after);
    } else {
      std::cout << "no usable calibration samples";
    }
    std::cout << "\n";
  }
  if (calibration_only) return;
  for (const ExclusionSummary& e : b.exclusions) {
    std::cout << e.source << " " << (e.paradigm ? to_string(*e.paradigm) : "-") << ": "
              << e.n_included << "/" << e.n_eval << " included\n";
  }
}

int cmd_run(const Overrides& o, bool calibration_only, std::optional<CacheMode> force_mode) {
  RunConfig c = load_config(o);
  if (force_mode) {
    c.cache_mode = *force_mode;
    c.apply_cache_settings();
  }
  if (c.output_dir.empty()) throw Error(ErrorCode::kConfigError, "no output directory (--out)");
  RunOptions opts;
  opts.calibration_only = calibration_only;
  const RunRecord record = execute_run(c, opts);
  const ReportBundle bundle = compute_reports(record);
  if (calibration_only) {
    write_calibration_only(record, bundle, c.output_dir);
  } else {
    write_bundle(record, bundle, c.output_dir);
  }
  print_summary(bundle, calibration_only);
  std::cout << "bundle written to " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  const ReportBundle bundle = compute_reports(load_bundle(dir));
  const std::filesystem::path out = std::filesystem::path(dir) / "reports";
  if (format == "all") {
    export_all_reports(bundle, out);
  } else if (format == "json") {
    export_report(bundle, ReportFormat::kJson, out);
  } else if (format == "csv") {
    export_report(bundle, ReportFormat::kCsv, out);
  } else if (format == "md" || format == "markdown") {
    export_report(bundle, ReportFormat::kMarkdown, out);
  } else {
    throw Error(ErrorCode::kConfigError, "unknown format " + format);
  }
  std::cout << "reports written to " << out.string() << "\n";
  return 0;
}

int cmd_verify(const std::string& dir) {
  const VerifyResult r = verify_bundle(dir);
  if (r.ok) {
    std::cout << "verify: OK\n";
    return 0;
  }
  std::cout << "verify: " << r.mismatches.size() << " mismatches\n";
  for (const std::string& m : r.mismatches) std::cout << "  " << m << "\n";
  return 1;
}

AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<std::string> annotator_ids(const std::string& spec) {
  std::vector<std::string> ids;
  if (!spec.empty() && spec.find_first_not_of("0123456789") == std::string::npos) {
    const int n = std::stoi(spec);
    for (int i = 1; i <= n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "a%02d", i);
      ids.push_back(buf);
    }
    return ids;
  }
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string id(trim(std::string_view(spec).substr(pos, comma - pos)));
    if (!id.empty()) ids.push_back(id);
    pos = comma + 1;
  }
  return ids;
}

int cmd_serve(const Overrides& o, const std::string& annotators, const std::string& store,
              const std::string& host, int port, const std::string& static_dir) {
  const RunConfig c = load_config(o);
  const Corpus corpus = load_corpus(c.corpus);
  SplitResult split = balanced_split(corpus.samples, c.split);
  AnnotationSettings settings;
  settings.k = c.k;
  settings.placeholder = c.placeholder;
  settings.seed = c.split.seed;
  AnnotationService service(std::move(split.evaluation), annotator_ids(annotators), settings,
                            std::make_shared<AnnotationStore>(store));
  AnnotationServer server(service, static_dir.empty()
                                       ? std::nullopt
                                       : std::optional<std::filesystem::path>(static_dir));
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "annotation service on http://" << host << ":" << bound << "\n" << std::flush;
  server.serve();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-explanation faithfulness harness"};
  app.require_subcommand(1);

  Overrides run_o;
  auto* run = app.add_subcommand("run", "Run the full experiment and write a bundle");
  add_run_flags(run, run_o);

  Overrides cal_o;
  auto* calibrate = app.add_subcommand("calibrate", "Fit temperatures on the calibration split");
  add_run_flags(calibrate, cal_o);

  std::string report_dir;
  std::string report_format = "all";
  auto* report = app.add_subcommand("report", "Recompute and re-export reports from a bundle");
  report->add_option("--bundle", report_dir, "Bundle directory")->required();
  report->add_option("--format", report_format, "json | csv | md | all");

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Recompute metrics and compare with the bundle");
  verify->add_option("--bundle", verify_dir, "Bundle directory")->required();

  Overrides serve_o;
  std::string annotators = "25";
  std::string store = "annotations.jsonl";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  add_run_flags(serve, serve_o);
  serve->add_option("--annotators", annotators, "Count or comma-separated ids");
  serve->add_option("--store", store, "Annotation store (JSONL)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks one)");
  serve->add_option("--static", static_dir, "Annotation UI bundle directory");

  Overrides fix_o;
  auto* fixtures = app.add_subcommand("fixtures", "Fill the replay cache (record_or_replay)");
  add_run_flags(fixtures, fix_o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_o, false, std::nullopt);
    if (*calibrate) return cmd_run(cal_o, true, std::nullopt);
    if (*report) return cmd_report(report_dir, report_format);
    if (*verify) return cmd_verify(verify_dir);
    if (*serve) return cmd_serve(serve_o, annotators, store, host, port, static_dir);
    if (*fixtures) return cmd_run(fix_o, false, CacheMode::kRecordOrReplay);
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
