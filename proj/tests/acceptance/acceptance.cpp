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


// Acceptance checks P1-P10. One line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracle.hpp"
#include "selfx/annotation.hpp"
#include "selfx/calibrate.hpp"
#include "selfx/errors.hpp"
#include "selfx/gateway.hpp"
#include "selfx/metrics.hpp"
#include "selfx/perturb.hpp"
#include "selfx/pipeline.hpp"
#include "selfx/protocol.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selfx;
using namespace selfx::testing;

namespace {

struct Failures {
  std::vector<std::string> items;
  void check(bool ok, const std::string& what) {
    if (!ok) items.push_back(what);
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Fails the run if anything reaches the network layer.
class NoBackend : public ChatBackend {
 public:
  CompletionResult complete(const GatewayConfig&, std::span<const ChatMessage>) override {
    throw Error(ErrorCode::kAuthError, "backend called during replay");
  }
};

RunOptions replay_only() {
  RunOptions o;
  o.backend_factory = [](const SourceSpec&) { return std::make_shared<NoBackend>(); };
  return o;
}

json load_json(const fs::path& p) { return json::parse(read_file(p)); }

void compare_sections(const json& expected, const json& actual, double tol, Failures& f) {
  for (const auto& [section, value] : expected.items()) {
    if (!actual.contains(section)) {
      f.check(false, "bundle lacks section " + section);
      continue;
    }
    for (const std::string& path : compare_json(value, actual[section], tol)) {
      f.check(false, section + path);
    }
  }
}

OracleInput oracle_for(const Scenario& sc, const ScenarioOptions& opts) {
  OracleInput in;
  in.corpus = sc.samples;
  in.eval_per_class = opts.eval_per_class;
  in.calib_per_class = opts.calib_per_class;
  in.seed = opts.split_seed;
  in.k = opts.k;
  in.paradigms = opts.paradigms;
  for (const std::string& s : opts.sources) {
    in.sources.push_back({s, s == "mock-b" ? lexicon_b() : lexicon_a()});
  }
  return in;
}

// ---------------------------------------------------------------------------

void p1(Failures& f) {
  const fs::path dir = make_temp_dir("p1");
  ScenarioOptions opts;  // 10 per class: 5 evaluation + 5 calibration
  const Scenario sc = write_mock_scenario(dir, opts);
  f.check(sc.samples.size() == 60, "corpus size " + std::to_string(sc.samples.size()));

  RunConfig cfg = RunConfig::load(sc.config);
  cfg.output_dir = dir / "out";
  const auto t0 = Clock::now();
  const ReportBundle bundle = run_experiment(cfg);
  const double elapsed = seconds_since(t0);
  f.check(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s");

  const json actual = bundle;
  const OracleInput in = oracle_for(sc, opts);
  compare_sections(oracle_reports(in), actual, 1e-9, f);

  for (const json& s : actual["exclusions"]["summary"]) {
    f.check(s["n_excluded"] == 0, "unexpected exclusions for " + s["source"].get<std::string>());
  }
  // Non-degenerate: the hard samples produce some errors.
  bool some_error = false;
  for (const json& c : actual["classification"]) {
    if (c["report"]["macro"]["accuracy"].get<double>() < 1.0) some_error = true;
  }
  f.check(some_error, "every source is perfectly accurate; oracle check is too weak");

  const json written = load_json(dir / "out" / "reports" / "bundle.json");
  f.check(written == actual, "reports/bundle.json differs from the returned bundle");
}

void p2(Failures& f) {
  const auto t0 = Clock::now();
  constexpr std::size_t n = 210;
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0.92, 0.98);
  std::vector<double> conf(n);
  for (double& c : conf) c = u(rng);
  std::sort(conf.begin(), conf.end());

  std::vector<CalibrationPoint> points;
  std::size_t n_correct = 0;
  double mean_conf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    LabelDistribution d;
    d.probs.fill((1.0 - conf[i]) / 5.0);
    d.probs[0] = conf[i];
    const bool correct = i % 5 < 3;  // 60% in every rank window
    n_correct += correct;
    mean_conf += conf[i] / n;
    points.push_back({d, correct ? Emotion::kSadness : Emotion::kHappiness});
  }
  f.check(n_correct * 10 == n * 6, "accuracy is not 0.60");
  f.check(std::abs(mean_conf - 0.95) < 0.005, "mean confidence " + std::to_string(mean_conf));

  const CalibrationModel m = fit_temperature(points, TemperatureGrid{}, 10);
  const double elapsed = seconds_since(t0);
  f.check(m.temperature > 1.0, "T* = " + std::to_string(m.temperature));
  f.check(m.fit_ece_before > 0.30, "pre-scale ECE " + std::to_string(m.fit_ece_before));
  f.check(m.fit_ece_after < 0.07, "post-scale ECE " + std::to_string(m.fit_ece_after));
  f.check(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s");

  // The reported post value is the ECE at T*.
  std::vector<double> c;
  std::vector<bool> ok;
  scaled_confidences(points, m.temperature, c, ok);
  f.check(ece(c, ok, 10) == m.fit_ece_after, "fit_ece_after is not ECE at T*");
}

void p3(Failures& f) {
  std::mt19937_64 rng(3);
  const std::vector<double> grid = TemperatureGrid{}.values();
  std::exponential_distribution<double> ex(1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(grid.size()) - 1);
  std::uniform_int_distribution<int> label(0, kNumLabels - 1);
  std::uniform_int_distribution<int> shape(0, 3);
  constexpr int trials = 10000;
  std::size_t correct_pre = 0, correct_post = 0, flips = 0;
  for (int t = 0; t < trials; ++t) {
    LabelDistribution d;
    double sum = 0.0;
    const int s = shape(rng);
    for (double& p : d.probs) {
      p = ex(rng);
      if (s == 1) p = std::pow(p, 8.0);          // peaked
      if (s == 2 && label(rng) == 0) p = 0.0;    // some zero entries
      if (s == 3 && label(rng) < 2) p = 1e-10;   // floored entries
      sum += p;
    }
    if (sum == 0.0) d.probs[0] = sum = 1.0;
    for (double& p : d.probs) p /= sum;
    const double T = grid[pick(rng)];
    const LabelDistribution scaled = apply_temperature(d, T);
    if (scaled.argmax() != d.argmax()) ++flips;
    const Emotion gold = label_from_code(label(rng));
    correct_pre += d.argmax() == gold;
    correct_post += scaled.argmax() == gold;
  }
  f.check(flips == 0, std::to_string(flips) + " argmax changes");
  f.check(correct_pre == correct_post, "accuracy differs pre/post");
}

void p4(Failures& f) {
  const std::vector<double> c = {1.0, 1.0};
  const double e = ece(c, {true, false}, 1);
  f.check(e == 0.5, "ece([1,1],[T,F],1) = " + std::to_string(e));

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> size(1, 300), bins(1, 25), coin(0, 1), special(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = size(rng), M = bins(rng);
    std::vector<double> conf(n);
    std::vector<bool> correct(n);
    for (int i = 0; i < n; ++i) {
      const int sp = special(rng);
      conf[i] = sp == 0 ? 1.0 : sp == 1 ? 0.0 : sp == 2 ? 0.5 : u(rng);
      correct[i] = coin(rng) == 1;
    }
    // Brute force: membership by interval, sums in input order.
    double expected = 0.0;
    std::size_t total = 0;
    for (int m = 1; m <= M; ++m) {
      const double lo = static_cast<double>(m - 1) / M, hi = static_cast<double>(m) / M;
      std::size_t cnt = 0, hits = 0;
      double csum = 0.0;
      for (int i = 0; i < n; ++i) {
        const bool in = (conf[i] >= lo && conf[i] < hi) || (m == M && conf[i] == 1.0);
        if (!in) continue;
        ++cnt;
        csum += conf[i];
        hits += correct[i];
      }
      total += cnt;
      if (cnt == 0) continue;
      const double acc = static_cast<double>(hits) / static_cast<double>(cnt);
      const double cf = csum / static_cast<double>(cnt);
      expected += static_cast<double>(cnt) / static_cast<double>(n) * std::abs(acc - cf);
    }
    const auto rb = reliability_bins(conf, correct, M);
    std::size_t rb_total = 0;
    for (const auto& b : rb) rb_total += b.count;
    if (total != static_cast<std::size_t>(n) || rb_total != total ||
        ece(conf, correct, M) != expected || ece_from_bins(rb) != expected) {
      ++bad;
    }
  }
  f.check(bad == 0, std::to_string(bad) + " of 1000 reconstructions differ");
}

const char* kWorkedText =
    "دلم اون حالیو میخواد که اونقدر فکرم رها باشه اونقدر سرگرم خوندن شاهکارای ادبی "
    "دنیا باشم ساعت ۳ یهو ب پنجره نگاه کنم ببینم برف میاد و ده ها برابر حالم خوب شه و "
    "با اشتیاق ب خوندن ادامه بدم";
const char* kMaskedText =
    "[حذف شده] اون حالیو میخواد که اونقدر فکرم رها باشه اونقدر [حذف شده] خوندن "
    "شاهکارای ادبی دنیا باشم ساعت ۳ یهو ب پنجره نگاه کنم ببینم برف میاد و ده ها برابر "
    "حالم [حذف شده] شه و با [حذف شده] ب خوندن [حذف شده] بدم";
const std::vector<std::string> kWorkedWords = {"ادامه", "اشتیاق", "خوب", "سرگرم", "دلم"};

void p5(Failures& f) {
  const MaskResult r = mask_topk(kWorkedText, kWorkedWords, "[حذف شده]");
  f.check(normalize_text(r.text) == normalize_text(kMaskedText), "masked text differs");
  f.check(r.text == kMaskedText, "masked text differs before normalization");
  f.check(r.report.unmatched.empty() && !r.report.fallback_used, "unexpected fallback");
  for (const std::string& w : kWorkedWords) {
    const auto it = r.report.counts.find(w);
    f.check(it != r.report.counts.end() && it->second == 1, "count for " + w);
  }
}

const std::string kSys =
    "You are an emotion classifier. You must classify the emotion and output the top "
    "influential words in CSV format. For classifying, you are strictly required to output "
    "only one of the following English numbers: 0, 1, 2, 3, 4, or 5. No other output is "
    "acceptable. For top influential words, you can only output Persian words in the text.";
const std::string kSysOnly =
    "You are an emotion classifier. You are provided with some influential words that have "
    "been extracted from the text. You must classify the emotion based only on these words. "
    "For classifying, you are strictly required to output only one of the following English "
    "numbers: 0, 1, 2, 3, 4, or 5. No other output is acceptable.";
const std::string kSysRemoved =
    "You are an emotion classifier. In the text, some influential words have been replaced "
    "with the placeholder [حذف شده]. You must classify the emotion based on the text, "
    "considering these [حذف شده] words as part of the context. For classifying, you are "
    "strictly required to output only one of the following English numbers: 0, 1, 2, 3, 4, "
    "or 5. No other output is acceptable.";
const std::string kCats =
    "Classify the following text into one of the categories: 'Sadness':0, 'Happiness':1, "
    "'Anger':2, 'Surprise':3, 'Hatred':4, 'Fear':5.";
const std::string kTail =
    " Only output an English number showing the class of the text. Make sure not to output "
    "any other character. Text: ";
const std::string kClassify = kCats + " For each class, output the mapped number." + kTail;
const std::string kClassifyVariant = kCats + " For each class output the mapped number." + kTail;
const std::string kListBody =
    "list the top 5 most influential words that contributed to this classification in CSV "
    "format (in a single line). Make sure to provide only 5 Persian words that exist in the "
    "original text and don't output any other token. Text: ";

using Turns = std::vector<std::pair<Role, std::string>>;

void check_transcript(const Transcript& t, const Turns& expected, const std::string& name,
                      Failures& f) {
  f.check(t.messages.size() == expected.size(),
          name + ": " + std::to_string(t.messages.size()) + " messages");
  for (std::size_t i = 0; i < std::min(t.messages.size(), expected.size()); ++i) {
    f.check(t.messages[i].role == expected[i].first,
            name + ": role of message " + std::to_string(i));
    f.check(t.messages[i].content == expected[i].second,
            name + ": text of message " + std::to_string(i));
  }
}

std::size_t assistant_turns(const Transcript& t) {
  return std::count_if(t.messages.begin(), t.messages.end(),
                       [](const ChatMessage& m) { return m.role == Role::kAssistant; });
}

void p6(Failures& f) {
  const fs::path fixtures = fs::path(SELFX_FIXTURES_DIR) / "worked_example";
  const json sj = load_json(fixtures / "sample.json");
  const Sample sample{sj["id"], sj["text"], label_from_code(sj["label"]), Split::kEvaluation};
  f.check(sample.text == kWorkedText, "fixture text differs from the worked example");

  GatewayConfig cfg;
  cfg.source = "gpt-4o";
  cfg.model = "gpt-4o";
  cfg.cache_mode = CacheMode::kReplay;
  cfg.cache_dir = fixtures / "cache";
  Gateway gw(cfg, std::make_shared<NoBackend>());

  const std::string text = kWorkedText;
  const std::string csv = "ادامه, اشتیاق, خوب, سرگرم, دلم";
  const FlowOutcome pe = run_pe(gw, sample, 5);
  const FlowOutcome ep = run_ep(gw, sample, 5);
  f.check(pe.ok() && ep.ok(), "fixture outputs rejected");
  if (!pe.ok() || !ep.ok()) return;

  check_transcript(pe.transcript,
                   {{Role::kSystem, kSys},
                    {Role::kUser, kClassify + text},
                    {Role::kAssistant, "1"},
                    {Role::kUser, "Then, " + kListBody + text},
                    {Role::kAssistant, csv}},
                   "PE", f);
  check_transcript(ep.transcript,
                   {{Role::kSystem, kSys},
                    {Role::kUser, "List the top 5 most influential words that contributed to "
                                  "this classification in CSV format (in a single line). Make "
                                  "sure to provide only 5 Persian words that exist in the "
                                  "original text and don't output any other token. Text: " +
                                      text},
                    {Role::kAssistant, csv},
                    {Role::kUser, "Then, " + kClassify + text},
                    {Role::kAssistant, "1"}},
                   "EP", f);
  f.check(assistant_turns(pe.transcript) == 2, "PE assistant turns");
  f.check(assistant_turns(ep.transcript) == 2, "EP assistant turns");

  for (const FlowOutcome* flow : {&pe, &ep}) {
    const std::string tag = flow == &pe ? "PE" : "EP";
    f.check(flow->prediction && flow->prediction->label == Emotion::kHappiness, tag + " label");
    f.check(flow->explanation && flow->explanation->words == kWorkedWords, tag + " words");
    const FlowOutcome only =
        run_variant(gw, sample, *flow->explanation, InputVariant::kTopKOnly, 5);
    const FlowOutcome removed =
        run_variant(gw, sample, *flow->explanation, InputVariant::kTopKRemoved, 5);
    check_transcript(only.transcript,
                     {{Role::kSystem, kSysOnly},
                      {Role::kUser, kClassifyVariant + csv},
                      {Role::kAssistant, "1"}},
                     tag + " TopKOnly", f);
    check_transcript(removed.transcript,
                     {{Role::kSystem, kSysRemoved},
                      {Role::kUser, kClassifyVariant + kMaskedText},
                      {Role::kAssistant, "0"}},
                     tag + " TopKRemoved", f);
    f.check(removed.prediction && removed.prediction->label == Emotion::kSadness,
            tag + " removed label");
  }
  f.check(gw.backend_calls() == 0, "backend was called");
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(SELFX_CLI) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

void p7(Failures& f) {
  const fs::path dir = make_temp_dir("p7");
  const Scenario sc = write_mock_scenario(dir, ScenarioOptions{});
  const std::string conf = "-c '" + sc.config.string() + "'";
  f.check(cli("fixtures " + conf + " --out '" + (dir / "rec").string() + "'") == 0,
          "fixtures failed");
  const fs::path a = dir / "a", b = dir / "b";
  for (const fs::path& out : {a, b}) {
    f.check(cli("run " + conf + " --seed 13 --cache-mode replay --out '" + out.string() + "'") == 0,
            "run failed for " + out.filename().string());
  }
  if (!f.items.empty()) return;
  const auto fa = files_under(a), fb = files_under(b);
  f.check(fa == fb, "bundles list different files");
  f.check(fa.size() >= 8, "bundle has only " + std::to_string(fa.size()) + " files");
  for (const char* needed : {"config.json", "transcripts.jsonl", "predictions.jsonl",
                             "explanations.jsonl", "calibration.json"}) {
    f.check(fs::exists(a / needed), std::string("missing ") + needed);
  }
  for (const fs::path& rel : fa) {
    if (fs::exists(b / rel)) {
      f.check(read_file(a / rel) == read_file(b / rel), rel.string() + " differs");
    }
  }
  f.check(cli("verify --bundle '" + a.string() + "'") == 0, "verify failed");
}

void p8(Failures& f) {
  const fs::path dir = make_temp_dir("p8");
  ScenarioOptions opts;
  opts.per_class = 15;
  opts.eval_per_class = 10;
  opts.calib_per_class = 5;
  opts.sources = {"mock-a"};
  opts.paradigms = {"PE"};
  opts.cache_mode = "record";
  const Scenario sc = write_mock_scenario(dir, opts);

  RunConfig rec = RunConfig::load(sc.config);
  rec.output_dir = dir / "recorded";
  run_experiment(rec);

  // Overwrite three recorded first-turn classifications.
  OracleInput in = oracle_for(sc, opts);
  const OracleSplit split = oracle_split(in);
  f.check(split.evaluation.size() == 60, "evaluation split size");
  std::vector<Sample> eval = split.evaluation;
  std::sort(eval.begin(), eval.end(), [](const Sample& x, const Sample& y) { return x.id < y.id; });
  const SourceSpec& spec = rec.sources.front();
  const ResponseCache cache(spec.gateway.cache_dir);
  std::set<std::string> broken;
  for (std::size_t i : {3u, 17u, 41u}) {
    const Sample& s = eval[i];
    const auto msgs = build_prompt(TemplateId::kClassifyFull, s.text, opts.k);
    const std::string key = request_key(spec.gateway, msgs);
    auto stored = cache.load(key);
    f.check(stored.has_value(), "no recorded entry for " + s.id);
    if (!stored) return;
    CompletionResult bad = *stored;
    bad.text = "The label is 1";
    bad.token_logprobs = {TokenLogprobs{"The", {{"The", -0.1}, {"1", -2.5}}}};
    cache.store(key, request_descriptor(spec.gateway, msgs), bad);
    broken.insert(s.id);
  }

  RunConfig rep = RunConfig::load(sc.config);
  rep.cache_mode = CacheMode::kReplay;
  rep.apply_cache_settings();
  rep.output_dir = dir / "replayed";
  const ReportBundle bundle = run_experiment(rep, replay_only());
  const json actual = bundle;

  std::set<std::string> excluded_ids;
  for (const Exclusion& e : bundle.excluded) {
    if (e.split == Split::kEvaluation) excluded_ids.insert(e.sample_id);
    f.check(e.reason.rfind("malformed:", 0) == 0, "reason " + e.reason);
  }
  f.check(bundle.excluded.size() == 3, std::to_string(bundle.excluded.size()) + " exclusions");
  f.check(excluded_ids == broken, "excluded ids differ from the injected ones");
  f.check(bundle.exclusions.size() == 1, "exclusion summary rows");
  if (!bundle.exclusions.empty()) {
    const ExclusionSummary& s = bundle.exclusions.front();
    f.check(s.n_eval == 60 && s.n_included == 57 && s.n_excluded == 3,
            "summary " + std::to_string(s.n_included) + "/" + std::to_string(s.n_eval));
  }
  for (const FaithfulnessRow& r : bundle.faithfulness_pre) {
    f.check(r.n == 57, "faithfulness n = " + std::to_string(r.n));
  }
  for (const ClassificationEntry& c : bundle.classification) {
    f.check(c.report.n == 57, "classification n = " + std::to_string(c.report.n));
  }

  in.excluded[{"mock-a", "PE"}] = broken;
  compare_sections(oracle_reports(in), actual, 1e-9, f);

  const std::string csv = read_file(dir / "replayed" / "reports" / "exclusions.csv");
  const std::string md = read_file(dir / "replayed" / "reports" / "report.md");
  for (const std::string& id : broken) {
    f.check(csv.find(id) != std::string::npos, id + " missing from exclusions.csv");
    f.check(md.find(id) != std::string::npos, id + " missing from report.md");
  }
}

// Five own-class words of weight 1 plus two weaker words of the next class:
// the words alone are more confident than the full text.
void p9(Failures& f) {
  const fs::path dir = make_temp_dir("p9");
  std::vector<LexWord> lex;
  auto own = [](int c, int i) { return "own" + std::to_string(c) + std::string(1, 'a' + i); };
  auto weak = [](int c, int i) { return "weak" + std::to_string(c) + std::string(1, 'a' + i); };
  for (int c = 0; c < kNumLabels; ++c) {
    for (int i = 0; i < 5; ++i) lex.push_back({own(c, i), c, 1.0});
    for (int i = 0; i < 2; ++i) lex.push_back({weak(c, i), c, 0.4});
  }
  std::vector<Sample> corpus;
  for (int c = 0; c < kNumLabels; ++c) {
    for (int j = 0; j < 3; ++j) {
      const int w = j == 2 ? (c + 1) % kNumLabels : c;  // one mislabeled-looking text per class
      const int d = (w + 1) % kNumLabels;
      std::string text = own(w, 0) + " filler" + std::to_string(j) + " " + weak(d, 0);
      for (int i = 1; i < 5; ++i) text += " " + own(w, i);
      text += " " + weak(d, 1) + " tail";
      char id[16];
      std::snprintf(id, sizeof id, "q%02d", c * 3 + j);
      corpus.push_back({id, text, label_from_code(c), Split::kEvaluation});
    }
  }
  write_jsonl_corpus(dir / "corpus.jsonl", corpus);
  write_file(dir / "lexicon.json", lexicon_json(lex).dump());
  const json config = {
      {"corpus", "corpus.jsonl"},
      {"paradigms", {"PE", "EP"}},
      {"sources", {{{"name", "mock"}, {"backend", "mock"}, {"model", "mock"},
                    {"lexicon", "lexicon.json"}}}},
      {"split", {{"eval_per_class", 1}, {"calib_per_class", 2}, {"seed", 13}}},
      {"cache_dir", "cache"},
      {"cache_mode", "record"}};
  write_file(dir / "config.json", config.dump());

  RunConfig rec = RunConfig::load(dir / "config.json");
  rec.output_dir = dir / "recorded";
  run_experiment(rec);
  RunConfig rep = RunConfig::load(dir / "config.json");
  rep.cache_mode = CacheMode::kReplay;
  rep.apply_cache_settings();
  rep.output_dir = dir / "out";
  const ReportBundle bundle = run_experiment(rep, replay_only());

  // Scores: own class 5, next class 0.8 (full text) or 0 (words only).
  auto suff_at = [](double T) {
    const double top = std::exp(5.0 / T);
    const double full = top / (top + std::exp(0.8 / T) + 4.0);
    const double only = top / (top + 5.0);
    return full - only;
  };
  std::map<std::string, double> temperature;
  for (const CalibrationSummary& s : bundle.calibration) {
    if (s.model) temperature[std::string(to_string(s.paradigm))] = s.model->temperature;
  }

  const json j = load_json(dir / "out" / "reports" / "bundle.json");
  const std::string csv = read_file(dir / "out" / "reports" / "faithfulness.csv");
  const std::string md = read_file(dir / "out" / "reports" / "report.md");
  for (const char* scaling : {"pre", "post"}) {
    const json& rows = j["faithfulness"][scaling];
    f.check(rows.size() == 2, std::string(scaling) + " rows");
    for (const json& r : rows) {
      const std::string par = r["paradigm"];
      const double T = std::string(scaling) == "pre" ? 1.0 : temperature[par];
      const double expected = suff_at(T);
      const double got = r["suff"].get<double>();
      f.check(expected < 0.0 && got < 0.0, std::string(scaling) + " " + par + " suff not negative");
      f.check(std::abs(got - expected) < 1e-12,
              std::string(scaling) + " " + par + " suff " + std::to_string(got) + " vs " +
                  std::to_string(expected));
      f.check(r["n"] == 6, "n");

      // CSV: scaling,source,paradigm,comp,suff,...
      const std::string prefix = std::string(scaling) + ",mock," + par + ",";
      const auto at = csv.find("\n" + prefix);
      f.check(at != std::string::npos, "csv row " + prefix);
      if (at == std::string::npos) continue;
      std::stringstream line(csv.substr(at + 1, csv.find('\n', at + 1) - at - 1));
      std::vector<std::string> cells;
      for (std::string cell; std::getline(line, cell, ',');) cells.push_back(cell);
      f.check(cells.size() >= 5 && !cells[4].empty() && cells[4][0] == '-',
              "csv suff cell lost its sign");
      if (cells.size() >= 5 && !cells[4].empty()) {
        f.check(std::abs(std::stod(cells[4]) - 100.0 * expected) <= 0.005 + 1e-9,
                "csv suff value " + cells[4]);
        f.check(md.find("| " + cells[4] + " |") != std::string::npos,
                "markdown lacks suff " + cells[4]);
      }
    }
  }
}

void p10(Failures& f) {
  std::mt19937_64 rng(10);
  std::vector<std::string> vocab;
  for (int i = 0; i < 12; ++i) vocab.push_back("واژه" + std::to_string(i));
  auto draw = [&] {
    std::vector<std::string> v = vocab;
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(5);
    return to_word_set(v);
  };
  std::size_t bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const WordSet a = draw(), b = draw();
    const double fa = feature_agreement(a, b, 5), io = iou(a, b);
    if (!(0.0 <= io && io <= fa && fa <= 1.0)) ++bad;
    if (feature_agreement(a, a, 5) != 1.0 || iou(a, a) != 1.0) ++bad;
    if (feature_agreement(b, a, 5) != fa || iou(b, a) != io) ++bad;
  }
  f.check(bad == 0, std::to_string(bad) + " violations");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Failures&)>>> checks = {
      {"P1 metric oracle equivalence", p1},
      {"P2 calibration direction and magnitude", p2},
      {"P3 argmax invariance under temperature", p3},
      {"P4 ECE unit case and bin reconstruction", p4},
      {"P5 masking fidelity on the worked example", p5},
      {"P6 protocol conformance against replay fixtures", p6},
      {"P7 determinism of replayed runs", p7},
      {"P8 discard accounting", p8},
      {"P9 sufficiency sign", p9},
      {"P10 agreement bounds", p10},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Failures f;
    const auto t0 = Clock::now();
    try {
      fn(f);
    } catch (const std::exception& e) {
      f.items.push_back(std::string("exception: ") + e.what());
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.2fs", seconds_since(t0));
    if (f.items.empty()) {
      std::cout << "[PASS] " << name << " (" << secs << ")\n";
    } else {
      ++failed;
      std::cout << "[FAIL] " << name << " (" << secs << "): " << f.items.front();
      if (f.items.size() > 1) std::cout << " (+" << f.items.size() - 1 << " more)";
      std::cout << "\n";
      for (std::size_t i = 1; i < std::min<std::size_t>(f.items.size(), 10); ++i) {
        std::cout << "       " << f.items[i] << "\n";
      }
    }
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " failed") << "\n";
  return failed == 0 ? 0 : 1;
}
