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

#include "selfx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "selfx/annotation.hpp"
#include "selfx/errors.hpp"
#include "selfx/mock_backend.hpp"
#include "selfx/report.hpp"

namespace selfx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  fs::path p = j[key].get<std::string>();
  if (p.empty()) return {};
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

json opt_paradigm(const std::optional<Paradigm>& p) {
  return p ? json(to_string(*p)) : json(nullptr);
}

std::optional<Paradigm> read_paradigm(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return parse_paradigm(j[key].get<std::string>());
}

json opt_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

int code_of(InputVariant v) { return static_cast<int>(v); }

bool aborts_run(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCacheMiss:
    case ErrorCode::kAuthError:
    case ErrorCode::kConfigError:
    case ErrorCode::kUnrecognizedPrompt:
      return true;
    default:
      return false;
  }
}

}  // namespace

// ---- RunConfig --------------------------------------------------------------

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfigError, msg); };
  if (corpus.empty()) fail("corpus path is required");
  if (k < 1) fail("k must be >= 1");
  if (paradigms.empty()) fail("at least one paradigm is required");
  if (sources.empty()) fail("at least one model source is required");
  if (split.eval_per_class < 1) fail("eval_per_class must be >= 1");
  if (split.calib_per_class < 1) fail("calib_per_class must be >= 1");
  if (calibration.m_fit < 1 || calibration.m_diagram < 1) fail("bin counts must be >= 1");
  calibration.grid.validate();
  if (trim(placeholder).empty()) fail("placeholder is empty");
  std::set<std::string> names;
  for (const SourceSpec& s : sources) {
    if (s.gateway.source.empty()) fail("source name is empty");
    if (s.gateway.source == kHumanSource) fail("source name 'human' is reserved");
    if (!names.insert(s.gateway.source).second) {
      fail("duplicate source name " + s.gateway.source);
    }
    if (s.backend == "mock") {
      if (s.lexicon.empty()) fail("mock source " + s.gateway.source + " needs a lexicon");
    } else if (s.backend == "scripted") {
      if (s.script.empty()) fail("scripted source " + s.gateway.source + " needs a script");
    } else if (s.backend == "openai") {
      if (s.gateway.endpoint.empty()) fail("source " + s.gateway.source + " needs an endpoint");
    } else {
      fail("unknown backend '" + s.backend + "'");
    }
    s.gateway.validate();
  }
}

void RunConfig::apply_cache_settings() {
  for (SourceSpec& s : sources) {
    s.gateway.cache_mode = cache_mode;
    s.gateway.cache_dir =
        cache_dir.empty() ? fs::path() : cache_dir / sanitize_filename(s.gateway.source);
  }
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "config must be an object");
  RunConfig c;
  try {
    c.corpus = resolve(base_dir, j, "corpus");
    c.k = j.value("k", kDefaultTopK);
    if (j.contains("paradigms")) {
      c.paradigms.clear();
      for (const auto& p : j["paradigms"]) c.paradigms.push_back(parse_paradigm(p.get<std::string>()));
    }
    for (const auto& sj : j.value("sources", json::array())) {
      SourceSpec s;
      s.backend = sj.value("backend", std::string("openai"));
      s.gateway.model = sj.value("model", std::string());
      s.gateway.source = sj.value("name", s.gateway.model);
      s.gateway.endpoint = sj.value("endpoint", std::string());
      s.gateway.api_key_env = sj.value("api_key_env", std::string());
      const json dec = sj.value("decoding", json::object());
      s.gateway.decoding.temperature = dec.value("temperature", 0.0);
      s.gateway.decoding.max_tokens = dec.value("max_tokens", 64);
      s.gateway.decoding.top_logprobs = dec.value("top_logprobs", 20);
      const json retry = sj.value("retry", json::object());
      s.gateway.retry.max_attempts = retry.value("max_attempts", 4);
      s.gateway.retry.base_backoff =
          std::chrono::milliseconds(retry.value("base_backoff_ms", 500));
      s.gateway.max_concurrency = sj.value("max_concurrency", 4);
      s.lexicon = resolve(base_dir, sj, "lexicon");
      s.script = resolve(base_dir, sj, "script");
      c.sources.push_back(std::move(s));
    }
    c.human_annotations = resolve(base_dir, j, "human_annotations");
    const json cal = j.value("calibration", json::object());
    if (cal.contains("grid")) c.calibration.grid = cal["grid"].get<TemperatureGrid>();
    c.calibration.m_fit = cal.value("m_fit", 10);
    c.calibration.m_diagram = cal.value("m_diagram", 20);
    c.placeholder = j.value("placeholder", std::string(kDefaultPlaceholder));
    const json sp = j.value("split", json::object());
    c.split.eval_per_class = sp.value("eval_per_class", std::size_t{50});
    c.split.calib_per_class = sp.value("calib_per_class", std::size_t{35});
    c.split.seed = sp.value("seed", std::uint64_t{13});
    c.cache_dir = resolve(base_dir, j, "cache_dir");
    c.cache_mode = parse_cache_mode(j.value("cache_mode", std::string("off")));
    c.output_dir = resolve(base_dir, j, "output_dir");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("bad config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw Error(ErrorCode::kConfigError, std::string("bad config: ") + e.what());
  }
  c.apply_cache_settings();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, "config " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void to_json(json& j, const RunConfig& c) {
  json sources = json::array();
  for (const SourceSpec& s : c.sources) {
    json sj{{"name", s.gateway.source},
            {"backend", s.backend},
            {"model", s.gateway.model},
            {"endpoint", s.gateway.endpoint},
            {"api_key_env", s.gateway.api_key_env},
            {"decoding",
             {{"temperature", s.gateway.decoding.temperature},
              {"max_tokens", s.gateway.decoding.max_tokens},
              {"top_logprobs", s.gateway.decoding.top_logprobs}}},
            {"retry",
             {{"max_attempts", s.gateway.retry.max_attempts},
              {"base_backoff_ms", s.gateway.retry.base_backoff.count()}}},
            {"max_concurrency", s.gateway.max_concurrency}};
    if (!s.lexicon.empty()) sj["lexicon"] = s.lexicon.string();
    if (!s.script.empty()) sj["script"] = s.script.string();
    sources.push_back(std::move(sj));
  }
  json paradigms = json::array();
  for (Paradigm p : c.paradigms) paradigms.push_back(to_string(p));
  j = json{{"corpus", c.corpus.string()},
           {"k", c.k},
           {"paradigms", std::move(paradigms)},
           {"sources", std::move(sources)},
           {"human_annotations", c.human_annotations.empty()
                                     ? json(nullptr)
                                     : json(c.human_annotations.string())},
           {"calibration",
            {{"grid", c.calibration.grid},
             {"m_fit", c.calibration.m_fit},
             {"m_diagram", c.calibration.m_diagram}}},
           {"placeholder", c.placeholder},
           {"split",
            {{"eval_per_class", c.split.eval_per_class},
             {"calib_per_class", c.split.calib_per_class},
             {"seed", c.split.seed}}},
           {"cache_dir", c.cache_dir.string()},
           {"cache_mode", to_string(c.cache_mode)}};
}

// ---- record types -------------------------------------------------------------

void to_json(json& j, const Exclusion& e) {
  j = json{{"sample_id", e.sample_id},
           {"source", e.source},
           {"paradigm", opt_paradigm(e.paradigm)},
           {"split", to_string(e.split)},
           {"reason", e.reason},
           {"detail", e.detail}};
}

void from_json(const json& j, Exclusion& e) {
  e.sample_id = j.at("sample_id").get<std::string>();
  e.source = j.at("source").get<std::string>();
  e.paradigm = read_paradigm(j, "paradigm");
  e.split = parse_split(j.at("split").get<std::string>());
  e.reason = j.at("reason").get<std::string>();
  e.detail = j.value("detail", json());
}

void to_json(json& j, const MaskingEntry& m) {
  j = json{{"source", m.source}, {"paradigm", to_string(m.paradigm)}, {"report", m.report}};
}

void from_json(const json& j, MaskingEntry& m) {
  m.source = j.at("source").get<std::string>();
  m.paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
  m.report = j.at("report").get<MaskingReport>();
}

// ---- execution ----------------------------------------------------------------

std::shared_ptr<ChatBackend> default_backend(const SourceSpec& spec) {
  if (spec.backend == "mock") {
    return std::make_shared<MockBackend>(MockLexicon::load(spec.lexicon));
  }
  if (spec.backend == "scripted") return ScriptedBackend::load(spec.script);
  if (spec.backend == "openai") return std::make_shared<OpenAiBackend>();
  throw Error(ErrorCode::kConfigError, "unknown backend '" + spec.backend + "'");
}

namespace {

struct TaskResult {
  std::vector<Transcript> transcripts;
  std::vector<Prediction> predictions;
  std::optional<Explanation> explanation;
  std::optional<MaskingEntry> masking;
  std::optional<Exclusion> exclusion;
};

std::string malformed_reason(const MalformedOutput& m) {
  return "malformed:" + std::string(to_string(m.stage)) + ":" +
         std::string(to_string(m.reason));
}

TaskResult run_task(Gateway& gateway, Paradigm paradigm, const Sample& sample,
                    int k, const std::string& placeholder) {
  TaskResult r;
  const std::string& source = gateway.config().source;
  auto exclude = [&](std::string reason, json detail) {
    if (r.exclusion) return;
    r.exclusion = Exclusion{sample.id, source, paradigm, sample.split,
                            std::move(reason), std::move(detail)};
  };
  try {
    FlowOutcome flow = paradigm == Paradigm::kPE ? run_pe(gateway, sample, k)
                                                 : run_ep(gateway, sample, k);
    r.transcripts.push_back(flow.transcript);
    if (flow.prediction) r.predictions.push_back(*flow.prediction);
    if (flow.explanation) r.explanation = *flow.explanation;
    if (!flow.ok()) {
      // A calibration sample only needs its full-text prediction.
      if (sample.split == Split::kEvaluation || !flow.prediction) {
        exclude(malformed_reason(flow.malformed.front()), json(flow.malformed));
      }
      return r;
    }
    if (sample.split == Split::kCalibration) return r;

    for (InputVariant v : {InputVariant::kTopKOnly, InputVariant::kTopKRemoved}) {
      FlowOutcome var = run_variant(gateway, sample, *flow.explanation, v, k, placeholder);
      r.transcripts.push_back(var.transcript);
      if (var.masking) {
        r.masking = MaskingEntry{source, paradigm, *var.masking};
        if (!var.masking->unmatched.empty()) {
          exclude("masking:unmatched", json(var.masking->unmatched));
        }
      }
      if (var.prediction) r.predictions.push_back(*var.prediction);
      if (!var.ok()) exclude(malformed_reason(var.malformed.front()), json(var.malformed));
      if (r.exclusion) return r;
    }
  } catch (const Error& e) {
    if (aborts_run(e.code())) throw;
    exclude("error:" + std::string(error_code_name(e.code())),
            json{{"message", e.what()}});
  }
  return r;
}

// Runs f(0..n-1) on up to `workers` threads. The first exception stops
// the pool and is rethrown.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& f) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < count; ++t) threads.emplace_back(worker);
  if (count > 0) worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string paradigm_key(const std::optional<Paradigm>& p) {
  return p ? std::string(to_string(*p)) : std::string();
}

void sort_record(RunRecord& rec) {
  auto pkey = [](const auto& x) {
    return std::make_tuple(x.source, paradigm_key(x.paradigm), x.sample_id);
  };
  std::stable_sort(rec.transcripts.begin(), rec.transcripts.end(),
                   [&](const Transcript& a, const Transcript& b) {
                     return std::tie(a.source, a.sample_id, a.flow) <
                            std::tie(b.source, b.sample_id, b.flow) ||
                            (std::tie(a.source, a.sample_id, a.flow) ==
                                 std::tie(b.source, b.sample_id, b.flow) &&
                             paradigm_key(a.paradigm) < paradigm_key(b.paradigm));
                   });
  std::stable_sort(rec.predictions.begin(), rec.predictions.end(),
                   [&](const Prediction& a, const Prediction& b) {
                     return std::tuple_cat(pkey(a), std::make_tuple(code_of(a.variant))) <
                            std::tuple_cat(pkey(b), std::make_tuple(code_of(b.variant)));
                   });
  std::stable_sort(rec.explanations.begin(), rec.explanations.end(),
                   [&](const Explanation& a, const Explanation& b) { return pkey(a) < pkey(b); });
  std::stable_sort(rec.exclusions.begin(), rec.exclusions.end(),
                   [&](const Exclusion& a, const Exclusion& b) { return pkey(a) < pkey(b); });
  std::stable_sort(rec.masking.begin(), rec.masking.end(),
                   [](const MaskingEntry& a, const MaskingEntry& b) {
                     return std::make_tuple(a.source, std::string(to_string(a.paradigm)),
                                            a.report.sample_id) <
                            std::make_tuple(b.source, std::string(to_string(b.paradigm)),
                                            b.report.sample_id);
                   });
}

}  // namespace

RunRecord execute_run(const RunConfig& config, const RunOptions& options) {
  config.validate();
  RunRecord rec;
  rec.config = config;
  const Corpus corpus = load_corpus(config.corpus);
  rec.corpus_skipped = corpus.skipped_labels;
  SplitResult split = balanced_split(corpus.samples, config.split);
  rec.evaluation = std::move(split.evaluation);
  rec.calibration = std::move(split.calibration);

  const BackendFactory factory = options.backend_factory ? options.backend_factory
                                                         : BackendFactory(default_backend);
  for (const SourceSpec& spec : config.sources) {
    Gateway gateway(spec.gateway, factory(spec), options.sleep);
    std::vector<std::pair<Paradigm, const Sample*>> tasks;
    for (Paradigm p : config.paradigms) {
      for (const Sample& s : rec.calibration) tasks.emplace_back(p, &s);
      if (!options.calibration_only) {
        for (const Sample& s : rec.evaluation) tasks.emplace_back(p, &s);
      }
    }
    std::vector<TaskResult> results(tasks.size());
    parallel_for(tasks.size(), spec.gateway.max_concurrency, [&](std::size_t i) {
      results[i] = run_task(gateway, tasks[i].first, *tasks[i].second, config.k,
                            config.placeholder);
    });
    for (TaskResult& r : results) {
      for (auto& t : r.transcripts) rec.transcripts.push_back(std::move(t));
      for (auto& p : r.predictions) rec.predictions.push_back(std::move(p));
      if (r.explanation) rec.explanations.push_back(std::move(*r.explanation));
      if (r.masking) rec.masking.push_back(std::move(*r.masking));
      if (r.exclusion) rec.exclusions.push_back(std::move(*r.exclusion));
    }
  }

  if (!config.human_annotations.empty() && !options.calibration_only) {
    const HumanSource human = load_human_source(config.human_annotations);
    std::set<std::string> eval_ids;
    for (const Sample& s : rec.evaluation) eval_ids.insert(s.id);
    for (const Explanation& e : human.explanations) {
      if (eval_ids.count(e.sample_id)) rec.explanations.push_back(e);
    }
    for (const Prediction& p : human.predictions) {
      if (eval_ids.count(p.sample_id)) rec.predictions.push_back(p);
    }
  }
  sort_record(rec);
  return rec;
}

// ---- report computation -------------------------------------------------------

namespace {

using PredKey = std::tuple<std::string, std::string, std::string, int>;
using ExplKey = std::tuple<std::string, std::string, std::string>;

struct Index {
  std::map<PredKey, const Prediction*> predictions;
  std::map<ExplKey, const Explanation*> explanations;
  std::set<ExplKey> excluded;  // evaluation split only
  std::map<ExplKey, std::string> exclusion_reason;

  const Prediction* pred(const std::string& src, const std::optional<Paradigm>& p,
                         const std::string& id, InputVariant v) const {
    auto it = predictions.find({src, paradigm_key(p), id, code_of(v)});
    return it == predictions.end() ? nullptr : it->second;
  }
  const Explanation* expl(const std::string& src, const std::optional<Paradigm>& p,
                          const std::string& id) const {
    auto it = explanations.find({src, paradigm_key(p), id});
    return it == explanations.end() ? nullptr : it->second;
  }
};

struct Included {
  std::vector<const Sample*> samples;
  std::vector<VariantTriple> triples;  // aligned with samples when complete
  ExclusionSummary summary;
};

// Evaluation samples (id order) with every artifact a model source needs.
Included included_model(const Index& idx, const std::vector<const Sample*>& eval,
                        const std::string& src, Paradigm p) {
  Included inc;
  inc.summary.source = src;
  inc.summary.paradigm = p;
  inc.summary.n_eval = eval.size();
  for (const Sample* s : eval) {
    const ExplKey key{src, paradigm_key(p), s->id};
    const Prediction* full = idx.pred(src, p, s->id, InputVariant::kFullText);
    const Prediction* only = idx.pred(src, p, s->id, InputVariant::kTopKOnly);
    const Prediction* removed = idx.pred(src, p, s->id, InputVariant::kTopKRemoved);
    const bool complete = full && only && removed && idx.expl(src, p, s->id);
    if (idx.excluded.count(key) || !complete) {
      auto it = idx.exclusion_reason.find(key);
      const std::string reason = it != idx.exclusion_reason.end() ? it->second : "missing";
      ++inc.summary.by_reason[reason];
      ++inc.summary.n_excluded;
      continue;
    }
    inc.samples.push_back(s);
    inc.triples.push_back(VariantTriple{full, only, removed});
  }
  inc.summary.n_included = inc.samples.size();
  return inc;
}

void collect(const std::vector<const Prediction*>& preds, const std::vector<Emotion>& gold,
             std::optional<double> t, std::vector<double>& conf, std::vector<bool>& correct) {
  conf.clear();
  correct.clear();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    conf.push_back(confidence_of(*preds[i], t));
    correct.push_back(preds[i]->label == gold[i]);
  }
}

}  // namespace

ReportBundle compute_reports(const RunRecord& record) {
  const RunConfig& cfg = record.config;
  ReportBundle b;
  b.seed = cfg.split.seed;
  b.k = cfg.k;
  b.m_fit = cfg.calibration.m_fit;
  b.m_diagram = cfg.calibration.m_diagram;
  b.excluded = record.exclusions;
  b.masking = record.masking;
  b.corpus_skipped = record.corpus_skipped;

  Index idx;
  for (const Prediction& p : record.predictions) {
    idx.predictions[{p.source, paradigm_key(p.paradigm), p.sample_id, code_of(p.variant)}] = &p;
  }
  for (const Explanation& e : record.explanations) {
    idx.explanations[{e.source, paradigm_key(e.paradigm), e.sample_id}] = &e;
  }
  for (const Exclusion& e : record.exclusions) {
    if (e.split != Split::kEvaluation) continue;
    const ExplKey key{e.source, paradigm_key(e.paradigm), e.sample_id};
    idx.excluded.insert(key);
    idx.exclusion_reason.emplace(key, e.reason);
  }

  std::vector<const Sample*> eval;
  for (const Sample& s : record.evaluation) eval.push_back(&s);
  std::sort(eval.begin(), eval.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const Sample*> calib;
  for (const Sample& s : record.calibration) calib.push_back(&s);
  std::sort(calib.begin(), calib.end(), [](auto* a, auto* b) { return a->id < b->id; });

  // Word lists and labels for agreement, by paradigm.
  std::map<Paradigm, std::vector<AgreementSource>> agreement_sources;

  for (const SourceSpec& spec : cfg.sources) {
    const std::string& src = spec.gateway.source;
    for (Paradigm p : cfg.paradigms) {
      Included inc = included_model(idx, eval, src, p);
      b.exclusions.push_back(inc.summary);

      std::vector<const Prediction*> full_preds;
      std::vector<Emotion> golds;
      for (std::size_t i = 0; i < inc.samples.size(); ++i) {
        full_preds.push_back(inc.triples[i].full);
        golds.push_back(inc.samples[i]->gold);
      }

      if (!inc.samples.empty()) {
        std::vector<Emotion> labels;
        for (const Prediction* fp : full_preds) labels.push_back(fp->label);
        b.classification.push_back({src, p, classification_report(labels, golds)});
      }

      // Calibration fit on full-text predictions of the calibration split.
      std::vector<CalibrationPoint> points;
      std::vector<const Prediction*> calib_preds;
      std::vector<Emotion> calib_gold;
      for (const Sample* s : calib) {
        const Prediction* fp = idx.pred(src, p, s->id, InputVariant::kFullText);
        if (!fp || !fp->distribution) continue;
        points.push_back({*fp->distribution, s->gold});
        calib_preds.push_back(fp);
        calib_gold.push_back(s->gold);
      }
      CalibrationSummary cal;
      cal.source = src;
      cal.paradigm = p;
      cal.n_calibration = points.size();
      cal.n_evaluation = inc.samples.size();
      std::optional<double> t;
      if (!points.empty()) {
        cal.model = fit_temperature(points, cfg.calibration.grid, cfg.calibration.m_fit);
        t = cal.model->temperature;
      }

      std::vector<double> conf;
      std::vector<bool> correct;
      if (!full_preds.empty()) {
        collect(full_preds, golds, std::nullopt, conf, correct);
        cal.eval_ece_pre = ece(conf, correct, cfg.calibration.m_fit);
        if (t) {
          collect(full_preds, golds, t, conf, correct);
          cal.eval_ece_post = ece(conf, correct, cfg.calibration.m_fit);
        }
      }
      b.calibration.push_back(cal);

      // Reliability data for diagrams.
      auto add_reliability = [&](const std::vector<const Prediction*>& preds,
                                 const std::vector<Emotion>& gold, Split dataset,
                                 bool post) {
        if (preds.empty() || (post && !t)) return;
        collect(preds, gold, post ? t : std::nullopt, conf, correct);
        ReliabilityEntry r;
        r.source = src;
        r.paradigm = p;
        r.dataset = dataset;
        r.post = post;
        r.num_bins = cfg.calibration.m_diagram;
        r.bins = reliability_bins(conf, correct, r.num_bins);
        r.ece = ece_from_bins(r.bins);
        b.reliability.push_back(std::move(r));
      };
      add_reliability(calib_preds, calib_gold, Split::kCalibration, false);
      add_reliability(calib_preds, calib_gold, Split::kCalibration, true);
      add_reliability(full_preds, golds, Split::kEvaluation, false);
      add_reliability(full_preds, golds, Split::kEvaluation, true);

      b.faithfulness_pre.push_back(faithfulness_row(src, p, inc.triples));
      if (t) b.faithfulness_post.push_back(faithfulness_row(src, p, inc.triples, t));

      if (t && !inc.triples.empty()) {
        for (InputVariant v : kAllVariants) {
          ConfidenceReduction cr;
          cr.source = src;
          cr.paradigm = p;
          cr.variant = v;
          cr.n = inc.triples.size();
          double pre = 0.0;
          double post = 0.0;
          for (const VariantTriple& tr : inc.triples) {
            const Prediction* pr = v == InputVariant::kFullText  ? tr.full
                                   : v == InputVariant::kTopKOnly ? tr.topk_only
                                                                  : tr.topk_removed;
            pre += confidence_of(*pr, std::nullopt);
            post += confidence_of(*pr, t);
          }
          cr.mean_pre = pre / static_cast<double>(cr.n);
          cr.mean_post = post / static_cast<double>(cr.n);
          cr.reduction = cr.mean_pre - cr.mean_post;
          b.confidence_reduction.push_back(cr);
        }
      }

      AgreementSource as;
      as.source = src;
      for (std::size_t i = 0; i < inc.samples.size(); ++i) {
        const std::string& id = inc.samples[i]->id;
        as.words[id] = idx.expl(src, p, id)->words;
        as.labels[id] = inc.triples[i].full->label;
      }
      agreement_sources[p].push_back(std::move(as));
    }
  }

  // Imported label-only sources (paradigm absent).
  std::set<std::string> human_sources;
  for (const Prediction& pr : record.predictions) {
    if (!pr.paradigm) human_sources.insert(pr.source);
  }
  for (const std::string& src : human_sources) {
    ExclusionSummary summary;
    summary.source = src;
    summary.n_eval = eval.size();
    std::vector<Emotion> labels;
    std::vector<Emotion> golds;
    std::vector<VariantTriple> triples;
    AgreementSource as;
    as.source = src;
    for (const Sample* s : eval) {
      const Prediction* full = idx.pred(src, std::nullopt, s->id, InputVariant::kFullText);
      const Explanation* ex = idx.expl(src, std::nullopt, s->id);
      if (!full || !ex) {
        ++summary.n_excluded;
        ++summary.by_reason["missing_annotation"];
        continue;
      }
      ++summary.n_included;
      labels.push_back(full->label);
      golds.push_back(s->gold);
      as.words[s->id] = ex->words;
      as.labels[s->id] = full->label;
      const Prediction* only = idx.pred(src, std::nullopt, s->id, InputVariant::kTopKOnly);
      const Prediction* removed =
          idx.pred(src, std::nullopt, s->id, InputVariant::kTopKRemoved);
      if (only && removed) triples.push_back({full, only, removed});
    }
    b.exclusions.push_back(summary);
    if (!labels.empty()) {
      b.classification.push_back({src, std::nullopt, classification_report(labels, golds)});
    }
    FaithfulnessRow row = faithfulness_row(src, std::nullopt, triples);
    b.faithfulness_pre.push_back(row);
    b.faithfulness_post.push_back(row);
    for (Paradigm p : cfg.paradigms) agreement_sources[p].push_back(as);
  }

  for (Paradigm p : cfg.paradigms) {
    b.agreement.push_back({p, pairwise_agreement(agreement_sources[p], cfg.k)});
  }
  return b;
}

// ---- JSON ---------------------------------------------------------------------

void to_json(json& j, const CalibrationSummary& s) {
  j = json{{"source", s.source},
           {"paradigm", to_string(s.paradigm)},
           {"model", s.model ? json(*s.model) : json(nullptr)},
           {"temperature", s.model ? json(s.model->temperature) : json(nullptr)},
           {"calibration_ece_pre", s.model ? json(s.model->fit_ece_before) : json(nullptr)},
           {"calibration_ece_post", s.model ? json(s.model->fit_ece_after) : json(nullptr)},
           {"evaluation_ece_pre", opt_number(s.eval_ece_pre)},
           {"evaluation_ece_post", opt_number(s.eval_ece_post)},
           {"n_calibration", s.n_calibration},
           {"n_evaluation", s.n_evaluation}};
}

void to_json(json& j, const ConfidenceReduction& r) {
  j = json{{"source", r.source},
           {"paradigm", to_string(r.paradigm)},
           {"variant", to_string(r.variant)},
           {"mean_pre", r.mean_pre},
           {"mean_post", r.mean_post},
           {"reduction", r.reduction},
           {"n", r.n}};
}

void to_json(json& j, const AgreementReport& r) {
  json cells = json::array();
  for (const auto& row : r.matrix.cells) {
    json jr = json::array();
    for (const auto& c : row) jr.push_back(c ? json(*c) : json(nullptr));
    cells.push_back(std::move(jr));
  }
  j = json{{"paradigm", to_string(r.paradigm)},
           {"sources", r.matrix.sources},
           {"cells", std::move(cells)}};
}

void to_json(json& j, const ReliabilityEntry& r) {
  j = json{{"source", r.source},
           {"paradigm", to_string(r.paradigm)},
           {"dataset", to_string(r.dataset)},
           {"scaling", r.post ? "post" : "pre"},
           {"num_bins", r.num_bins},
           {"bins", r.bins},
           {"ece", r.ece}};
}

void to_json(json& j, const ExclusionSummary& s) {
  j = json{{"source", s.source},
           {"paradigm", opt_paradigm(s.paradigm)},
           {"n_eval", s.n_eval},
           {"n_included", s.n_included},
           {"n_excluded", s.n_excluded},
           {"by_reason", s.by_reason}};
}

void to_json(json& j, const ReportBundle& b) {
  json classification = json::array();
  for (const ClassificationEntry& c : b.classification) {
    classification.push_back(json{{"source", c.source},
                                  {"paradigm", opt_paradigm(c.paradigm)},
                                  {"report", c.report}});
  }
  j = json{{"seed", b.seed},
           {"k", b.k},
           {"m_fit", b.m_fit},
           {"m_diagram", b.m_diagram},
           {"classification", std::move(classification)},
           {"faithfulness", {{"pre", b.faithfulness_pre}, {"post", b.faithfulness_post}}},
           {"calibration", b.calibration},
           {"confidence_reduction", b.confidence_reduction},
           {"agreement", b.agreement},
           {"reliability", b.reliability},
           {"exclusions",
            {{"summary", b.exclusions},
             {"records", b.excluded},
             {"corpus_skipped_labels", b.corpus_skipped}}},
           {"masking", b.masking}};
}

// ---- bundle I/O -----------------------------------------------------------------

namespace {

template <typename T>
std::string jsonl(const std::vector<T>& items) {
  std::string out;
  for (const T& item : items) {
    out += json(item).dump();
    out += '\n';
  }
  return out;
}

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

json config_json(const RunRecord& record) {
  json j = record.config;
  j["seed"] = record.config.split.seed;
  return j;
}

json calibration_json(const ReportBundle& bundle) {
  return json{{"seed", bundle.seed}, {"m_fit", bundle.m_fit}, {"models", bundle.calibration}};
}

void write_common(const RunRecord& record, const ReportBundle& bundle,
                  const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());
  std::vector<Sample> samples = record.evaluation;
  samples.insert(samples.end(), record.calibration.begin(), record.calibration.end());
  write_text_file(dir / "config.json", pretty(config_json(record)));
  write_text_file(dir / "samples.jsonl", jsonl(samples));
  write_text_file(dir / "transcripts.jsonl", jsonl(record.transcripts));
  write_text_file(dir / "predictions.jsonl", jsonl(record.predictions));
  write_text_file(dir / "explanations.jsonl", jsonl(record.explanations));
  write_text_file(dir / "calibration.json", pretty(calibration_json(bundle)));
  write_text_file(dir / "audit.json",
                  pretty(json{{"seed", bundle.seed},
                              {"corpus_skipped_labels", record.corpus_skipped},
                              {"exclusions", record.exclusions},
                              {"masking", record.masking}}));
}

}  // namespace

void write_bundle(const RunRecord& record, const ReportBundle& bundle, const fs::path& dir) {
  write_common(record, bundle, dir);
  export_all_reports(bundle, dir / "reports");
}

void write_calibration_only(const RunRecord& record, const ReportBundle& bundle,
                            const fs::path& dir) {
  write_common(record, bundle, dir);
}

ReportBundle run_experiment(const RunConfig& config, const RunOptions& options) {
  if (config.output_dir.empty()) {
    throw Error(ErrorCode::kConfigError, "output directory is required");
  }
  const RunRecord record = execute_run(config, options);
  ReportBundle bundle = compute_reports(record);
  write_bundle(record, bundle, config.output_dir);
  return bundle;
}

RunRecord load_bundle(const fs::path& dir) {
  RunRecord rec;
  rec.config = RunConfig::from_json(read_json(dir / "config.json"), dir);
  rec.config.output_dir = dir;
  for (Sample& s : read_jsonl<Sample>(dir / "samples.jsonl")) {
    (s.split == Split::kEvaluation ? rec.evaluation : rec.calibration).push_back(std::move(s));
  }
  rec.transcripts = read_jsonl<Transcript>(dir / "transcripts.jsonl");
  rec.predictions = read_jsonl<Prediction>(dir / "predictions.jsonl");
  rec.explanations = read_jsonl<Explanation>(dir / "explanations.jsonl");
  const json audit = read_json(dir / "audit.json");
  try {
    rec.exclusions = audit.at("exclusions").get<std::vector<Exclusion>>();
    rec.masking = audit.at("masking").get<std::vector<MaskingEntry>>();
    rec.corpus_skipped = audit.value("corpus_skipped_labels", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, "audit.json: " + std::string(e.what()));
  }
  return rec;
}

namespace {

void compare(const json& expected, const json& actual, const std::string& path,
             std::vector<std::string>& out) {
  if (expected.is_number() && actual.is_number()) {
    const double a = expected.get<double>();
    const double b = actual.get<double>();
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    if (std::abs(a - b) > 1e-12 * scale) out.push_back(path);
    return;
  }
  if (expected.type() != actual.type()) {
    out.push_back(path);
    return;
  }
  if (expected.is_object()) {
    std::set<std::string> keys;
    for (auto it = expected.begin(); it != expected.end(); ++it) keys.insert(it.key());
    for (auto it = actual.begin(); it != actual.end(); ++it) keys.insert(it.key());
    for (const std::string& k : keys) {
      if (!expected.contains(k) || !actual.contains(k)) {
        out.push_back(path + "/" + k);
        continue;
      }
      compare(expected[k], actual[k], path + "/" + k, out);
    }
    return;
  }
  if (expected.is_array()) {
    if (expected.size() != actual.size()) {
      out.push_back(path);
      return;
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      compare(expected[i], actual[i], path + "/" + std::to_string(i), out);
    }
    return;
  }
  if (expected != actual) out.push_back(path);
}

}  // namespace

VerifyResult verify_bundle(const fs::path& dir) {
  const RunRecord record = load_bundle(dir);
  const json recomputed = compute_reports(record);
  const json stored = read_json(dir / "reports" / "bundle.json");
  VerifyResult result;
  compare(stored, recomputed, "", result.mismatches);
  result.ok = result.mismatches.empty();
  return result;
}

}  // namespace selfx
