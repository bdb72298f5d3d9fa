#pragma once
// End-to-end commands behind the CLI: generate, evaluate, inspect, split.
//
// generate processes records on a worker pool but writes results in manifest
// order, so output is byte-identical whatever the worker count.

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "seke/annotator.hpp"
#include "seke/config.hpp"
#include "seke/dataset.hpp"
#include "seke/evaluator.hpp"
#include "seke/http_annotator.hpp"
#include "seke/manifest.hpp"
#include "seke/uamc.hpp"

namespace seke {

enum class Backend { http, synthetic };

inline std::optional<Backend> parse_backend(std::string_view s) {
  if (s == "http") return Backend::http;
  if (s == "synthetic") return Backend::synthetic;
  return std::nullopt;
}

// Hidden truth for the synthetic backend: manual labels where present, a
// seeded random draw for the rest.
inline CompleteAnnotation synthetic_truth(const EmotionRecord& record, const AuVocabulary& vocab, std::uint64_t seed) {
  auto rng = RandomStream::for_record(seed, record.record_id, "truth");
  CompleteAnnotation t;
  t.expression = kAllExpressions[rng.index(kExpressionCount)];
  t.va.valence = std::round((2.0 * rng.uniform() - 1.0) * 100.0) / 100.0;
  t.va.arousal = std::round((2.0 * rng.uniform() - 1.0) * 100.0) / 100.0;
  for (int id : vocab.ids()) t.aus.occurrences[id] = rng.bernoulli(0.25);
  const auto& a = record.annotation;
  if (a.expression) t.expression = a.expression->value;
  if (a.va) t.va = a.va->value;
  if (a.aus) t.aus = a.aus->value;
  return t;
}

struct GenerateOptions {
  std::string manifest;
  std::string out;
  Backend backend = Backend::http;
  std::optional<int> workers;  // overrides io.workers
  bool resume = false;
  std::optional<std::string> conversations;  // optional conversation-style export
  std::ostream* progress = nullptr;
};

struct GenerateSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t already_present = 0;
  std::size_t calls = 0;
  bool budget_exhausted = false;
  std::string skipped_path;
  std::string log_path;
};

inline std::string skipped_path_for(const std::string& out) {
  auto dir = std::filesystem::path(out).parent_path();
  return (dir / "skipped.jsonl").string();
}

inline std::string log_path_for(const std::string& out) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + ".log.jsonl")).string();
}

inline std::string trajectory_log_line(const EmotionRecord& record, const UamcResult& u, int summary_calls) {
  ojson j;
  j["record_id"] = record.record_id;
  j["final_S"] = u.final_S;
  j["stop_reason"] = std::string(to_string(u.stop_reason));
  j["failed_rounds"] = u.samples.failed_rounds;
  j["sampling_calls"] = u.calls;
  j["summary_calls"] = summary_calls;
  j["seed"] = u.seed;
  ojson steps = ojson::array();
  for (const auto& s : u.trajectory) {
    ojson step;
    step["round"] = s.round;
    ojson tasks = ojson::object();
    for (const auto& t : s.tasks) tasks[std::string(task_key(t.task))] = {{"raw", t.raw}, {"normalized", t.normalized}};
    step["tasks"] = std::move(tasks);
    step["argmax"] = std::string(task_key(s.argmax));
    step["u_max"] = s.u_max;
    step["p_acc"] = s.p_acc;
    step["draw"] = s.draw ? ojson(*s.draw) : ojson(nullptr);
    step["continued"] = s.continued;
    steps.push_back(std::move(step));
  }
  j["trajectory"] = std::move(steps);
  return j.dump();
}

inline std::string skipped_line(const std::string& record_id, std::size_t line, const std::string& stage,
                                const std::vector<Violation>& reasons) {
  ojson j;
  j["record_id"] = record_id;
  j["line"] = line;
  j["stage"] = stage;
  ojson arr = ojson::array();
  for (const auto& v : reasons) arr.push_back({{"code", v.code}, {"message", v.message}});
  j["reasons"] = std::move(arr);
  return j.dump();
}

struct ProcessedRecord {
  FeidRecord feid;
  std::string log_line;
  int calls = 0;
};

// One record through sampling, self-verification and assembly.
inline ProcessedRecord process_record(const EmotionRecord& record, Annotator& annotator, const RunConfig& config,
                                      const RewriteTemplateSet& templates, const std::string& timestamp) {
  UamcOptions options;
  options.max_samples = config.max_samples;
  options.parse_reasks = config.parse_retries;
  options.temperature = config.temperature;
  options.max_output_tokens = config.max_output_tokens;
  options.paraphrase_rounds = config.paraphrase_rounds;
  VarianceEstimator estimator{config.vocab, config.au_aggregate, kExpressionCount};

  auto rng = RandomStream::for_record(config.seed, record.record_id, "uamc");
  UamcResult uamc = run_uamc(record, annotator, config.vocab, rng, options, estimator);

  const std::string run_id = annotator.model_id() + ":" + std::to_string(config.seed);
  DecodingParams params{config.summary_temperature, config.max_output_tokens, 1, 0};
  Finalized fin = summarize(record, uamc, annotator, config.vocab, run_id, config.parse_retries, params);

  auto qrng = RandomStream::for_record(config.seed, record.record_id, "question");
  std::string question = pick_rewrite_question(qrng, templates);
  ProcessedRecord out;
  out.feid = assemble_record(record, uamc, fin.labels, std::move(question), compose_answer(fin.analysis, fin.labels),
                             GeneratorInfo{annotator.model_id(), config.seed, timestamp});
  out.calls = uamc.calls + fin.calls;
  out.log_line = trajectory_log_line(record, uamc, fin.calls);
  return out;
}

inline std::set<std::string> existing_record_ids(const std::string& path) {
  std::set<std::string> ids;
  if (!std::filesystem::exists(path)) return ids;
  for_each_jsonl_line(path, [&](std::size_t n, const std::string& line) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record_id") || !j["record_id"].is_string())
      throw SchemaError(n, "cannot resume: line is not a record");
    ids.insert(j["record_id"].get<std::string>());
  });
  return ids;
}

inline std::unique_ptr<Annotator> make_annotator(Backend backend, const RunConfig& config,
                                                 const std::vector<EmotionRecord>& records) {
  if (backend == Backend::http) return std::make_unique<HttpAnnotator>(config.annotator, config.vocab);
  auto synth = std::make_unique<SyntheticAnnotator>(config.vocab, config.seed);
  for (const auto& r : records)
    synth->add(r.image_ref, SyntheticAnnotatorSpec{synthetic_truth(r, config.vocab, config.seed), config.synthetic_noise,
                                                   config.synthetic_va_sigma});
  return synth;
}

// Throws BudgetExceeded after flushing whatever finished; AuthError and
// ConfigError propagate unchanged.
inline GenerateSummary generate(const RunConfig& config, const GenerateOptions& opts) {
  GenerateSummary summary;
  summary.skipped_path = skipped_path_for(opts.out);
  summary.log_path = config.run_log.value_or(log_path_for(opts.out));

  auto rows = read_manifest_file(opts.manifest, config.vocab, config.au_mode);
  const RewriteTemplateSet templates =
      config.rewrite_templates ? RewriteTemplateSet::load(*config.rewrite_templates) : RewriteTemplateSet::builtin();

  if (auto dir = std::filesystem::path(opts.out).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::set<std::string> done;
  if (opts.resume) {
    done = existing_record_ids(opts.out);
  } else {
    std::ofstream(opts.out, std::ios::trunc);
    std::ofstream(summary.log_path, std::ios::trunc);
  }
  std::ofstream skipped(summary.skipped_path, std::ios::binary | std::ios::trunc);
  if (!skipped) throw IoError("cannot write '" + summary.skipped_path + "'");

  std::vector<EmotionRecord> todo;
  for (const auto& row : rows) {
    if (!row.ok()) {
      skipped << skipped_line(row.record.record_id, row.line, "validation", row.violations) << '\n';
      ++summary.skipped;
      continue;
    }
    if (done.count(row.record.record_id)) {
      ++summary.already_present;
      continue;
    }
    todo.push_back(row.record);
  }

  auto inner = make_annotator(opts.backend, config, todo);
  BudgetedAnnotator annotator(*inner, config.max_calls);
  const std::string timestamp = opts.backend == Backend::synthetic ? format_rfc3339(0) : utc_now_rfc3339();

  JsonlAppender out(opts.out);
  JsonlAppender log(summary.log_path);

  struct Slot {
    bool finished = false;
    std::optional<ProcessedRecord> result;
    std::optional<Violation> error;
  };
  std::vector<Slot> slots(todo.size());
  std::mutex mutex;
  std::size_t next_to_write = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  auto write_slot = [&](std::size_t i) {
    auto& s = slots[i];
    if (s.result) {
      out.append(to_jsonl_line(s.result->feid));
      log.append(s.result->log_line);
      ++summary.written;
    } else if (s.error) {
      skipped << skipped_line(todo[i].record_id, 0, "annotation", {*s.error}) << '\n';
      ++summary.skipped;
    }
    if (opts.progress)
      *opts.progress << "[" << (i + 1) << "/" << todo.size() << "] " << todo[i].record_id
                     << (s.result ? " ok" : " skipped") << '\n';
  };
  // Caller holds the mutex.
  auto flush_ready = [&] {
    while (next_to_write < slots.size() && slots[next_to_write].finished) write_slot(next_to_write++);
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size() && !stop; i = next++) {
      Slot slot;
      try {
        slot.result = process_record(todo[i], annotator, config, templates, timestamp);
      } catch (const AnnotatorExhausted& e) {
        slot.error = Violation{"annotator_exhausted", e.what()};
      } catch (const SummaryParseError& e) {
        slot.error = Violation{"summary_parse", e.what()};
      } catch (const LabelLeak& e) {
        slot.error = Violation{"label_leak", e.what()};
      } catch (const IncompleteLabels& e) {
        slot.error = Violation{"incomplete_labels", e.what()};
      } catch (const AuthError&) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      } catch (const TransportError& e) {
        slot.error = Violation{"transport", e.what()};
      } catch (const IoError& e) {
        slot.error = Violation{"io", e.what()};
      } catch (const BudgetExceeded&) {
        std::lock_guard lock(mutex);
        summary.budget_exhausted = true;
        stop = true;
        return;
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      }
      slot.finished = true;
      std::lock_guard lock(mutex);
      slots[i] = std::move(slot);
      flush_ready();
    }
  };

  const int workers = std::max(1, opts.workers.value_or(config.workers));
  std::vector<std::thread> threads;
  for (int t = 1; t < workers && static_cast<std::size_t>(t) < todo.size(); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  // Records that finished behind an unfinished one still get written.
  for (std::size_t i = next_to_write; i < slots.size(); ++i)
    if (slots[i].finished) write_slot(i);
  summary.calls = annotator.calls_made();
  skipped.flush();

  if (fatal) std::rethrow_exception(fatal);
  if (opts.conversations) {
    std::ofstream conv(*opts.conversations, std::ios::binary | std::ios::trunc);
    if (!conv) throw IoError("cannot write '" + *opts.conversations + "'");
    for (const auto& r : read_jsonl(opts.out)) conv << to_conversation_line(r) << '\n';
  }
  if (summary.budget_exhausted) throw BudgetExceeded(config.max_calls);
  return summary;
}

struct EvaluateOptions {
  std::string pred;
  std::string gold;
  std::string report_dir;
  bool llm_normalize = false;
  std::string method = "model";
};

inline EvalReport evaluate(const RunConfig& config, const EvaluateOptions& opts) {
  std::unique_ptr<HttpAnnotator> llm;
  if (opts.llm_normalize || config.llm_normalize) {
    if (config.annotator.api_key.empty())
      throw ConfigError("LLM-assisted normalization needs ANNOTATOR_API_KEY");
    llm = std::make_unique<HttpAnnotator>(config.annotator, config.vocab);
  }
  auto preds = read_predictions(opts.pred);
  auto golds = read_gold_jsonl(opts.gold);
  EvalOptions eo;
  eo.au_subset = config.au_subset;
  eo.va_tolerance = config.va_tolerance;
  eo.method = opts.method;
  eo.llm_normalizer = llm.get();
  EvalReport report = score(preds, golds, config.vocab, eo);

  std::filesystem::create_directories(opts.report_dir);
  const auto dir = std::filesystem::path(opts.report_dir);
  std::ofstream json(dir / "report.json", std::ios::binary | std::ios::trunc);
  std::ofstream csv(dir / "report.csv", std::ios::binary | std::ios::trunc);
  if (!json || !csv) throw IoError("cannot write report files in '" + opts.report_dir + "'");
  json << report_to_json(report, eo).dump(2) << '\n';
  csv << report_to_csv(report, config.vocab, eo);
  return report;
}

struct InspectStats {
  std::size_t records = 0;
  std::map<TaskKind, std::map<Origin, std::size_t>> provenance;
  std::map<TaskKind, std::size_t> absent;
  std::map<Expression, std::size_t> expressions;
  std::map<int, std::size_t> au_positive;
  std::size_t au_records = 0;
  std::size_t va_records = 0;
  double valence_sum = 0.0;
  double arousal_sum = 0.0;
};

inline InspectStats inspect_file(const std::string& path) {
  InspectStats s;
  for_each_jsonl_line(path, [&](std::size_t n, const std::string& line) {
    FeidRecord r = from_jsonl_line(line, n);
    ++s.records;
    const auto& l = r.labels;
    if (l.expression) {
      ++s.provenance[TaskKind::Expression][l.expression->provenance.origin];
      ++s.expressions[l.expression->value];
    } else {
      ++s.absent[TaskKind::Expression];
    }
    if (l.va) {
      ++s.provenance[TaskKind::ValenceArousal][l.va->provenance.origin];
      ++s.va_records;
      s.valence_sum += l.va->value.valence;
      s.arousal_sum += l.va->value.arousal;
    } else {
      ++s.absent[TaskKind::ValenceArousal];
    }
    if (l.aus) {
      ++s.provenance[TaskKind::ActionUnits][l.aus->provenance.origin];
      ++s.au_records;
      for (const auto& [id, on] : l.aus->value.occurrences)
        if (on) ++s.au_positive[id];
    } else {
      ++s.absent[TaskKind::ActionUnits];
    }
  });
  return s;
}

inline void print_inspect(const InspectStats& s, const AuVocabulary& vocab, std::ostream& os) {
  char buf[128];
  os << "records: " << s.records << '\n';
  os << "provenance (manual / generated / absent):\n";
  for (TaskKind t : TaskSet::all().to_vector()) {
    auto it = s.provenance.find(t);
    auto count = [&](Origin o) -> std::size_t {
      if (it == s.provenance.end()) return 0;
      auto jt = it->second.find(o);
      return jt == it->second.end() ? 0 : jt->second;
    };
    auto ab = s.absent.find(t);
    os << "  " << task_key(t) << ": " << count(Origin::manual) << " / " << count(Origin::generated) << " / "
       << (ab == s.absent.end() ? 0 : ab->second) << '\n';
  }
  os << "expression histogram:\n";
  for (Expression e : kAllExpressions) {
    auto it = s.expressions.find(e);
    os << "  " << to_string(e) << ": " << (it == s.expressions.end() ? 0 : it->second) << '\n';
  }
  os << "AU positive rate (over " << s.au_records << " records):\n";
  for (int id : vocab.ids()) {
    auto it = s.au_positive.find(id);
    const std::size_t pos = it == s.au_positive.end() ? 0 : it->second;
    std::snprintf(buf, sizeof(buf), "  AU%d: %.4f\n", id,
                  s.au_records ? static_cast<double>(pos) / static_cast<double>(s.au_records) : 0.0);
    os << buf;
  }
  const double n = static_cast<double>(s.va_records);
  std::snprintf(buf, sizeof(buf), "valence mean: %.4f\narousal mean: %.4f\n", s.va_records ? s.valence_sum / n : 0.0,
                s.va_records ? s.arousal_sum / n : 0.0);
  os << buf;
}

struct SplitOptions {
  std::string manifest;
  std::string split_out;
  std::optional<std::string> gold_out;
  double fraction = 0.1;
  std::uint64_t seed = 0;
};

// Valid manifest rows only; the benchmark file keeps manual labels of test ids.
inline SplitManifest split_manifest(const RunConfig& config, const SplitOptions& opts) {
  std::vector<EmotionRecord> records;
  for (auto& row : read_manifest_file(opts.manifest, config.vocab, config.au_mode))
    if (row.ok()) records.push_back(std::move(row.record));
  SplitManifest m = split_subjects(records, opts.fraction, opts.seed);
  std::ofstream out(opts.split_out, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + opts.split_out + "'");
  out << split_to_json(m) << '\n';
  if (opts.gold_out) {
    std::ofstream gold(*opts.gold_out, std::ios::binary | std::ios::trunc);
    if (!gold) throw IoError("cannot write '" + *opts.gold_out + "'");
    for (const auto& g : benchmark_records(records, m)) gold << gold_to_jsonl_line(g) << '\n';
  }
  return m;
}

}  // namespace seke
