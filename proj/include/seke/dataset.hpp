#pragma once
// Finished instruction records and their JSONL persistence, plus the
// subject-independent train/benchmark split.
//
// One record per line, keys in a fixed order:
//   record_id, image_ref, question, answer,
//   labels{expression, valence, arousal, aus{...}, provenance{...}},
//   uncertainty{final_s, per_task{...}}, generator{model, seed, timestamp}

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seke/affect.hpp"
#include "seke/error.hpp"
#include "seke/lexicon.hpp"
#include "seke/random.hpp"
#include "seke/uamc.hpp"

namespace seke {

using ojson = nlohmann::ordered_json;

struct UncertaintySummary {
  int final_s = 0;
  std::vector<std::pair<TaskKind, double>> per_task;  // target tasks, in task order

  friend bool operator==(const UncertaintySummary&, const UncertaintySummary&) = default;
};

struct GeneratorInfo {
  std::string model;
  std::uint64_t seed = 0;
  std::string timestamp;  // UTC, RFC 3339

  friend bool operator==(const GeneratorInfo&, const GeneratorInfo&) = default;
};

struct FeidRecord {
  std::string record_id;
  std::string image_ref;
  std::string question;
  std::string answer;
  PartialAnnotation labels;
  UncertaintySummary uncertainty;
  GeneratorInfo generator;

  friend bool operator==(const FeidRecord&, const FeidRecord&) = default;
};

// Equality that ignores the generation timestamp.
inline bool canonical_equal(const FeidRecord& a, const FeidRecord& b) {
  FeidRecord x = a, y = b;
  x.generator.timestamp.clear();
  y.generator.timestamp.clear();
  return x == y;
}

inline std::string format_rfc3339(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string utc_now_rfc3339() { return format_rfc3339(std::time(nullptr)); }

// ---------------------------------------------------------------------------
// Label codec

inline ojson provenance_to_json(const Provenance& p) {
  ojson j;
  j["origin"] = std::string(to_string(p.origin));
  j["source_dataset"] = p.source_dataset;
  j["generator_run_id"] = p.generator_run_id ? ojson(*p.generator_run_id) : ojson(nullptr);
  return j;
}

inline ojson labels_to_json(const PartialAnnotation& a) {
  ojson j;
  j["expression"] = a.expression ? ojson(std::string(to_string(a.expression->value))) : ojson(nullptr);
  j["valence"] = a.va ? ojson(a.va->value.valence) : ojson(nullptr);
  j["arousal"] = a.va ? ojson(a.va->value.arousal) : ojson(nullptr);
  if (a.aus) {
    ojson aus = ojson::object();
    for (const auto& [id, on] : a.aus->value.occurrences) aus[std::to_string(id)] = on;
    j["aus"] = std::move(aus);
  } else {
    j["aus"] = nullptr;
  }
  ojson prov;
  for (TaskKind t : kAllTasks) {
    const Provenance* p = a.provenance(t);
    prov[std::string(task_key(t))] = p ? provenance_to_json(*p) : ojson(nullptr);
  }
  j["provenance"] = std::move(prov);
  return j;
}

namespace detail {

template <class J>
Provenance provenance_from_json(const J& j) {
  if (!j.is_object()) throw std::invalid_argument("provenance is not an object");
  Provenance p;
  const auto origin = j.at("origin").template get<std::string>();
  if (origin == "manual")
    p.origin = Origin::manual;
  else if (origin == "generated")
    p.origin = Origin::generated;
  else
    throw std::invalid_argument("unknown origin '" + origin + "'");
  p.source_dataset = j.value("source_dataset", std::string());
  if (j.contains("generator_run_id") && !j["generator_run_id"].is_null())
    p.generator_run_id = j["generator_run_id"].template get<std::string>();
  return p;
}

}  // namespace detail

// Parses a labels object. Without a provenance block, present labels are
// taken as manual with an unknown source.
template <class J>
PartialAnnotation labels_from_json(const J& j, bool require_provenance) {
  if (!j.is_object()) throw std::invalid_argument("labels is not an object");
  const J* prov = j.contains("provenance") && !j["provenance"].is_null() ? &j["provenance"] : nullptr;
  if (require_provenance && !prov) throw std::invalid_argument("labels.provenance missing");
  auto provenance_for = [&](TaskKind t) {
    const std::string key(task_key(t));
    if (prov && prov->contains(key) && !(*prov)[key].is_null()) return detail::provenance_from_json((*prov)[key]);
    if (require_provenance) throw std::invalid_argument("provenance." + key + " missing for present label");
    return Provenance::manual("unknown");
  };

  PartialAnnotation a;
  if (j.contains("expression") && !j["expression"].is_null()) {
    auto e = parse_expression(j["expression"].template get<std::string>());
    if (!e) throw std::invalid_argument("unknown expression");
    a.expression = Labeled<Expression>{*e, provenance_for(TaskKind::Expression)};
  }
  const bool has_v = j.contains("valence") && !j["valence"].is_null();
  const bool has_a = j.contains("arousal") && !j["arousal"].is_null();
  if (has_v != has_a) throw std::invalid_argument("valence and arousal must both be present or both null");
  if (has_v) {
    VaAnnotation va{j["valence"].template get<double>(), j["arousal"].template get<double>()};
    if (!in_unit_range(va.valence) || !in_unit_range(va.arousal)) throw std::invalid_argument("va out of [-1,1]");
    a.va = Labeled<VaAnnotation>{va, provenance_for(TaskKind::ValenceArousal)};
  }
  if (j.contains("aus") && !j["aus"].is_null()) {
    const auto& aus_j = j["aus"];
    if (!aus_j.is_object()) throw std::invalid_argument("aus is not an object");
    AuAnnotation aus;
    for (const auto& [key, flag] : aus_j.items()) {
      auto id = detail::au_key_to_id(key);
      if (!id) throw std::invalid_argument("bad AU key '" + key + "'");
      aus.occurrences[*id] = flag.template get<bool>();
    }
    a.aus = Labeled<AuAnnotation>{std::move(aus), provenance_for(TaskKind::ActionUnits)};
  }
  return a;
}

// ---------------------------------------------------------------------------
// Record codec

inline std::string to_jsonl_line(const FeidRecord& r) {
  ojson j;
  j["record_id"] = r.record_id;
  j["image_ref"] = r.image_ref;
  j["question"] = r.question;
  j["answer"] = r.answer;
  j["labels"] = labels_to_json(r.labels);
  ojson per_task = ojson::object();
  for (const auto& [task, value] : r.uncertainty.per_task) per_task[std::string(task_key(task))] = value;
  j["uncertainty"] = ojson{{"final_s", r.uncertainty.final_s}, {"per_task", std::move(per_task)}};
  j["generator"] = ojson{{"model", r.generator.model}, {"seed", r.generator.seed}, {"timestamp", r.generator.timestamp}};
  return j.dump();
}

inline FeidRecord from_jsonl_line(std::string_view line, std::size_t line_no) {
  auto j = ojson::parse(line, nullptr, false);
  if (j.is_discarded()) throw SchemaError(line_no, "not valid JSON");
  if (!j.is_object()) throw SchemaError(line_no, "not a JSON object");
  try {
    FeidRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.image_ref = j.at("image_ref").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.labels = labels_from_json(j.at("labels"), true);
    const auto& u = j.at("uncertainty");
    r.uncertainty.final_s = u.at("final_s").get<int>();
    for (const auto& [key, value] : u.at("per_task").items()) {
      auto task = parse_task_key(key);
      if (!task) throw std::invalid_argument("unknown task '" + key + "'");
      r.uncertainty.per_task.emplace_back(*task, value.get<double>());
    }
    const auto& g = j.at("generator");
    r.generator.model = g.at("model").get<std::string>();
    r.generator.seed = g.at("seed").get<std::uint64_t>();
    r.generator.timestamp = g.at("timestamp").get<std::string>();
    if (r.record_id.empty()) throw std::invalid_argument("record_id is empty");
    return r;
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError(line_no, e.what());
  }
}

inline void write_jsonl(const std::vector<FeidRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Calls fn(line_no, line) for each nonblank line.
template <class Fn>
void for_each_jsonl_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line_no, line);
  }
}

inline std::vector<FeidRecord> read_jsonl(const std::string& path) {
  std::vector<FeidRecord> out;
  for_each_jsonl_line(path, [&](std::size_t n, const std::string& line) { out.push_back(from_jsonl_line(line, n)); });
  return out;
}

// Appends complete lines under an exclusive advisory lock; one writer per file.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw IoError("cannot open '" + path + "' for append");
  }

  void append(const std::string& line) {
    std::lock_guard lock(mutex_);
    const int fd = ::open(path_.c_str(), O_WRONLY);
    if (fd >= 0) ::flock(fd, LOCK_EX);
    out_ << line << '\n';
    out_.flush();
    if (fd >= 0) {
      ::flock(fd, LOCK_UN);
      ::close(fd);
    }
    if (!out_) throw IoError("append failed for '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Assembly

inline UncertaintySummary summarize_uncertainty(const UamcResult& uamc) {
  UncertaintySummary s;
  s.final_s = uamc.final_S;
  for (const auto& t : uamc.final_uncertainty()) s.per_task.emplace_back(t.task, t.normalized);
  return s;
}

inline FeidRecord assemble_record(const EmotionRecord& record, const UamcResult& uamc,
                                  const PartialAnnotation& final_labels, std::string question, std::string answer,
                                  GeneratorInfo generator) {
  if (!final_labels.complete()) throw IncompleteLabels("record '" + record.record_id + "' lacks a description");
  if (auto leaks = find_label_tokens(question); !leaks.empty())
    throw LabelLeak("question leaks label token '" + leaks.front() + "'");
  if (answer.empty()) throw IncompleteLabels("record '" + record.record_id + "' has an empty answer");
  FeidRecord r;
  r.record_id = record.record_id;
  r.image_ref = record.image_ref;
  r.question = std::move(question);
  r.answer = std::move(answer);
  r.labels = final_labels;
  r.uncertainty = summarize_uncertainty(uamc);
  r.generator = std::move(generator);
  return r;
}

// Answer text: the model's analysis followed by the final descriptions.
inline std::string compose_answer(const std::string& analysis, const PartialAnnotation& labels) {
  std::string out = analysis;
  out += "\n\nFinal descriptions: expression: ";
  out += labels.expression ? std::string(to_string(labels.expression->value)) : "unknown";
  if (labels.va)
    out += "; valence: " + format_number(labels.va->value.valence) + ", arousal: " +
           format_number(labels.va->value.arousal);
  out += "; activated action units: ";
  out += labels.aus ? detail::au_list(labels.aus->value.active_ids()) : "unknown";
  out += ".";
  return out;
}

inline std::string to_conversation_line(const FeidRecord& r) {
  ojson j;
  j["id"] = r.record_id;
  j["image"] = r.image_ref;
  j["conversations"] = ojson::array({ojson{{"from", "human"}, {"value", "<image>\n" + r.question}},
                                     ojson{{"from", "gpt"}, {"value", r.answer}}});
  return j.dump();
}

// ---------------------------------------------------------------------------
// Subject-independent split

struct SplitManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double fraction = 0.1;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

// Records without subject_id are their own subject.
inline std::string subject_key(const EmotionRecord& r) {
  return r.subject_id ? "s:" + *r.subject_id : "r:" + r.record_id;
}

inline SplitManifest split_subjects(const std::vector<EmotionRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split fraction must be in (0, 1)");
  std::set<std::string> subject_set;
  for (const auto& r : records) subject_set.insert(subject_key(r));
  if (subject_set.size() < 2) throw DegenerateSplit("need at least 2 subjects, got " + std::to_string(subject_set.size()));

  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
  RandomStream rng(mix_seed(seed, "split"));
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const auto n = subjects.size();
  auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  const std::set<std::string> test_subjects(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_test));

  SplitManifest m;
  m.fraction = fraction;
  m.seed = seed;
  for (const auto& r : records) (test_subjects.count(subject_key(r)) ? m.test_ids : m.train_ids).push_back(r.record_id);
  return m;
}

inline std::string split_to_json(const SplitManifest& m) {
  ojson j;
  j["train_ids"] = m.train_ids;
  j["test_ids"] = m.test_ids;
  j["fraction"] = m.fraction;
  j["seed"] = m.seed;
  j["strategy"] = "subject-independent";
  return j.dump(2);
}

inline SplitManifest split_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw SchemaError(0, "split manifest is not valid JSON");
  try {
    SplitManifest m;
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    m.fraction = j.at("fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const std::exception& e) {
    throw SchemaError(0, std::string("split manifest: ") + e.what());
  }
}

// Benchmark labels keep manual annotations only.
inline PartialAnnotation manual_only(const PartialAnnotation& a) {
  PartialAnnotation out;
  if (a.expression && a.expression->provenance.origin == Origin::manual) out.expression = a.expression;
  if (a.va && a.va->provenance.origin == Origin::manual) out.va = a.va;
  if (a.aus && a.aus->provenance.origin == Origin::manual) out.aus = a.aus;
  return out;
}

struct GoldRecord {
  std::string record_id;
  std::string image_ref;
  PartialAnnotation labels;
};

inline std::vector<GoldRecord> benchmark_records(const std::vector<EmotionRecord>& records, const SplitManifest& split) {
  const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
  std::vector<GoldRecord> out;
  for (const auto& r : records) {
    if (!test.count(r.record_id)) continue;
    auto labels = manual_only(r.annotation);
    if (labels.empty()) continue;
    out.push_back({r.record_id, r.image_ref, std::move(labels)});
  }
  return out;
}

inline std::string gold_to_jsonl_line(const GoldRecord& g) {
  ojson j;
  j["record_id"] = g.record_id;
  j["image_ref"] = g.image_ref;
  j["labels"] = labels_to_json(g.labels);
  return j.dump();
}

// Any JSONL with record_id and labels (FEID files qualify); generated labels
// are dropped so scoring only ever sees manual annotations.
inline std::vector<GoldRecord> read_gold_jsonl(const std::string& path) {
  std::vector<GoldRecord> out;
  for_each_jsonl_line(path, [&](std::size_t n, const std::string& line) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError(n, "not a JSON object");
    try {
      GoldRecord g;
      g.record_id = j.at("record_id").get<std::string>();
      g.image_ref = j.value("image_ref", std::string());
      g.labels = manual_only(labels_from_json(j.at("labels"), false));
      out.push_back(std::move(g));
    } catch (const std::exception& e) {
      throw SchemaError(n, e.what());
    }
  });
  return out;
}

}  // namespace seke
