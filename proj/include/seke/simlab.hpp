#pragma once
// Desk-scale simulation of the annotation method against synthetic annotators
// with known truth. Each simulated record hides exactly one description; the
// adaptive sampler and fixed-budget baselines all query the same annotator,
// so round k returns the same draw for every strategy and their outcomes are
// paired record by record.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "seke/affect.hpp"
#include "seke/annotator.hpp"
#include "seke/error.hpp"
#include "seke/random.hpp"
#include "seke/uamc.hpp"

namespace seke {

enum class Summarizer { vote, oracle };

inline std::optional<Summarizer> parse_summarizer(std::string_view s) {
  if (s == "vote") return Summarizer::vote;
  if (s == "oracle") return Summarizer::oracle;
  return std::nullopt;
}

struct SimConfig {
  std::vector<double> noise_grid{0.0, 0.1, 0.2, 0.3};
  std::vector<double> va_sigma_grid{0.1};
  int records_per_cell = 1000;
  int max_samples = 5;  // N for the adaptive strategy
  std::vector<int> baselines{2, 5};
  std::uint64_t seed = 7;
  Summarizer summarizer = Summarizer::vote;
  AuAggregate au_aggregate = AuAggregate::mean;
  double au_base_rate = 0.25;  // prior occurrence probability of each hidden AU
  int workers = 4;
  AuVocabulary vocab = AuVocabulary::standard();

  void validate() const {
    if (noise_grid.empty()) throw ConfigError("sim.noise_grid must be nonempty");
    if (va_sigma_grid.empty()) throw ConfigError("sim.va_sigma_grid must be nonempty");
    for (double t : noise_grid)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("sim.noise_grid values must lie in [0, 1]");
    for (double s : va_sigma_grid)
      if (!(s >= 0.0)) throw ConfigError("sim.va_sigma_grid values must be nonnegative");
    if (records_per_cell < 100) throw ConfigError("sim.records_per_cell must be at least 100");
    if (max_samples < 2) throw ConfigError("sim.max_samples must be at least 2");
    for (int k : baselines)
      if (k < 1) throw ConfigError("sim.baselines entries must be positive");
    if (!(au_base_rate >= 0.0 && au_base_rate <= 1.0)) throw ConfigError("sim.au_base_rate must lie in [0, 1]");
    if (workers < 1) throw ConfigError("workers must be positive");
  }
};

// Expected rounds of a chain that starts with two samples and continues with
// constant probability p until N.
inline double expected_samples_closed_form(double p_continue, int n) {
  if (!(p_continue >= 0.0 && p_continue <= 1.0)) throw DomainError("p_continue must lie in [0, 1]");
  if (n < 2) throw DomainError("N must be at least 2");
  double total = 2.0, term = 1.0;
  for (int k = 1; k <= n - 2; ++k) {
    term *= p_continue;
    total += term;
  }
  return total;
}

// Majority vote over rounds; ties go to the value seen most recently.
// Valence and arousal are averaged.
inline PartialAnnotation vote_summary(const SampleSet& samples, const AuVocabulary& vocab, const Provenance& prov) {
  PartialAnnotation out;
  if (samples.empty()) return out;
  const auto& rounds = samples.rounds;

  if (samples.targets.contains(TaskKind::Expression)) {
    std::array<int, kExpressionCount> count{};
    std::array<int, kExpressionCount> last{};
    for (std::size_t s = 0; s < rounds.size(); ++s) {
      if (!rounds[s].expression) continue;
      auto c = static_cast<std::size_t>(rounds[s].expression->value);
      ++count[c];
      last[c] = static_cast<int>(s) + 1;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < kExpressionCount; ++c)
      if (count[c] > count[best] || (count[c] == count[best] && last[c] > last[best])) best = c;
    if (count[best] > 0) out.expression = Labeled<Expression>{kAllExpressions[best], prov};
  }
  if (samples.targets.contains(TaskKind::ValenceArousal)) {
    double v = 0.0, a = 0.0;
    int n = 0;
    for (const auto& r : rounds) {
      if (!r.va) continue;
      v += r.va->value.valence;
      a += r.va->value.arousal;
      ++n;
    }
    if (n > 0) out.va = Labeled<VaAnnotation>{VaAnnotation{v / n, a / n}, prov};
  }
  if (samples.targets.contains(TaskKind::ActionUnits)) {
    AuAnnotation aus;
    bool any = false;
    for (int id : vocab.ids()) {
      int on = 0, off = 0;
      bool latest = false;
      for (const auto& r : rounds) {
        if (!r.aus) continue;
        any = true;
        latest = r.aus->value.active(id);
        (latest ? on : off) += 1;
      }
      aus.occurrences[id] = on == off ? latest : on > off;
    }
    if (any) out.aus = Labeled<AuAnnotation>{std::move(aus), prov};
  }
  return out;
}

struct StrategyStats {
  std::string strategy;
  double mean_S = 0.0;
  double mean_calls = 0.0;
  double expr_err = 0.0;    // error rate over records whose expression was hidden
  double au_hamming = 0.0;  // mean fraction of wrong AU bits over records whose AUs were hidden
  double va_abs_err = 0.0;  // mean of (|dv| + |da|) / 2 over records whose VA was hidden
  std::size_t n_expr = 0;
  std::size_t n_au = 0;
  std::size_t n_va = 0;
};

// Per-record outcome; error is measured on the hidden task only.
struct RecordOutcome {
  TaskKind task = TaskKind::Expression;
  double error = 0.0;
  int final_S = 0;
  int calls = 0;
};

struct SimCellResult {
  double theta = 0.0;
  double va_sigma = 0.0;
  std::vector<StrategyStats> strategies;           // "uamc" first, then "fixed<k>"
  std::vector<std::vector<RecordOutcome>> outcomes;  // parallel to strategies

  const StrategyStats& stats(std::string_view name) const {
    for (const auto& s : strategies)
      if (s.strategy == name) return s;
    throw Error("no strategy '" + std::string(name) + "' in cell");
  }
  const std::vector<RecordOutcome>& outcomes_of(std::string_view name) const {
    for (std::size_t i = 0; i < strategies.size(); ++i)
      if (strategies[i].strategy == name) return outcomes[i];
    throw Error("no strategy '" + std::string(name) + "' in cell");
  }
};

namespace detail {

inline CompleteAnnotation random_truth(RandomStream& rng, const AuVocabulary& vocab, double au_rate) {
  CompleteAnnotation t;
  t.expression = kAllExpressions[rng.index(kExpressionCount)];
  t.va.valence = 2.0 * rng.uniform() - 1.0;
  t.va.arousal = 2.0 * rng.uniform() - 1.0;
  for (int id : vocab.ids()) t.aus.occurrences[id] = rng.bernoulli(au_rate);
  return t;
}

inline double outcome_error(TaskKind task, const PartialAnnotation& got, const CompleteAnnotation& truth,
                            const AuVocabulary& vocab) {
  switch (task) {
    case TaskKind::Expression:
      return got.expression && got.expression->value == truth.expression ? 0.0 : 1.0;
    case TaskKind::ActionUnits: {
      if (!got.aus) return 1.0;
      int wrong = 0;
      for (int id : vocab.ids())
        if (got.aus->value.active(id) != truth.aus.active(id)) ++wrong;
      return static_cast<double>(wrong) / static_cast<double>(vocab.size());
    }
    case TaskKind::ValenceArousal:
      if (!got.va) return 2.0;
      return 0.5 * (std::abs(got.va->value.valence - truth.va.valence) +
                    std::abs(got.va->value.arousal - truth.va.arousal));
  }
  return 0.0;
}

inline StrategyStats aggregate(std::string name, const std::vector<RecordOutcome>& rows) {
  StrategyStats s;
  s.strategy = std::move(name);
  double expr = 0.0, au = 0.0, va = 0.0;
  for (const auto& r : rows) {
    s.mean_S += r.final_S;
    s.mean_calls += r.calls;
    switch (r.task) {
      case TaskKind::Expression:
        expr += r.error;
        ++s.n_expr;
        break;
      case TaskKind::ActionUnits:
        au += r.error;
        ++s.n_au;
        break;
      case TaskKind::ValenceArousal:
        va += r.error;
        ++s.n_va;
        break;
    }
  }
  const double n = static_cast<double>(rows.size());
  s.mean_S /= n;
  s.mean_calls /= n;
  s.expr_err = s.n_expr ? expr / static_cast<double>(s.n_expr) : 0.0;
  s.au_hamming = s.n_au ? au / static_cast<double>(s.n_au) : 0.0;
  s.va_abs_err = s.n_va ? va / static_cast<double>(s.n_va) : 0.0;
  return s;
}

inline std::uint64_t cell_seed(std::uint64_t seed, double theta, double va_sigma) {
  return mix_seed(seed, "cell:" + format_number(theta) + ":" + format_number(va_sigma));
}

}  // namespace detail

// One grid cell. Records hide expression, VA and AUs in rotation.
inline SimCellResult run_cell(const SimConfig& config, double theta, double va_sigma) {
  const std::uint64_t seed = detail::cell_seed(config.seed, theta, va_sigma);
  const AuVocabulary& vocab = config.vocab;
  SyntheticAnnotator annotator(vocab, seed);

  std::vector<EmotionRecord> records;
  std::vector<CompleteAnnotation> truths;
  const std::array<TaskKind, 3> rotation = {TaskKind::Expression, TaskKind::ValenceArousal, TaskKind::ActionUnits};
  for (int i = 0; i < config.records_per_cell; ++i) {
    EmotionRecord r;
    r.record_id = "sim-" + std::to_string(i);
    r.image_ref = r.record_id + ".jpg";
    auto rng = RandomStream::for_record(seed, r.record_id, "truth");
    CompleteAnnotation truth = detail::random_truth(rng, vocab, config.au_base_rate);
    TaskSet hidden;
    hidden.insert(rotation[static_cast<std::size_t>(i) % 3]);
    r.annotation = truth.as_partial(Provenance::manual("sim"), hidden.complement());
    annotator.add(r.image_ref, SyntheticAnnotatorSpec{truth, theta, va_sigma});
    records.push_back(std::move(r));
    truths.push_back(std::move(truth));
  }

  UamcOptions options;
  options.max_samples = config.max_samples;
  VarianceEstimator estimator{vocab, config.au_aggregate, kExpressionCount};
  const Provenance prov = Provenance::generated("sim");

  auto finish = [&](const EmotionRecord& rec, const UamcResult& u, const CompleteAnnotation& truth) {
    RecordOutcome o;
    o.task = u.samples.targets.to_vector().front();
    o.final_S = u.final_S;
    o.calls = u.calls;
    PartialAnnotation got;
    if (config.summarizer == Summarizer::vote) {
      got = vote_summary(u.samples, vocab, prov);
    } else {
      auto prompt = build_summary_prompt(rec, u.samples, u.final_uncertainty(), vocab);
      auto ask = ask_until_parsed(annotator, prompt, rec.image_ref, DecodingParams::summary(), options.parse_reasks);
      o.calls += ask.calls;
      if (ask.response.ok()) got = *ask.response.parsed;
    }
    o.error = detail::outcome_error(o.task, got, truth, vocab);
    return o;
  };

  SimCellResult cell;
  cell.theta = theta;
  cell.va_sigma = va_sigma;
  cell.outcomes.resize(1 + config.baselines.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto rng = RandomStream::for_record(seed, records[i].record_id, "uamc");
    cell.outcomes[0].push_back(finish(records[i], run_uamc(records[i], annotator, vocab, rng, options, estimator),
                                      truths[i]));
    for (std::size_t b = 0; b < config.baselines.size(); ++b) {
      auto fixed = run_fixed_sampling(records[i], annotator, vocab, config.baselines[b], options, estimator);
      cell.outcomes[b + 1].push_back(finish(records[i], fixed, truths[i]));
    }
  }
  cell.strategies.push_back(detail::aggregate("uamc", cell.outcomes[0]));
  for (std::size_t b = 0; b < config.baselines.size(); ++b)
    cell.strategies.push_back(detail::aggregate("fixed" + std::to_string(config.baselines[b]), cell.outcomes[b + 1]));
  return cell;
}

// Cells run in parallel; results come back in grid order (noise-major).
inline std::vector<SimCellResult> run_grid(const SimConfig& config) {
  config.validate();
  std::vector<std::pair<double, double>> cells;
  for (double t : config.noise_grid)
    for (double s : config.va_sigma_grid) cells.emplace_back(t, s);

  std::vector<SimCellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_cell(config, cells[i].first, cells[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), cells.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

inline std::string grid_to_csv(const std::vector<SimCellResult>& cells) {
  std::string out = "theta,va_sigma,strategy,mean_S,mean_calls,expr_err,au_hamming,va_abs_err\n";
  char buf[256];
  for (const auto& c : cells) {
    for (const auto& s : c.strategies) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", format_number(c.theta).c_str(),
                    format_number(c.va_sigma).c_str(), s.strategy.c_str(), s.mean_S, s.mean_calls, s.expr_err,
                    s.au_hamming, s.va_abs_err);
      out += buf;
    }
  }
  return out;
}

struct BootstrapInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Percentile bootstrap of the mean of paired differences.
inline BootstrapInterval bootstrap_mean(const std::vector<double>& diffs, int resamples, std::uint64_t seed,
                                        double level = 0.95) {
  if (diffs.empty()) throw DomainError("bootstrap needs at least one value");
  if (resamples < 1) throw DomainError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("bootstrap level must lie in (0, 1)");
  BootstrapInterval out;
  for (double d : diffs) out.mean += d;
  out.mean /= static_cast<double>(diffs.size());

  RandomStream rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i) sum += diffs[rng.index(diffs.size())];
    m = sum / static_cast<double>(diffs.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1) + 0.5));
    return means[std::min(idx, means.size() - 1)];
  };
  out.lower = quantile((1.0 - level) / 2.0);
  out.upper = quantile(1.0 - (1.0 - level) / 2.0);
  return out;
}

// Differences a - b for records whose hidden task is `task`, paired by index.
inline std::vector<double> paired_differences(const std::vector<RecordOutcome>& a, const std::vector<RecordOutcome>& b,
                                              std::optional<TaskKind> task = std::nullopt) {
  if (a.size() != b.size()) throw LengthMismatch("paired outcomes differ in length");
  std::vector<double> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (task && a[i].task != *task) continue;
    out.push_back(a[i].error - b[i].error);
  }
  return out;
}

inline std::vector<double> paired_call_differences(const std::vector<RecordOutcome>& a,
                                                   const std::vector<RecordOutcome>& b) {
  if (a.size() != b.size()) throw LengthMismatch("paired outcomes differ in length");
  std::vector<double> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(static_cast<double>(a[i].calls - b[i].calls));
  return out;
}

}  // namespace seke
