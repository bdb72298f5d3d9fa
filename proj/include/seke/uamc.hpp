#pragma once
// Uncertainty-aware Monte Carlo sampling.
//
// Each target task's answers across rounds are encoded as real vectors and
// their epistemic uncertainty is the population variance
//
//     U = (1/S) sum f^2 - ((1/S) sum f)^2
//
// taken per component: one-hot categories for the expression (the sum is the
// Gini impurity 1 - sum p_c^2), Bernoulli bits for action units (mean or max
// over the vocabulary), and the two scalars for valence-arousal. Each task's
// U is divided by its analytic maximum, the largest normalized value drives
// the acceptance probability p_acc = 1/2 + U_max/2, and another round is
// drawn while a uniform draw falls below p_acc, up to N rounds.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seke/affect.hpp"
#include "seke/annotator.hpp"
#include "seke/error.hpp"
#include "seke/prompt.hpp"
#include "seke/random.hpp"
#include "seke/samples.hpp"

namespace seke {

enum class AuAggregate { mean, max };

inline std::optional<AuAggregate> parse_au_aggregate(std::string_view s) {
  if (s == "mean") return AuAggregate::mean;
  if (s == "max") return AuAggregate::max;
  return std::nullopt;
}

inline double population_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw InsufficientSamples();
  // Welford; identical inputs give exactly zero.
  double mean = 0.0, m2 = 0.0, n = 0.0;
  for (double x : xs) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  return std::max(0.0, m2 / n);
}

namespace detail {

inline std::vector<const PartialAnnotation*> rounds_with(const SampleSet& samples, TaskKind task) {
  std::vector<const PartialAnnotation*> out;
  for (const auto& r : samples.rounds)
    if (r.has(task)) out.push_back(&r);
  if (out.size() < 2) throw InsufficientSamples();
  return out;
}

}  // namespace detail

inline double expression_variance(const SampleSet& samples) {
  auto rounds = detail::rounds_with(samples, TaskKind::Expression);
  double total = 0.0;
  std::vector<double> component(rounds.size());
  for (Expression c : kAllExpressions) {
    for (std::size_t s = 0; s < rounds.size(); ++s) component[s] = rounds[s]->expression->value == c ? 1.0 : 0.0;
    total += population_variance(component);
  }
  return total;
}

inline double au_variance(const SampleSet& samples, const AuVocabulary& vocab, AuAggregate aggregate) {
  auto rounds = detail::rounds_with(samples, TaskKind::ActionUnits);
  std::vector<double> bits(rounds.size());
  double sum = 0.0, worst = 0.0;
  for (int id : vocab.ids()) {
    for (std::size_t s = 0; s < rounds.size(); ++s) bits[s] = rounds[s]->aus->value.active(id) ? 1.0 : 0.0;
    double v = population_variance(bits);
    sum += v;
    worst = std::max(worst, v);
  }
  return aggregate == AuAggregate::mean ? sum / static_cast<double>(vocab.size()) : worst;
}

struct VaVariance {
  double valence = 0.0;
  double arousal = 0.0;
};

inline VaVariance va_variance(const SampleSet& samples) {
  auto rounds = detail::rounds_with(samples, TaskKind::ValenceArousal);
  std::vector<double> v, a;
  for (const auto* r : rounds) {
    v.push_back(r->va->value.valence);
    a.push_back(r->va->value.arousal);
  }
  return {population_variance(v), population_variance(a)};
}

// Valence-arousal reports the larger of its two scalar variances; both share
// the maximum 1.0, so this equals the max of the normalized values.
inline double task_variance(const SampleSet& samples, TaskKind task, const AuVocabulary& vocab,
                            AuAggregate aggregate = AuAggregate::mean) {
  switch (task) {
    case TaskKind::Expression:
      return expression_variance(samples);
    case TaskKind::ActionUnits:
      return au_variance(samples, vocab, aggregate);
    case TaskKind::ValenceArousal: {
      auto va = va_variance(samples);
      return std::max(va.valence, va.arousal);
    }
  }
  return 0.0;
}

// Largest value each estimator can take.
inline double max_task_variance(TaskKind task, std::size_t category_count = kExpressionCount) {
  switch (task) {
    case TaskKind::Expression:
      return 1.0 - 1.0 / static_cast<double>(category_count);
    case TaskKind::ActionUnits:
      return 0.25;
    case TaskKind::ValenceArousal:
      return 1.0;  // values confined to [-1, 1]
  }
  return 1.0;
}

inline double normalize_uncertainty(double raw, TaskKind task, const AuVocabulary& /*vocab*/,
                                    std::size_t category_count = kExpressionCount) {
  if (!(raw >= 0.0)) throw DomainError("raw uncertainty must be nonnegative");
  return std::clamp(raw / max_task_variance(task, category_count), 0.0, 1.0);
}

inline double acceptance_probability(double u_max) {
  if (!(u_max >= 0.0 && u_max <= 1.0)) throw DomainError("normalized uncertainty must lie in [0, 1]");
  return 0.5 + 0.5 * u_max;
}

// Default estimator policy for run_uamc. A policy provides
//   std::vector<TaskUncertainty> evaluate(const SampleSet&, int round) const;
struct VarianceEstimator {
  AuVocabulary vocab = AuVocabulary::standard();
  AuAggregate au_aggregate = AuAggregate::mean;
  std::size_t category_count = kExpressionCount;

  std::vector<TaskUncertainty> evaluate(const SampleSet& samples, int round) const {
    std::vector<TaskUncertainty> out;
    for (TaskKind t : samples.targets.to_vector()) {
      double raw = task_variance(samples, t, vocab, au_aggregate);
      out.push_back({t, raw, normalize_uncertainty(raw, t, vocab, category_count), round});
    }
    return out;
  }
};

enum class StopReason { low_uncertainty_draw, budget_N, no_missing_tasks };

inline constexpr std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::low_uncertainty_draw:
      return "low_uncertainty_draw";
    case StopReason::budget_N:
      return "budget_N";
    case StopReason::no_missing_tasks:
      return "no_missing_tasks";
  }
  return "";
}

// One uncertainty evaluation, made after every successful round from the
// second on.
struct UamcStep {
  int round = 0;
  std::vector<TaskUncertainty> tasks;
  TaskKind argmax = TaskKind::Expression;
  double u_max = 0.0;
  double p_acc = 0.5;
  std::optional<double> draw;  // absent when the budget was already spent
  bool continued = false;
};

struct UamcResult {
  SampleSet samples;
  std::vector<UamcStep> trajectory;
  int final_S = 0;
  StopReason stop_reason = StopReason::no_missing_tasks;
  std::uint64_t seed = 0;
  int calls = 0;

  // Per-task uncertainty of the last evaluation.
  std::vector<TaskUncertainty> final_uncertainty() const {
    return trajectory.empty() ? std::vector<TaskUncertainty>{} : trajectory.back().tasks;
  }
};

struct UamcOptions {
  int max_samples = 5;  // N
  int parse_reasks = 3;
  double temperature = 1.0;
  int max_output_tokens = 1024;
  bool paraphrase_rounds = false;
};

inline std::pair<TaskKind, double> select_max(const std::vector<TaskUncertainty>& tasks) {
  TaskKind best = tasks.front().task;
  double value = tasks.front().normalized;
  for (const auto& t : tasks) {
    if (t.normalized > value) {
      value = t.normalized;
      best = t.task;
    }
  }
  return {best, value};
}

namespace detail {

struct RoundSampler {
  const EmotionRecord& record;
  Annotator& annotator;
  const AuVocabulary& vocab;
  const UamcOptions& options;
  SampleSet& samples;
  int& calls;
  int attempted = 0;

  bool draw() {
    ++attempted;
    const std::size_t variant = options.paraphrase_rounds ? static_cast<std::size_t>(attempted - 1) : 0;
    PromptText prompt = build_prior_prompt(record, samples.targets, vocab, variant);
    DecodingParams params{options.temperature, options.max_output_tokens, attempted, 0};
    auto ask = ask_until_parsed(annotator, prompt, record.image_ref, params, options.parse_reasks);
    calls += ask.calls;
    if (!ask.response.ok()) {
      ++samples.failed_rounds;
      return false;
    }
    samples.rounds.push_back(ask.response.parsed->restricted_to(samples.targets));
    return true;
  }
};

}  // namespace detail

template <class Estimator = VarianceEstimator>
UamcResult run_uamc(const EmotionRecord& record, Annotator& annotator, const AuVocabulary& vocab,
                    RandomStream& rng, const UamcOptions& options = {}, const Estimator& estimator = Estimator{}) {
  if (options.max_samples < 2) throw DomainError("max_samples must be at least 2");
  UamcResult result;
  result.seed = rng.seed();
  result.samples.record_id = record.record_id;
  result.samples.targets = missing_tasks(record);
  if (result.samples.targets.empty()) {
    result.stop_reason = StopReason::no_missing_tasks;
    return result;
  }

  detail::RoundSampler sampler{record, annotator, vocab, options, result.samples, result.calls};
  for (int i = 0; i < 2; ++i) {
    if (!sampler.draw())
      throw AnnotatorExhausted("record '" + record.record_id + "': initial round failed after all re-asks");
  }

  const int n = options.max_samples;
  while (true) {
    UamcStep step;
    step.round = static_cast<int>(result.samples.size());
    step.tasks = estimator.evaluate(result.samples, step.round);
    std::tie(step.argmax, step.u_max) = select_max(step.tasks);
    step.p_acc = acceptance_probability(step.u_max);
    if (sampler.attempted >= n) {
      result.trajectory.push_back(std::move(step));
      result.stop_reason = StopReason::budget_N;
      break;
    }
    const double p = rng.uniform();
    step.draw = p;
    step.continued = p < step.p_acc;
    result.trajectory.push_back(std::move(step));
    if (!result.trajectory.back().continued) {
      result.stop_reason = StopReason::low_uncertainty_draw;
      break;
    }
    // Failed rounds use up budget but never enter the estimate.
    bool got = false;
    while (!got && sampler.attempted < n) got = sampler.draw();
    if (!got) {
      result.stop_reason = StopReason::budget_N;
      break;
    }
  }
  result.final_S = static_cast<int>(result.samples.size());
  return result;
}

// Fixed-budget sampling: exactly `count` attempted rounds, no early stop.
template <class Estimator = VarianceEstimator>
UamcResult run_fixed_sampling(const EmotionRecord& record, Annotator& annotator, const AuVocabulary& vocab,
                              int count, const UamcOptions& options = {}, const Estimator& estimator = Estimator{}) {
  if (count < 1) throw DomainError("fixed sample count must be positive");
  UamcResult result;
  result.samples.record_id = record.record_id;
  result.samples.targets = missing_tasks(record);
  result.stop_reason = StopReason::budget_N;
  if (result.samples.targets.empty()) {
    result.stop_reason = StopReason::no_missing_tasks;
    return result;
  }
  detail::RoundSampler sampler{record, annotator, vocab, options, result.samples, result.calls};
  for (int i = 0; i < count; ++i) sampler.draw();
  if (result.samples.empty())
    throw AnnotatorExhausted("record '" + record.record_id + "': every round failed after all re-asks");
  if (result.samples.size() >= 2) {
    UamcStep step;
    step.round = static_cast<int>(result.samples.size());
    step.tasks = estimator.evaluate(result.samples, step.round);
    std::tie(step.argmax, step.u_max) = select_max(step.tasks);
    step.p_acc = acceptance_probability(step.u_max);
    result.trajectory.push_back(std::move(step));
  }
  result.final_S = static_cast<int>(result.samples.size());
  return result;
}

// Manual labels always win; summary values fill the gaps as generated labels.
inline PartialAnnotation finalize_labels(const EmotionRecord& record, const AnnotatorResponse& summary,
                                         const std::string& run_id) {
  if (!summary.ok()) {
    const auto kind = summary.parse_error ? summary.parse_error->kind : ParseErrorKind::bad_schema;
    const auto detail = summary.parse_error ? summary.parse_error->detail : std::string("no parsed labels");
    throw SummaryParseError("summary response unusable (" + std::string(to_string(kind)) + "): " + detail);
  }
  if (!summary.analysis_text || summary.analysis_text->empty())
    throw SummaryParseError("summary response unusable (bad_schema): missing key 'analysis'");

  const PartialAnnotation& manual = record.annotation;
  const PartialAnnotation& generated = *summary.parsed;
  const Provenance prov = Provenance::generated(run_id);
  PartialAnnotation out;
  if (manual.expression)
    out.expression = manual.expression;
  else if (generated.expression)
    out.expression = Labeled<Expression>{generated.expression->value, prov};
  if (manual.va)
    out.va = manual.va;
  else if (generated.va)
    out.va = Labeled<VaAnnotation>{generated.va->value, prov};
  if (manual.aus)
    out.aus = manual.aus;
  else if (generated.aus)
    out.aus = Labeled<AuAnnotation>{generated.aus->value, prov};
  if (!out.complete()) throw SummaryParseError("summary response unusable (bad_schema): incomplete labels");
  return out;
}

struct Finalized {
  PartialAnnotation labels;
  std::string analysis;
  int calls = 0;
};

// Self-verification pass: summary prompt with the sampled rounds and their
// uncertainty, re-asked up to parse_reasks times. Records without missing
// tasks only need the analysis text.
inline Finalized summarize(const EmotionRecord& record, const UamcResult& uamc, Annotator& annotator,
                           const AuVocabulary& vocab, const std::string& run_id, int parse_reasks = 3,
                           DecodingParams params = DecodingParams::summary()) {
  Finalized out;
  if (uamc.samples.targets.empty()) {
    auto ask = ask_until_parsed(annotator, build_analysis_prompt(record, vocab), record.image_ref, params,
                                parse_reasks);
    out.calls = ask.calls;
    if (!ask.response.ok() || !ask.response.analysis_text)
      throw SummaryParseError("analysis response unusable after " + std::to_string(ask.calls) + " attempts");
    out.labels = record.annotation;
    out.analysis = *ask.response.analysis_text;
    return out;
  }
  auto prompt = build_summary_prompt(record, uamc.samples, uamc.final_uncertainty(), vocab);
  auto ask = ask_until_parsed(annotator, prompt, record.image_ref, params, parse_reasks);
  out.calls = ask.calls;
  out.labels = finalize_labels(record, ask.response, run_id);
  out.analysis = *ask.response.analysis_text;
  return out;
}

}  // namespace seke
