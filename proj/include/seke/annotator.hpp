#pragma once
// The stochastic annotator: a chat model that sees a face image and a prompt
// and answers with a fenced JSON block. Backends implement Annotator; this
// header carries the synthetic backend used for offline runs and simulation,
// and the call-budget decorator.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "seke/affect.hpp"
#include "seke/error.hpp"
#include "seke/prompt.hpp"
#include "seke/random.hpp"
#include "seke/response.hpp"

namespace seke {

struct DecodingParams {
  double temperature = 1.0;
  int max_output_tokens = 1024;
  int round_index = 1;
  int reask = 0;  // 0 for the first ask, then 1.. for format re-asks

  static DecodingParams sampling(int round) { return {1.0, 1024, round, 0}; }
  static DecodingParams summary() { return {0.2, 2048, 1, 0}; }
};

inline void validate(const DecodingParams& p) {
  if (!(p.temperature >= 0.0 && p.temperature <= 2.0)) throw DomainError("temperature must be in [0, 2]");
  if (p.max_output_tokens <= 0) throw DomainError("max_output_tokens must be positive");
  if (p.round_index < 1) throw DomainError("round_index must be >= 1");
}

struct AnnotatorResponse {
  std::string raw_text;
  std::optional<PartialAnnotation> parsed;  // set iff parsing succeeded
  std::optional<std::string> analysis_text;
  std::optional<ParseError> parse_error;
  long latency_ms = 0;
  int attempt = 1;  // transport attempt that produced the response

  bool ok() const { return parsed.has_value(); }
};

// Parses raw text against the prompt's registered schema.
inline void attach_parse(AnnotatorResponse& r, std::string_view schema_id, const AuVocabulary& vocab) {
  auto shape = schema_shape(schema_id);
  if (!shape) {
    r.parse_error = ParseError{ParseErrorKind::bad_schema, "unregistered schema '" + std::string(schema_id) + "'"};
    return;
  }
  auto parsed = parse_response(r.raw_text, *shape, vocab, Provenance::generated(""));
  if (auto* err = std::get_if<ParseError>(&parsed)) {
    r.parse_error = *err;
    return;
  }
  auto& answer = std::get<StructuredAnswer>(parsed);
  r.parsed = std::move(answer.labels);
  r.analysis_text = std::move(answer.analysis);
}

class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual AnnotatorResponse complete(const PromptText& prompt, std::string_view image_ref,
                                     const DecodingParams& params) = 0;
  virtual std::string model_id() const = 0;
};

struct SyntheticAnnotatorSpec {
  CompleteAnnotation hidden_truth;
  double noise = 0.0;     // theta: flip probability for expression and each AU bit
  double va_sigma = 0.0;  // Gaussian perturbation of valence and arousal

  void validate() const {
    if (!(noise >= 0.0 && noise <= 1.0)) throw DomainError("synthetic noise must be in [0, 1]");
    if (!(va_sigma >= 0.0)) throw DomainError("va_sigma must be nonnegative");
  }
};

namespace detail {

// Gaussian noise truncated to +-3 sigma.
inline double truncated_noise(RandomStream& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  while (true) {
    double z = rng.normal(0.0, sigma);
    if (std::abs(z) <= 3.0 * sigma) return z;
  }
}

inline std::string synthetic_analysis(const PartialAnnotation& a) {
  std::string text = "The face is analysed jointly across its descriptions.";
  if (a.expression) text += " The overall expression reads as " + std::string(to_string(a.expression->value)) + ".";
  if (a.va)
    text += " Valence is " + format_number(std::round(a.va->value.valence * 100) / 100) + " and arousal is " +
            format_number(std::round(a.va->value.arousal * 100) / 100) + ", consistent with that reading.";
  if (a.aus) text += " Activated action units: " + au_list(a.aus->value.active_ids()) + ".";
  return text;
}

}  // namespace detail

// One noisy draw around the hidden truth, rendered in the wire format.
// Draws the same random numbers whatever is requested, so the noise on a
// task does not depend on which other tasks were asked for.
inline AnnotatorResponse synthetic_complete(const SyntheticAnnotatorSpec& spec, TaskSet requested, RandomStream& rng,
                                            bool with_analysis = false) {
  CompleteAnnotation out = spec.hidden_truth;

  if (rng.bernoulli(spec.noise)) {
    auto k = rng.index(kExpressionCount - 1);
    auto truth = static_cast<std::size_t>(spec.hidden_truth.expression);
    out.expression = kAllExpressions[k >= truth ? k + 1 : k];
  }
  out.va.valence = std::clamp(out.va.valence + detail::truncated_noise(rng, spec.va_sigma), -1.0, 1.0);
  out.va.arousal = std::clamp(out.va.arousal + detail::truncated_noise(rng, spec.va_sigma), -1.0, 1.0);
  for (auto& [id, on] : out.aus.occurrences) {
    if (rng.bernoulli(spec.noise)) on = !on;
  }

  const Provenance prov = Provenance::generated("");
  PartialAnnotation labels = out.as_partial(prov, requested);
  AnnotatorResponse r;
  std::optional<std::string> analysis;
  if (with_analysis) analysis = detail::synthetic_analysis(requested.empty() ? spec.hidden_truth.as_partial(prov) : labels);
  r.raw_text = "Here is my annotation.\n" + render_structured(labels, analysis);
  r.parsed = std::move(labels);
  r.analysis_text = std::move(analysis);
  return r;
}

// Offline backend keyed by image reference. Each call derives its own random
// stream from (seed, image, schema, round, reask), so calls are independent
// of scheduling and strategies that share a round index see the same draw.
class SyntheticAnnotator : public Annotator {
 public:
  SyntheticAnnotator(AuVocabulary vocab, std::uint64_t seed) : vocab_(std::move(vocab)), seed_(seed) {}

  void add(std::string image_ref, SyntheticAnnotatorSpec spec) {
    spec.validate();
    specs_.insert_or_assign(std::move(image_ref), std::move(spec));
  }

  // Replaces this fraction of responses with unparseable prose.
  void set_garble_rate(double rate) { garble_rate_ = rate; }

  AnnotatorResponse complete(const PromptText& prompt, std::string_view image_ref,
                             const DecodingParams& params) override {
    validate(params);
    auto shape = schema_shape(prompt.response_schema_id);
    if (!shape) throw Error("unregistered response schema '" + prompt.response_schema_id + "'");
    if (prompt.response_schema_id == kNormalizeSchema) {
      AnnotatorResponse r;
      r.raw_text = "normalization is not supported by the synthetic backend";
      attach_parse(r, prompt.response_schema_id, vocab_);
      return r;
    }
    auto it = specs_.find(std::string(image_ref));
    if (it == specs_.end()) throw Error("synthetic annotator has no hidden truth for '" + std::string(image_ref) + "'");

    std::uint64_t s = mix_seed(seed_, image_ref);
    s = mix_seed(s, prompt.response_schema_id);
    s = mix_seed(s, static_cast<std::uint64_t>(params.round_index) * 1024u + static_cast<std::uint64_t>(params.reask));
    RandomStream rng(s);

    if (garble_rate_ > 0.0 && rng.bernoulli(garble_rate_)) {
      AnnotatorResponse r;
      r.raw_text = "I cannot provide a structured answer for this image.";
      attach_parse(r, prompt.response_schema_id, vocab_);
      return r;
    }
    return synthetic_complete(it->second, shape->tasks, rng, shape->analysis);
  }

  std::string model_id() const override { return "synthetic"; }
  const AuVocabulary& vocab() const { return vocab_; }

 private:
  AuVocabulary vocab_;
  std::uint64_t seed_;
  double garble_rate_ = 0.0;
  std::unordered_map<std::string, SyntheticAnnotatorSpec> specs_;
};

// Caps the number of logical completions across all workers. Transport
// retries inside a backend do not count; a call is charged once.
class BudgetedAnnotator : public Annotator {
 public:
  BudgetedAnnotator(Annotator& inner, std::size_t max_calls) : inner_(inner), max_calls_(max_calls) {}

  AnnotatorResponse complete(const PromptText& prompt, std::string_view image_ref,
                             const DecodingParams& params) override {
    std::size_t used = calls_.load();
    do {
      if (used >= max_calls_) throw BudgetExceeded(max_calls_);
    } while (!calls_.compare_exchange_weak(used, used + 1));
    return inner_.complete(prompt, image_ref, params);
  }

  std::string model_id() const override { return inner_.model_id(); }
  std::size_t calls_made() const { return calls_.load(); }

 private:
  Annotator& inner_;
  std::size_t max_calls_;
  std::atomic<std::size_t> calls_{0};
};

struct AskResult {
  AnnotatorResponse response;
  int calls = 0;
};

// Asks once, then re-asks with a format reminder up to max_reasks times.
inline AskResult ask_until_parsed(Annotator& annotator, const PromptText& prompt, std::string_view image_ref,
                                  DecodingParams params, int max_reasks) {
  AskResult out;
  PromptText current = prompt;
  for (int reask = 0; reask <= max_reasks; ++reask) {
    params.reask = reask;
    out.response = annotator.complete(current, image_ref, params);
    ++out.calls;
    if (out.response.ok()) return out;
    if (out.response.parse_error) current = with_format_reminder(prompt, *out.response.parse_error);
  }
  return out;
}

}  // namespace seke
