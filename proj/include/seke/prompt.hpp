#pragma once
// Prompt construction: prior-knowledge prompts for the sampling rounds,
// self-verification summary prompts, and the rewrite questions that become
// the final instruction text. Everything here is a pure function of its
// inputs, so identical inputs render byte-identical prompts.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seke/affect.hpp"
#include "seke/error.hpp"
#include "seke/lexicon.hpp"
#include "seke/random.hpp"
#include "seke/response.hpp"
#include "seke/samples.hpp"

namespace seke {

struct PromptText {
  std::string system;
  std::string user;
  bool image_attached = true;
  std::string response_schema_id;

  friend bool operator==(const PromptText&, const PromptText&) = default;
};

inline bool prompt_valid(const PromptText& p) { return !p.user.empty() && is_registered_schema(p.response_schema_id); }

// Normalized uncertainty above this is reported to the summarizer as unreliable.
inline constexpr double kReliableThreshold = 0.5;

class RewriteTemplateSet {
 public:
  static constexpr std::size_t kSize = 11;

  explicit RewriteTemplateSet(std::vector<std::string> templates) : templates_(std::move(templates)) {
    if (templates_.size() != kSize)
      throw std::invalid_argument("rewrite template set needs exactly 11 entries, got " +
                                  std::to_string(templates_.size()));
    for (const auto& t : templates_) {
      if (t.empty()) throw std::invalid_argument("empty rewrite template");
      auto tokens = find_label_tokens(t);
      if (!tokens.empty()) throw std::invalid_argument("rewrite template leaks label token '" + tokens.front() + "'");
    }
  }

  static RewriteTemplateSet builtin() {
    return RewriteTemplateSet({
        "Analyze the facial expression in this image. Describe the basic emotion, estimate valence and arousal, "
        "identify the activated facial action units, and explain how these cues relate to each other.",
        "What emotion does this face convey? Please report the discrete expression category, the valence-arousal "
        "values, and the active action units, then reason about their consistency.",
        "Give a comprehensive emotion analysis of the person in this picture covering the expression category, "
        "valence and arousal, and facial action units, including how they support one another.",
        "Look carefully at this face. Which basic expression is shown, what are its valence and arousal, and which "
        "action units are activated? Explain the connections between these descriptions.",
        "Please perform a coarse-to-fine facial emotion analysis of this image: classify the expression, estimate "
        "valence and arousal on a scale from minus one to one, and detect the activated action units, justifying "
        "how they cohere.",
        "Describe the emotional state of the person in this image using three descriptions: a discrete expression "
        "label, continuous valence-arousal values, and facial action units. Explain why these descriptions agree.",
        "Identify the facial muscle movements visible in this face as action units, infer the overall expression, "
        "and estimate valence and arousal. How do the muscle movements support your conclusion?",
        "From this facial image, determine the expression category, rate the valence and arousal, and list the "
        "activated action units. Provide reasoning that links the fine-grained cues to the overall emotion.",
        "Can you analyze this face and tell me its basic emotion, its valence and arousal levels, and which facial "
        "action units are active, along with an explanation of how these fit together?",
        "Examine the facial cues in this picture. Report the expression, the valence-arousal estimate, and the "
        "active action units, and discuss the evidence that connects them.",
        "Provide a detailed facial affect analysis for this image, including the discrete emotion, valence and "
        "arousal, and facial action unit activations, and explain the reasoning behind the joint interpretation.",
    });
  }

  // UTF-8 JSON array of 11 strings.
  static RewriteTemplateSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rewrite templates '" + path + "'");
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) throw SchemaError(0, path + ": expected a JSON array of strings");
    std::vector<std::string> templates;
    for (const auto& item : doc) {
      if (!item.is_string()) throw SchemaError(0, path + ": template is not a string");
      templates.push_back(item.get<std::string>());
    }
    return RewriteTemplateSet(std::move(templates));
  }

  const std::vector<std::string>& templates() const { return templates_; }
  const std::string& operator[](std::size_t i) const { return templates_[i]; }

 private:
  std::vector<std::string> templates_;
};

inline const std::string& pick_rewrite_question(RandomStream& rng, const RewriteTemplateSet& set) {
  return set[rng.index(RewriteTemplateSet::kSize)];
}

namespace detail {

inline std::string au_list(const std::vector<int>& ids) {
  if (ids.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += "AU" + std::to_string(ids[i]);
  }
  return out;
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline const char* kSystemPrompt =
    "You are an expert facial affect annotator trained in the Facial Action Coding System. You analyse a single "
    "face image and describe it with a discrete basic expression, continuous valence-arousal values, and facial "
    "action unit (AU) occurrences. Always answer with exactly one fenced JSON block that follows the requested "
    "schema.";

// Paraphrased openings used when per-round paraphrasing is enabled.
inline const char* kPriorLeads[] = {
    "The attached face image carries partial manual annotations from human experts. Treat them as reliable prior "
    "knowledge.",
    "Human experts have already annotated part of the emotion descriptions for the attached face. Use their labels "
    "as trusted prior knowledge.",
    "Some emotion labels for the attached face were produced manually by trained annotators. Rely on them as "
    "ground-truth prior knowledge.",
};

inline void render_known(std::ostringstream& os, const PartialAnnotation& a) {
  os << "Known annotations:\n";
  if (a.expression) os << "- Discrete expression: " << to_string(a.expression->value) << "\n";
  if (a.va)
    os << "- valence " << format_number(a.va->value.valence) << ", arousal " << format_number(a.va->value.arousal)
       << " (both in [-1, 1]; valence is positivity, arousal is activation intensity)\n";
  if (a.aus)
    os << "- Activated action units: " << au_list(a.aus->value.active_ids())
       << " (every other AU in the vocabulary is inactive)\n";
}

inline void render_correlations(std::ostringstream& os) {
  os << "Emotion descriptions are correlated; use the known annotations to constrain your prediction:\n"
        "- A happy expression typically coincides with AU6 (cheek raiser) and AU12 (lip corner puller), and its "
        "intensity relates to the arousal value.\n"
        "- High arousal may originate from AU5 (upper lid raiser) in fear or AU25 (lips part) in surprise.\n"
        "- AU12 activation rarely coexists with negative valence.\n";
}

inline void render_schema(std::ostringstream& os, TaskSet tasks, const AuVocabulary& vocab, bool analysis) {
  os << "Answer with exactly one fenced JSON block (```json ... ```) containing only these keys:\n";
  if (tasks.contains(TaskKind::Expression)) {
    os << "- \"expression\": one of";
    for (Expression e : kAllExpressions) os << " \"" << to_string(e) << "\"";
    os << "\n";
  }
  if (tasks.contains(TaskKind::ValenceArousal))
    os << "- \"valence\": number in [-1, 1]\n- \"arousal\": number in [-1, 1]\n";
  if (tasks.contains(TaskKind::ActionUnits)) {
    os << "- \"aus\": object mapping every AU id of the vocabulary (as a string key) to true or false; vocabulary:";
    for (int id : vocab.ids()) os << " " << id;
    os << "\n";
  }
  if (analysis)
    os << "- \"analysis\": a comprehensive natural-language analysis of the face that explains how the expression, "
          "valence-arousal values and action units support each other\n";
}

inline std::string task_list(TaskSet tasks) {
  std::string out;
  for (TaskKind t : tasks.to_vector()) {
    if (!out.empty()) out += ", ";
    out += task_title(t);
  }
  return out;
}

inline std::string render_round(const PartialAnnotation& round, TaskKind task) {
  switch (task) {
    case TaskKind::Expression:
      return round.expression ? "expression " + std::string(to_string(round.expression->value)) : "expression n/a";
    case TaskKind::ValenceArousal:
      return round.va ? "valence " + format_number(round.va->value.valence) + ", arousal " +
                            format_number(round.va->value.arousal)
                      : "valence-arousal n/a";
    case TaskKind::ActionUnits:
      return round.aus ? "activated " + au_list(round.aus->value.active_ids()) : "action units n/a";
  }
  return {};
}

}  // namespace detail

inline std::string confidence_phrase(double normalized) {
  return normalized > kReliableThreshold ? "low confidence, verify carefully (unreliable)"
                                         : "high confidence (reliable)";
}

// variant selects a paraphrased opening; 0 is the canonical wording.
inline PromptText build_prior_prompt(const EmotionRecord& record, TaskSet targets, const AuVocabulary& vocab,
                                     std::size_t variant = 0) {
  if (targets.empty()) throw EmptyTargets();
  std::ostringstream os;
  os << detail::kPriorLeads[variant % std::size(detail::kPriorLeads)] << "\n\n";
  detail::render_known(os, record.annotation.restricted_to(targets.complement()));
  os << "\n";
  detail::render_correlations(os);
  os << "\nPredict only the missing description(s): " << detail::task_list(targets) << ".\n";
  detail::render_schema(os, targets, vocab, false);
  return PromptText{detail::kSystemPrompt, os.str(), true, prior_schema_id(targets)};
}

inline PromptText build_summary_prompt(const EmotionRecord& record, const SampleSet& samples,
                                       const std::vector<TaskUncertainty>& stats, const AuVocabulary& vocab) {
  if (samples.empty()) throw EmptySampleSet();
  std::ostringstream os;
  os << "You are verifying your own annotations of the attached face image.\n\n";
  detail::render_known(os, record.annotation.restricted_to(samples.targets.complement()));
  os << "These manual annotations are authoritative: repeat them unchanged in your final answer.\n\n";
  os << "You predicted the missing description(s) (" << detail::task_list(samples.targets) << ") "
     << samples.size() << " times independently:\n";
  for (std::size_t i = 0; i < samples.rounds.size(); ++i) {
    os << "- Round " << (i + 1) << ":";
    bool first = true;
    for (TaskKind t : samples.targets.to_vector()) {
      os << (first ? " " : "; ") << detail::render_round(samples.rounds[i], t);
      first = false;
    }
    os << "\n";
  }
  os << "\nEpistemic uncertainty of each predicted description (normalized variance across rounds, 0 = all rounds "
        "agree, 1 = maximal disagreement):\n";
  for (const auto& s : stats) {
    os << "- " << task_title(s.task) << ": " << detail::fixed3(s.normalized) << " -> " << confidence_phrase(s.normalized)
       << "\n";
  }
  os << "\nRe-examine the image. Keep reliable predictions unless the image clearly contradicts them, and verify "
        "unreliable ones carefully against the facial evidence and the known annotations. Then give the final "
        "expression, valence-arousal values and action units, and write a comprehensive analysis explaining how "
        "the three descriptions correlate.\n";
  detail::render_correlations(os);
  detail::render_schema(os, TaskSet::all(), vocab, true);
  return PromptText{detail::kSystemPrompt, os.str(), true, std::string(kSummarySchema)};
}

// Fully annotated records only need the reasoning text.
inline PromptText build_analysis_prompt(const EmotionRecord& record, const AuVocabulary& vocab) {
  std::ostringstream os;
  os << "All emotion descriptions of the attached face image were annotated manually by experts.\n\n";
  detail::render_known(os, record.annotation);
  os << "\nWrite a comprehensive analysis of the face that explains how these descriptions correlate.\n";
  detail::render_correlations(os);
  detail::render_schema(os, TaskSet{}, vocab, true);
  return PromptText{detail::kSystemPrompt, os.str(), true, std::string(kAnalysisSchema)};
}

// Reformats free-text model output into the universal template.
inline PromptText build_normalize_prompt(std::string_view model_output, const AuVocabulary& vocab) {
  std::ostringstream os;
  os << "Convert the following facial emotion analysis into the universal template. Use null for any description "
        "the text does not state. Do not add information.\n\nText:\n"
     << model_output << "\n\n";
  detail::render_schema(os, TaskSet::all(), vocab, false);
  return PromptText{"You extract structured facial emotion labels from text.", os.str(), false,
                    std::string(kNormalizeSchema)};
}

inline PromptText with_format_reminder(PromptText prompt, const ParseError& error) {
  prompt.user += "\n\nYour previous answer could not be used (" + std::string(to_string(error.kind)) + ": " +
                 error.detail +
                 "). Reply again with exactly one fenced JSON block that contains only the requested keys.";
  return prompt;
}

}  // namespace seke
