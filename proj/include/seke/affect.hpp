#pragma once
// Facial-affect vocabulary and the partially annotated record model.
//
// A record carries up to three descriptions: a discrete expression, a
// valence-arousal pair and a dense action-unit occurrence map. Each present
// description carries its own provenance so manual and generated labels can
// be told apart downstream.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seke {

enum class Expression : std::uint8_t {
  neutral,
  happiness,
  sadness,
  surprise,
  fear,
  disgust,
  anger,
  contempt,
};

inline constexpr std::size_t kExpressionCount = 8;

inline constexpr std::array<Expression, kExpressionCount> kAllExpressions = {
    Expression::neutral, Expression::happiness, Expression::sadness, Expression::surprise,
    Expression::fear,    Expression::disgust,   Expression::anger,   Expression::contempt,
};

inline constexpr std::string_view to_string(Expression e) {
  constexpr std::array<std::string_view, kExpressionCount> names = {
      "neutral", "happiness", "sadness", "surprise", "fear", "disgust", "anger", "contempt"};
  return names[static_cast<std::size_t>(e)];
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Canonical category names only; synonyms belong to the evaluator lexicon.
inline std::optional<Expression> parse_expression(std::string_view name) {
  const std::string lower = to_lower(name);
  for (Expression e : kAllExpressions) {
    if (to_string(e) == lower) return e;
  }
  return std::nullopt;
}

enum class TaskKind : std::uint8_t { Expression, ValenceArousal, ActionUnits };

inline constexpr std::array<TaskKind, 3> kAllTasks = {TaskKind::Expression, TaskKind::ValenceArousal,
                                                      TaskKind::ActionUnits};

// Short machine name used in schema ids, JSON keys and logs.
inline constexpr std::string_view task_key(TaskKind t) {
  switch (t) {
    case TaskKind::Expression:
      return "expression";
    case TaskKind::ValenceArousal:
      return "va";
    case TaskKind::ActionUnits:
      return "aus";
  }
  return "";
}

inline constexpr std::string_view task_title(TaskKind t) {
  switch (t) {
    case TaskKind::Expression:
      return "discrete expression";
    case TaskKind::ValenceArousal:
      return "valence-arousal";
    case TaskKind::ActionUnits:
      return "action units";
  }
  return "";
}

inline std::optional<TaskKind> parse_task_key(std::string_view key) {
  for (TaskKind t : kAllTasks) {
    if (task_key(t) == key) return t;
  }
  return std::nullopt;
}

// Small ordered set over the three tasks.
class TaskSet {
 public:
  TaskSet() = default;
  TaskSet(std::initializer_list<TaskKind> tasks) {
    for (TaskKind t : tasks) insert(t);
  }

  void insert(TaskKind t) { bits_ |= bit(t); }
  void erase(TaskKind t) { bits_ &= static_cast<std::uint8_t>(~bit(t)); }
  bool contains(TaskKind t) const { return (bits_ & bit(t)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const {
    return static_cast<std::size_t>(contains(TaskKind::Expression)) +
           static_cast<std::size_t>(contains(TaskKind::ValenceArousal)) +
           static_cast<std::size_t>(contains(TaskKind::ActionUnits));
  }

  std::vector<TaskKind> to_vector() const {
    std::vector<TaskKind> out;
    for (TaskKind t : kAllTasks)
      if (contains(t)) out.push_back(t);
    return out;
  }

  static TaskSet all() { return {TaskKind::Expression, TaskKind::ValenceArousal, TaskKind::ActionUnits}; }
  TaskSet complement() const {
    TaskSet out;
    out.bits_ = static_cast<std::uint8_t>(~bits_ & 0x7u);
    return out;
  }

  friend bool operator==(TaskSet, TaskSet) = default;

 private:
  static std::uint8_t bit(TaskKind t) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t)); }
  std::uint8_t bits_ = 0;
};

// Strictly ascending, nonempty list of AU identifiers.
class AuVocabulary {
 public:
  explicit AuVocabulary(std::vector<int> ids) : ids_(std::move(ids)) {
    if (ids_.empty()) throw std::invalid_argument("AU vocabulary must not be empty");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (ids_[i] <= 0) throw std::invalid_argument("AU ids must be positive");
      if (i > 0 && ids_[i] <= ids_[i - 1])
        throw std::invalid_argument("AU vocabulary must be strictly ascending without duplicates");
    }
  }

  // Union of the BP4D, DISFA and Aff-Wild2 AU sets.
  static AuVocabulary standard() { return AuVocabulary({1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 24, 25, 26}); }

  const std::vector<int>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

  friend bool operator==(const AuVocabulary&, const AuVocabulary&) = default;

 private:
  std::vector<int> ids_;
};

struct AuAnnotation {
  std::map<int, bool> occurrences;

  bool active(int id) const {
    auto it = occurrences.find(id);
    return it != occurrences.end() && it->second;
  }

  std::vector<int> active_ids() const {
    std::vector<int> out;
    for (const auto& [id, on] : occurrences)
      if (on) out.push_back(id);
    return out;
  }

  static AuAnnotation from_active(const AuVocabulary& vocab, const std::vector<int>& active) {
    AuAnnotation a;
    for (int id : vocab.ids()) a.occurrences[id] = std::find(active.begin(), active.end(), id) != active.end();
    return a;
  }

  friend bool operator==(const AuAnnotation&, const AuAnnotation&) = default;
};

inline constexpr int kAuIntensityThreshold = 2;

// Intensity annotations (0-5) count as an occurrence strictly above 2.
inline bool intensity_to_occurrence(int intensity) { return intensity > kAuIntensityThreshold; }

struct VaAnnotation {
  double valence = 0.0;
  double arousal = 0.0;

  friend bool operator==(const VaAnnotation&, const VaAnnotation&) = default;
};

inline bool in_unit_range(double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; }

enum class Origin : std::uint8_t { manual, generated };

inline constexpr std::string_view to_string(Origin o) { return o == Origin::manual ? "manual" : "generated"; }

struct Provenance {
  Origin origin = Origin::manual;
  std::string source_dataset;
  std::optional<std::string> generator_run_id;

  static Provenance manual(std::string dataset) { return {Origin::manual, std::move(dataset), std::nullopt}; }
  static Provenance generated(std::string run_id, std::string dataset = {}) {
    return {Origin::generated, std::move(dataset), std::move(run_id)};
  }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

template <class T>
struct Labeled {
  T value;
  Provenance provenance;

  friend bool operator==(const Labeled&, const Labeled&) = default;
};

struct PartialAnnotation {
  std::optional<Labeled<Expression>> expression;
  std::optional<Labeled<VaAnnotation>> va;
  std::optional<Labeled<AuAnnotation>> aus;

  bool has(TaskKind t) const {
    switch (t) {
      case TaskKind::Expression:
        return expression.has_value();
      case TaskKind::ValenceArousal:
        return va.has_value();
      case TaskKind::ActionUnits:
        return aus.has_value();
    }
    return false;
  }

  const Provenance* provenance(TaskKind t) const {
    switch (t) {
      case TaskKind::Expression:
        return expression ? &expression->provenance : nullptr;
      case TaskKind::ValenceArousal:
        return va ? &va->provenance : nullptr;
      case TaskKind::ActionUnits:
        return aus ? &aus->provenance : nullptr;
    }
    return nullptr;
  }

  TaskSet present() const {
    TaskSet out;
    for (TaskKind t : kAllTasks)
      if (has(t)) out.insert(t);
    return out;
  }

  bool complete() const { return expression && va && aus; }
  bool empty() const { return !expression && !va && !aus; }

  // Keeps only the listed tasks.
  PartialAnnotation restricted_to(TaskSet tasks) const {
    PartialAnnotation out;
    if (tasks.contains(TaskKind::Expression)) out.expression = expression;
    if (tasks.contains(TaskKind::ValenceArousal)) out.va = va;
    if (tasks.contains(TaskKind::ActionUnits)) out.aus = aus;
    return out;
  }

  friend bool operator==(const PartialAnnotation&, const PartialAnnotation&) = default;
};

// Hidden truth for synthetic annotators and simulation.
struct CompleteAnnotation {
  Expression expression = Expression::neutral;
  VaAnnotation va;
  AuAnnotation aus;

  PartialAnnotation as_partial(const Provenance& p, TaskSet tasks = TaskSet::all()) const {
    PartialAnnotation out;
    if (tasks.contains(TaskKind::Expression)) out.expression = Labeled<Expression>{expression, p};
    if (tasks.contains(TaskKind::ValenceArousal)) out.va = Labeled<VaAnnotation>{va, p};
    if (tasks.contains(TaskKind::ActionUnits)) out.aus = Labeled<AuAnnotation>{aus, p};
    return out;
  }

  friend bool operator==(const CompleteAnnotation&, const CompleteAnnotation&) = default;
};

struct EmotionRecord {
  std::string record_id;
  std::string image_ref;
  std::optional<std::string> subject_id;
  PartialAnnotation annotation;

  friend bool operator==(const EmotionRecord&, const EmotionRecord&) = default;
};

struct Violation {
  std::string code;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::vector<Violation> validate_record(const EmotionRecord& record, const AuVocabulary& vocab) {
  std::vector<Violation> out;
  if (record.record_id.empty()) out.push_back({"record_id_empty", "record_id is empty"});
  if (record.image_ref.empty()) out.push_back({"image_ref_empty", "image_ref is empty"});

  const PartialAnnotation& a = record.annotation;
  if (a.empty()) out.push_back({"annotation_empty", "annotation empty"});

  if (a.va) {
    if (!in_unit_range(a.va->value.valence))
      out.push_back({"va_range", "va.valence out of [-1,1]"});
    if (!in_unit_range(a.va->value.arousal))
      out.push_back({"va_range", "va.arousal out of [-1,1]"});
  }
  if (a.aus) {
    for (const auto& [id, on] : a.aus->value.occurrences) {
      if (!vocab.contains(id))
        out.push_back({"au_vocabulary", "au id not in vocabulary: AU" + std::to_string(id)});
    }
    for (int id : vocab.ids()) {
      if (!a.aus->value.occurrences.count(id))
        out.push_back({"au_dense", "vocabulary AU" + std::to_string(id) + " has no occurrence value"});
    }
  }
  for (TaskKind t : kAllTasks) {
    const Provenance* p = a.provenance(t);
    if (p && p->origin == Origin::manual && p->source_dataset.empty())
      out.push_back({"provenance_source", std::string(task_key(t)) + " manual label without source_dataset"});
  }
  return out;
}

inline TaskSet missing_tasks(const EmotionRecord& record) { return record.annotation.present().complement(); }

inline TaskSet present_tasks(const EmotionRecord& record) { return record.annotation.present(); }

// Shortest decimal that round-trips, e.g. 0.7 -> "0.7".
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace seke
