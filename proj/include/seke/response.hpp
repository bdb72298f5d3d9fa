#pragma once
// Structured annotator responses: a fenced JSON block with a fixed key set.
//
//   ```json
//   {"expression": "happiness", "valence": 0.7, "arousal": 0.4,
//    "aus": {"1": false, "2": false, ..., "26": false}, "analysis": "..."}
//   ```
//
// Only the keys of the requested tasks may appear. Values are never clamped:
// out-of-range numbers and unknown AU ids are parse errors.

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "seke/affect.hpp"

namespace seke {

enum class ParseErrorKind { no_json, bad_schema, range, vocabulary };

inline constexpr std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::no_json:
      return "no_json";
    case ParseErrorKind::bad_schema:
      return "bad_schema";
    case ParseErrorKind::range:
      return "range";
    case ParseErrorKind::vocabulary:
      return "vocabulary";
  }
  return "";
}

struct ParseError {
  ParseErrorKind kind;
  std::string detail;
};

// Which keys a response must carry.
struct ResponseShape {
  TaskSet tasks;
  bool analysis = false;
  bool nullable = false;  // null means "not determinable"; used by output normalization
};

struct StructuredAnswer {
  PartialAnnotation labels;
  std::optional<std::string> analysis;
};

template <class T>
using Parsed = std::variant<T, ParseError>;

template <class T>
bool parsed_ok(const Parsed<T>& p) {
  return std::holds_alternative<T>(p);
}

// Response schemas: "prior:<task keys joined by +>", "summary", "analysis", "normalize".
inline std::string prior_schema_id(TaskSet targets) {
  std::string id = "prior:";
  bool first = true;
  for (TaskKind t : targets.to_vector()) {
    if (!first) id += '+';
    id += task_key(t);
    first = false;
  }
  return id;
}

inline constexpr std::string_view kSummarySchema = "summary";
inline constexpr std::string_view kAnalysisSchema = "analysis";
inline constexpr std::string_view kNormalizeSchema = "normalize";

inline std::optional<ResponseShape> schema_shape(std::string_view id) {
  if (id == kSummarySchema) return ResponseShape{TaskSet::all(), true, false};
  if (id == kAnalysisSchema) return ResponseShape{TaskSet{}, true, false};
  if (id == kNormalizeSchema) return ResponseShape{TaskSet::all(), false, true};
  if (id.rfind("prior:", 0) != 0) return std::nullopt;
  ResponseShape shape;
  std::string_view rest = id.substr(6);
  while (!rest.empty()) {
    auto pos = rest.find('+');
    auto key = rest.substr(0, pos);
    auto t = parse_task_key(key);
    if (!t || shape.tasks.contains(*t)) return std::nullopt;
    shape.tasks.insert(*t);
    rest = pos == std::string_view::npos ? std::string_view{} : rest.substr(pos + 1);
  }
  if (shape.tasks.empty()) return std::nullopt;
  return shape;
}

inline bool is_registered_schema(std::string_view id) { return schema_shape(id).has_value(); }

// Contents of the first ``` fenced block, language tag stripped.
inline std::optional<std::string_view> first_fenced_block(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  const auto body = open + 3;
  auto start = text.find('\n', body);
  std::string_view tag = text.substr(body, start == std::string_view::npos ? std::string_view::npos : start - body);
  if (tag.find_first_of("{[") != std::string_view::npos || start == std::string_view::npos) {
    start = body;  // ```{"a": 1}``` on one line
  } else {
    start += 1;
  }
  auto close = text.find("```", start);
  if (close == std::string_view::npos) return std::nullopt;
  return text.substr(start, close - start);
}

namespace detail {

inline std::optional<int> au_key_to_id(const std::string& key) {
  std::string_view k = key;
  if (k.size() > 2 && (k[0] == 'A' || k[0] == 'a') && (k[1] == 'U' || k[1] == 'u')) k.remove_prefix(2);
  int id = 0;
  auto res = std::from_chars(k.data(), k.data() + k.size(), id);
  if (res.ec != std::errc() || res.ptr != k.data() + k.size()) return std::nullopt;
  return id;
}

}  // namespace detail

inline Parsed<StructuredAnswer> parse_response(std::string_view raw, const ResponseShape& shape,
                                               const AuVocabulary& vocab, const Provenance& provenance) {
  using nlohmann::json;
  auto block = first_fenced_block(raw);
  if (!block) return ParseError{ParseErrorKind::no_json, "no fenced block"};
  json doc = json::parse(*block, nullptr, false);
  if (doc.is_discarded()) return ParseError{ParseErrorKind::no_json, "fenced block is not valid JSON"};
  if (!doc.is_object()) return ParseError{ParseErrorKind::bad_schema, "top level is not an object"};

  auto allowed = [&](const std::string& key) {
    if (key == "expression") return shape.tasks.contains(TaskKind::Expression);
    if (key == "valence" || key == "arousal") return shape.tasks.contains(TaskKind::ValenceArousal);
    if (key == "aus") return shape.tasks.contains(TaskKind::ActionUnits);
    if (key == "analysis") return shape.analysis;
    return false;
  };
  for (const auto& [key, value] : doc.items()) {
    if (!allowed(key)) return ParseError{ParseErrorKind::bad_schema, "unexpected key '" + key + "'"};
  }
  auto missing = [&](const char* key) { return ParseError{ParseErrorKind::bad_schema, std::string("missing key '") + key + "'"}; };

  StructuredAnswer out;
  if (shape.tasks.contains(TaskKind::Expression)) {
    if (!doc.contains("expression")) return missing("expression");
    const json& v = doc["expression"];
    if (!(shape.nullable && v.is_null())) {
      if (!v.is_string()) return ParseError{ParseErrorKind::bad_schema, "expression is not a string"};
      auto e = parse_expression(v.get<std::string>());
      if (!e) return ParseError{ParseErrorKind::bad_schema, "unknown expression '" + v.get<std::string>() + "'"};
      out.labels.expression = Labeled<Expression>{*e, provenance};
    }
  }
  if (shape.tasks.contains(TaskKind::ValenceArousal)) {
    if (!doc.contains("valence")) return missing("valence");
    if (!doc.contains("arousal")) return missing("arousal");
    const json& v = doc["valence"];
    const json& a = doc["arousal"];
    if (!(shape.nullable && (v.is_null() || a.is_null()))) {
      if (!v.is_number() || !a.is_number())
        return ParseError{ParseErrorKind::bad_schema, "valence/arousal are not numbers"};
      VaAnnotation va{v.get<double>(), a.get<double>()};
      if (!in_unit_range(va.valence)) return ParseError{ParseErrorKind::range, "valence out of [-1,1]"};
      if (!in_unit_range(va.arousal)) return ParseError{ParseErrorKind::range, "arousal out of [-1,1]"};
      out.labels.va = Labeled<VaAnnotation>{va, provenance};
    }
  }
  if (shape.tasks.contains(TaskKind::ActionUnits)) {
    if (!doc.contains("aus")) return missing("aus");
    const json& v = doc["aus"];
    if (!(shape.nullable && v.is_null())) {
      if (!v.is_object()) return ParseError{ParseErrorKind::bad_schema, "aus is not an object"};
      AuAnnotation aus;
      for (const auto& [key, flag] : v.items()) {
        auto id = detail::au_key_to_id(key);
        if (!id) return ParseError{ParseErrorKind::bad_schema, "bad AU key '" + key + "'"};
        if (!vocab.contains(*id))
          return ParseError{ParseErrorKind::vocabulary, "AU" + std::to_string(*id) + " not in vocabulary"};
        bool on;
        if (flag.is_boolean())
          on = flag.get<bool>();
        else if (flag.is_number_integer() && (flag.get<int>() == 0 || flag.get<int>() == 1))
          on = flag.get<int>() == 1;
        else
          return ParseError{ParseErrorKind::bad_schema, "AU" + std::to_string(*id) + " flag is not boolean"};
        aus.occurrences[*id] = on;
      }
      if (shape.nullable) {
        for (int id : vocab.ids()) aus.occurrences.try_emplace(id, false);
      }
      for (int id : vocab.ids()) {
        if (!aus.occurrences.count(id))
          return ParseError{ParseErrorKind::bad_schema, "AU" + std::to_string(id) + " missing from aus"};
      }
      out.labels.aus = Labeled<AuAnnotation>{std::move(aus), provenance};
    }
  }
  if (shape.analysis) {
    if (!doc.contains("analysis")) return missing("analysis");
    const json& v = doc["analysis"];
    if (!v.is_string() || v.get<std::string>().empty())
      return ParseError{ParseErrorKind::bad_schema, "analysis must be a nonempty string"};
    out.analysis = v.get<std::string>();
  }
  return out;
}

inline Parsed<PartialAnnotation> parse_structured(std::string_view raw, TaskSet requested, const AuVocabulary& vocab,
                                                  const Provenance& provenance = Provenance::generated("")) {
  auto r = parse_response(raw, ResponseShape{requested, false, false}, vocab, provenance);
  if (auto* err = std::get_if<ParseError>(&r)) return *err;
  return std::get<StructuredAnswer>(std::move(r)).labels;
}

// Inverse of parse_response for the non-nullable shapes.
inline std::string render_structured(const PartialAnnotation& labels, const std::optional<std::string>& analysis = {}) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  if (labels.expression) doc["expression"] = std::string(to_string(labels.expression->value));
  if (labels.va) {
    doc["valence"] = labels.va->value.valence;
    doc["arousal"] = labels.va->value.arousal;
  }
  if (labels.aus) {
    nlohmann::ordered_json aus = nlohmann::ordered_json::object();
    for (const auto& [id, on] : labels.aus->value.occurrences) aus[std::to_string(id)] = on;
    doc["aus"] = std::move(aus);
  }
  if (analysis) doc["analysis"] = *analysis;
  return "```json\n" + doc.dump() + "\n```";
}

}  // namespace seke
