#pragma once
// CSV manifest ingestion.
//
// Header: record_id,image_ref,subject_id,source_dataset,expression,valence,
// arousal,au_<id>...  Empty cells mean "not annotated". AU cells hold 0/1
// occurrence flags or 0-5 intensities depending on the manifest mode.

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "seke/affect.hpp"
#include "seke/error.hpp"

namespace seke {

enum class AuColumnMode { occurrence, intensity };

inline std::optional<AuColumnMode> parse_au_column_mode(std::string_view s) {
  if (s == "occurrence") return AuColumnMode::occurrence;
  if (s == "intensity") return AuColumnMode::intensity;
  return std::nullopt;
}

struct ManifestRow {
  std::size_t line = 0;  // physical line where the row starts
  EmotionRecord record;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

namespace detail {

// One RFC 4180 record; quoted fields may span lines. Returns false at EOF.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline std::vector<ManifestRow> read_manifest(std::istream& in, const AuVocabulary& vocab,
                                              AuColumnMode mode = AuColumnMode::occurrence) {
  std::vector<std::string> header;
  std::size_t line = 1;
  if (!detail::read_csv_record(in, header, line)) throw SchemaError(1, "manifest is empty");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::map<std::string, std::size_t> col;
  std::vector<std::pair<int, std::size_t>> au_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = detail::trim(header[i]);
    if (name.rfind("au_", 0) == 0) {
      auto id = detail::parse_int(name.substr(3));
      if (!id || *id <= 0) throw SchemaError(1, "bad AU column name '" + name + "'");
      au_cols.emplace_back(*id, i);
    } else {
      col[name] = i;
    }
  }
  for (const char* required : {"record_id", "image_ref", "subject_id", "source_dataset", "expression", "valence",
                               "arousal"}) {
    if (!col.count(required)) throw SchemaError(1, std::string("missing column '") + required + "'");
  }

  std::vector<ManifestRow> rows;
  std::set<std::string> seen;
  std::vector<std::string> cells;
  while (true) {
    std::size_t start = line;
    if (!detail::read_csv_record(in, cells, line)) break;
    if (cells.size() == 1 && detail::trim(cells[0]).empty()) continue;

    ManifestRow row;
    row.line = start;
    if (cells.size() != header.size()) {
      row.violations.push_back({"csv_columns", "expected " + std::to_string(header.size()) + " cells, got " +
                                                   std::to_string(cells.size())});
      cells.resize(header.size());
    }
    auto cell = [&](const char* name) { return detail::trim(cells[col.at(name)]); };

    EmotionRecord& r = row.record;
    r.record_id = cell("record_id");
    r.image_ref = cell("image_ref");
    if (auto s = cell("subject_id"); !s.empty()) r.subject_id = s;
    const std::string dataset = cell("source_dataset");
    const Provenance prov = Provenance::manual(dataset);

    if (auto e = cell("expression"); !e.empty()) {
      if (auto parsed = parse_expression(e))
        r.annotation.expression = Labeled<Expression>{*parsed, prov};
      else
        row.violations.push_back({"expression_unknown", "unknown expression '" + e + "'"});
    }

    const std::string v = cell("valence"), a = cell("arousal");
    if (!v.empty() || !a.empty()) {
      auto pv = detail::parse_double(v);
      auto pa = detail::parse_double(a);
      if (v.empty() || a.empty())
        row.violations.push_back({"va_incomplete", "valence and arousal must both be present"});
      else if (!pv || !pa)
        row.violations.push_back({"va_number", "valence/arousal are not numbers"});
      else
        r.annotation.va = Labeled<VaAnnotation>{{*pv, *pa}, prov};
    }

    AuAnnotation aus;
    bool any_au = false;
    for (const auto& [id, idx] : au_cols) {
      const std::string s = detail::trim(cells[idx]);
      if (s.empty()) continue;
      any_au = true;
      auto value = detail::parse_int(s);
      if (!value) {
        row.violations.push_back({"au_value", "AU" + std::to_string(id) + " cell '" + s + "' is not an integer"});
        continue;
      }
      if (mode == AuColumnMode::occurrence) {
        if (*value != 0 && *value != 1) {
          row.violations.push_back({"au_value", "AU" + std::to_string(id) + " occurrence must be 0 or 1"});
          continue;
        }
        aus.occurrences[id] = *value == 1;
      } else {
        if (*value < 0 || *value > 5) {
          row.violations.push_back({"au_value", "AU" + std::to_string(id) + " intensity must be in 0..5"});
          continue;
        }
        aus.occurrences[id] = intensity_to_occurrence(*value);
      }
    }
    if (any_au) r.annotation.aus = Labeled<AuAnnotation>{std::move(aus), prov};

    for (auto& viol : validate_record(r, vocab)) row.violations.push_back(std::move(viol));
    if (!r.record_id.empty() && !seen.insert(r.record_id).second)
      row.violations.push_back({"record_id_duplicate", "duplicate record_id '" + r.record_id + "'"});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<ManifestRow> read_manifest_file(const std::string& path, const AuVocabulary& vocab,
                                                   AuColumnMode mode = AuColumnMode::occurrence) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  return read_manifest(in, vocab, mode);
}

}  // namespace seke
