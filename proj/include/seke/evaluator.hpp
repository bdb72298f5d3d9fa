#pragma once
// Benchmark scoring. Free-text model outputs are normalized into the three
// descriptions by rules (optionally with an annotator pass for whatever the
// rules miss) and scored with expression accuracy, per-AU positive-class F1
// with its unweighted macro mean, and valence/arousal MAE.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seke/affect.hpp"
#include "seke/annotator.hpp"
#include "seke/dataset.hpp"
#include "seke/error.hpp"
#include "seke/lexicon.hpp"
#include "seke/prompt.hpp"

namespace seke {

namespace detail {

inline std::optional<Expression> extract_expression(std::string_view text) {
  const auto words = alpha_words(text);
  auto negated = [&](std::size_t i) {
    return i > 0 && (words[i - 1].second == "not" || words[i - 1].second == "no" || words[i - 1].second == "without");
  };
  // "expression: X" / "emotion is X": the last labeled mention wins
  std::optional<Expression> labeled;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i].second;
    if (w != "expression" && w != "emotion") continue;
    for (std::size_t k = i + 1; k < words.size() && k <= i + 3; ++k) {
      if (auto e = lookup_expression_word(words[k].second); e && !negated(k)) {
        labeled = e;
        break;
      }
    }
  }
  if (labeled) return labeled;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (auto e = lookup_expression_word(words[i].second); e && !negated(i)) return e;
  }
  return std::nullopt;
}

inline std::optional<VaAnnotation> extract_va(const std::string& text) {
  static const std::regex pair_re(
      R"(valence(?:\s*[-/]\s*|\s+and\s+)arousal[^0-9+\-.]{0,30}?([-+]?\d*\.?\d+)\s*(?:,|and|/)\s*([-+]?\d*\.?\d+))",
      std::regex::icase);
  static const std::regex valence_re(R"(valence[^0-9+\-.]{0,20}?([-+]?\d*\.?\d+))", std::regex::icase);
  static const std::regex arousal_re(R"(arousal[^0-9+\-.]{0,20}?([-+]?\d*\.?\d+))", std::regex::icase);

  auto number = [](const std::string& s) -> std::optional<double> {
    try {
      double v = std::stod(s);
      return in_unit_range(v) ? std::optional<double>(v) : std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  auto last = [&](const std::regex& re) -> std::optional<double> {
    std::optional<double> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it)
      if (auto v = number((*it)[1].str())) out = v;
    return out;
  };

  std::optional<VaAnnotation> pair;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pair_re); it != std::sregex_iterator(); ++it) {
    auto v = number((*it)[1].str());
    auto a = number((*it)[2].str());
    if (v && a) pair = VaAnnotation{*v, *a};
  }
  // "valence and arousal: x, y" would otherwise read x for both
  if (pair) return pair;
  auto v = last(valence_re);
  auto a = last(arousal_re);
  if (v && a) return VaAnnotation{*v, *a};
  return std::nullopt;
}

inline std::optional<AuAnnotation> extract_aus(const std::string& text, const AuVocabulary& vocab) {
  static const std::regex au_re(R"(\bAU\s*(\d+))", std::regex::icase);
  std::vector<int> active;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), au_re); it != std::sregex_iterator(); ++it) {
    int id = 0;
    try {
      id = std::stoi((*it)[1].str());
    } catch (const std::exception&) {
      continue;
    }
    if (vocab.contains(id)) active.push_back(id);
  }
  if (active.empty()) return std::nullopt;
  return AuAnnotation::from_active(vocab, active);
}

}  // namespace detail

// Rule-based extraction; nullopt means Unparseable.
inline std::optional<PartialAnnotation> normalize_output(std::string_view text, const AuVocabulary& vocab) {
  const std::string s(text);
  const Provenance prov = Provenance::generated("");
  PartialAnnotation out;
  if (auto e = detail::extract_expression(s)) out.expression = Labeled<Expression>{*e, prov};
  if (auto va = detail::extract_va(s)) out.va = Labeled<VaAnnotation>{*va, prov};
  if (auto aus = detail::extract_aus(s, vocab)) out.aus = Labeled<AuAnnotation>{*aus, prov};
  if (out.empty()) return std::nullopt;
  return out;
}

// Rules first; descriptions the rules could not find are requested from the
// annotator in the universal template.
inline std::optional<PartialAnnotation> normalize_output_assisted(std::string_view text, const AuVocabulary& vocab,
                                                                  Annotator& annotator) {
  auto rules = normalize_output(text, vocab);
  if (rules && rules->complete()) return rules;
  auto ask = ask_until_parsed(annotator, build_normalize_prompt(text, vocab), "", DecodingParams{0.0, 512, 1, 0}, 1);
  if (!ask.response.ok()) return rules;
  PartialAnnotation merged = rules.value_or(PartialAnnotation{});
  const PartialAnnotation& llm = *ask.response.parsed;
  if (!merged.expression) merged.expression = llm.expression;
  if (!merged.va) merged.va = llm.va;
  if (!merged.aus) merged.aus = llm.aus;
  if (merged.empty()) return std::nullopt;
  return merged;
}

inline double f1_positive(std::span<const bool> preds, std::span<const bool> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch("f1_positive: prediction and gold lengths differ");
  if (preds.empty()) throw LengthMismatch("f1_positive: empty input");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && golds[i]) ++tp;
    if (preds[i] && !golds[i]) ++fp;
    if (!preds[i] && golds[i]) ++fn;
  }
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

inline double mae(std::span<const double> preds, std::span<const double> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch("mae: prediction and gold lengths differ");
  if (preds.empty()) throw LengthMismatch("mae: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(preds[i] - golds[i]);
  return sum / static_cast<double>(preds.size());
}

inline double rmse(std::span<const double> preds, std::span<const double> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch("rmse: prediction and gold lengths differ");
  if (preds.empty()) throw LengthMismatch("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += (preds[i] - golds[i]) * (preds[i] - golds[i]);
  return std::sqrt(sum / static_cast<double>(preds.size()));
}

// nullopt predictions (unparseable) count as wrong.
inline double expression_accuracy(std::span<const std::optional<Expression>> preds, std::span<const Expression> golds) {
  if (preds.size() != golds.size()) throw LengthMismatch("expression_accuracy: prediction and gold lengths differ");
  if (golds.empty()) throw LengthMismatch("expression_accuracy: empty gold set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i)
    if (preds[i] && *preds[i] == golds[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

struct Prediction {
  std::string record_id;
  std::optional<std::string> output_text;
  std::optional<PartialAnnotation> labels;
};

inline std::vector<Prediction> read_predictions(const std::string& path) {
  std::vector<Prediction> out;
  for_each_jsonl_line(path, [&](std::size_t n, const std::string& line) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError(n, "not a JSON object");
    try {
      Prediction p;
      p.record_id = j.at("record_id").get<std::string>();
      if (j.contains("labels") && !j["labels"].is_null()) p.labels = labels_from_json(j["labels"], false);
      if (j.contains("output_text") && !j["output_text"].is_null()) p.output_text = j["output_text"].get<std::string>();
      if (!p.labels && !p.output_text) throw std::invalid_argument("needs output_text or labels");
      out.push_back(std::move(p));
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(n, e.what());
    }
  });
  return out;
}

struct EvalOptions {
  std::optional<std::vector<int>> au_subset;  // evaluated AUs; defaults to the vocabulary
  double va_tolerance = 0.2;
  std::string method = "model";
  Annotator* llm_normalizer = nullptr;
};

struct EvalReport {
  std::optional<double> expression_accuracy;
  std::map<int, double> au_f1;
  std::optional<double> au_f1_macro;
  std::optional<double> valence_mae;
  std::optional<double> arousal_mae;
  std::optional<double> valence_rmse;
  std::optional<double> arousal_rmse;
  std::optional<double> va_within_tolerance;  // both errors <= tolerance
  std::size_t n_scored = 0;
  std::size_t n_unparseable = 0;
  std::size_t n_expression = 0;
  std::size_t n_au = 0;
  std::size_t n_va = 0;
};

inline EvalReport score(const std::vector<Prediction>& preds, const std::vector<GoldRecord>& golds,
                        const AuVocabulary& vocab, const EvalOptions& options = {}) {
  std::map<std::string, const GoldRecord*> gold_by_id;
  for (const auto& g : golds) gold_by_id[g.record_id] = &g;
  std::set<std::string> pred_ids;
  std::vector<std::string> unmatched;
  for (const auto& p : preds) {
    pred_ids.insert(p.record_id);
    if (!gold_by_id.count(p.record_id)) unmatched.push_back(p.record_id);
  }
  for (const auto& g : golds)
    if (!pred_ids.count(g.record_id)) unmatched.push_back(g.record_id);
  if (!unmatched.empty()) throw AlignmentError(std::move(unmatched));

  const std::vector<int> aus = options.au_subset.value_or(vocab.ids());
  EvalReport report;
  std::vector<std::optional<Expression>> expr_pred;
  std::vector<Expression> expr_gold;
  std::map<int, std::vector<bool>> au_pred, au_gold;
  std::vector<double> v_pred, v_gold, a_pred, a_gold;
  std::size_t within = 0;

  for (const auto& p : preds) {
    const GoldRecord& gold = *gold_by_id.at(p.record_id);
    std::optional<PartialAnnotation> labels;
    if (p.labels)
      labels = p.labels->empty() ? std::nullopt : p.labels;
    else if (options.llm_normalizer)
      labels = normalize_output_assisted(*p.output_text, vocab, *options.llm_normalizer);
    else
      labels = normalize_output(*p.output_text, vocab);

    (labels ? report.n_scored : report.n_unparseable) += 1;

    if (gold.labels.expression) {
      expr_gold.push_back(gold.labels.expression->value);
      expr_pred.push_back(labels && labels->expression ? std::optional(labels->expression->value) : std::nullopt);
    }
    if (gold.labels.aus) {
      for (int id : aus) {
        au_gold[id].push_back(gold.labels.aus->value.active(id));
        au_pred[id].push_back(labels && labels->aus && labels->aus->value.active(id));
      }
      ++report.n_au;
    }
    if (gold.labels.va && labels && labels->va) {
      v_pred.push_back(labels->va->value.valence);
      v_gold.push_back(gold.labels.va->value.valence);
      a_pred.push_back(labels->va->value.arousal);
      a_gold.push_back(gold.labels.va->value.arousal);
      if (std::abs(v_pred.back() - v_gold.back()) <= options.va_tolerance &&
          std::abs(a_pred.back() - a_gold.back()) <= options.va_tolerance)
        ++within;
    }
  }

  report.n_expression = expr_gold.size();
  if (!expr_gold.empty()) report.expression_accuracy = expression_accuracy(expr_pred, expr_gold);
  if (report.n_au > 0) {
    double sum = 0.0;
    for (int id : aus) {
      const auto& pv = au_pred[id];
      const auto& gv = au_gold[id];
      // std::vector<bool> has no contiguous storage
      std::unique_ptr<bool[]> pb(new bool[pv.size()]), gb(new bool[gv.size()]);
      std::copy(pv.begin(), pv.end(), pb.get());
      std::copy(gv.begin(), gv.end(), gb.get());
      double f1 = f1_positive(std::span<const bool>(pb.get(), pv.size()), std::span<const bool>(gb.get(), gv.size()));
      report.au_f1[id] = f1;
      sum += f1;
    }
    report.au_f1_macro = sum / static_cast<double>(aus.size());
  }
  report.n_va = v_gold.size();
  if (!v_gold.empty()) {
    report.valence_mae = mae(v_pred, v_gold);
    report.arousal_mae = mae(a_pred, a_gold);
    report.valence_rmse = rmse(v_pred, v_gold);
    report.arousal_rmse = rmse(a_pred, a_gold);
    report.va_within_tolerance = static_cast<double>(within) / static_cast<double>(v_gold.size());
  }
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r, const EvalOptions& options = {}) {
  using oj = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? oj(*v) : oj(nullptr); };
  oj j;
  j["method"] = options.method;
  j["expression_accuracy"] = opt(r.expression_accuracy);
  oj f1 = oj::object();
  for (const auto& [id, v] : r.au_f1) f1["AU" + std::to_string(id)] = v;
  j["au_f1"] = std::move(f1);
  j["au_f1_macro"] = opt(r.au_f1_macro);
  j["valence_mae"] = opt(r.valence_mae);
  j["arousal_mae"] = opt(r.arousal_mae);
  j["valence_rmse"] = opt(r.valence_rmse);
  j["arousal_rmse"] = opt(r.arousal_rmse);
  j["va_tolerance"] = options.va_tolerance;
  j["va_within_tolerance"] = opt(r.va_within_tolerance);
  j["n_scored"] = r.n_scored;
  j["n_unparseable"] = r.n_unparseable;
  j["n_expression"] = r.n_expression;
  j["n_au"] = r.n_au;
  j["n_va"] = r.n_va;
  return j;
}

// Column layout: method, Acc, one F1 column per AU, All, valence MAE, arousal
// MAE. Accuracy and F1 are percentages.
inline std::string report_to_csv(const EvalReport& r, const AuVocabulary& vocab, const EvalOptions& options = {}) {
  const std::vector<int> aus = options.au_subset.value_or(vocab.ids());
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
    return std::string(buf);
  };
  auto fixed = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return std::string(buf);
  };
  std::string header = "method,expression_acc";
  std::string row = options.method + "," + pct(r.expression_accuracy);
  for (int id : aus) {
    header += ",AU" + std::to_string(id);
    auto it = r.au_f1.find(id);
    row += "," + pct(it == r.au_f1.end() ? std::nullopt : std::optional<double>(it->second));
  }
  header += ",All,valence_mae,arousal_mae\n";
  row += "," + pct(r.au_f1_macro) + "," + fixed(r.valence_mae) + "," + fixed(r.arousal_mae) + "\n";
  return header + row;
}

}  // namespace seke
