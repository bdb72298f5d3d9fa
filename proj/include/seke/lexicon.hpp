#pragma once
// Expression lexicon with synonyms, plus the label-token scanner used to keep
// rewrite questions free of answer content.

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seke/affect.hpp"

namespace seke {

struct LexiconEntry {
  std::string_view word;
  Expression category;
};

inline const std::vector<LexiconEntry>& expression_lexicon() {
  static const std::vector<LexiconEntry> lexicon = {
      {"neutral", Expression::neutral},          {"expressionless", Expression::neutral},
      {"impassive", Expression::neutral},        {"happiness", Expression::happiness},
      {"happy", Expression::happiness},          {"joy", Expression::happiness},
      {"joyful", Expression::happiness},         {"joyous", Expression::happiness},
      {"cheerful", Expression::happiness},       {"delighted", Expression::happiness},
      {"glad", Expression::happiness},           {"smiling", Expression::happiness},
      {"sadness", Expression::sadness},          {"sad", Expression::sadness},
      {"unhappy", Expression::sadness},          {"sorrow", Expression::sadness},
      {"sorrowful", Expression::sadness},        {"melancholy", Expression::sadness},
      {"grief", Expression::sadness},            {"depressed", Expression::sadness},
      {"surprise", Expression::surprise},        {"surprised", Expression::surprise},
      {"astonished", Expression::surprise},      {"astonishment", Expression::surprise},
      {"amazed", Expression::surprise},          {"amazement", Expression::surprise},
      {"shocked", Expression::surprise},         {"startled", Expression::surprise},
      {"fear", Expression::fear},                {"fearful", Expression::fear},
      {"afraid", Expression::fear},              {"scared", Expression::fear},
      {"frightened", Expression::fear},          {"terrified", Expression::fear},
      {"terror", Expression::fear},              {"disgust", Expression::disgust},
      {"disgusted", Expression::disgust},        {"revulsion", Expression::disgust},
      {"repulsed", Expression::disgust},         {"anger", Expression::anger},
      {"angry", Expression::anger},              {"furious", Expression::anger},
      {"rage", Expression::anger},               {"enraged", Expression::anger},
      {"irritated", Expression::anger},          {"contempt", Expression::contempt},
      {"contemptuous", Expression::contempt},    {"disdain", Expression::contempt},
      {"disdainful", Expression::contempt},      {"scorn", Expression::contempt},
      {"scornful", Expression::contempt},
  };
  return lexicon;
}

inline std::optional<Expression> lookup_expression_word(std::string_view lower_word) {
  for (const auto& e : expression_lexicon())
    if (e.word == lower_word) return e.category;
  return std::nullopt;
}

// Lowercase alphabetic words with their byte offsets.
inline std::vector<std::pair<std::size_t, std::string>> alpha_words(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    out.emplace_back(i, to_lower(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

// Every label token found in text: expression words, AU<digits>, decimals.
inline std::vector<std::string> find_label_tokens(std::string_view text) {
  std::vector<std::string> found;
  for (const auto& [pos, word] : alpha_words(text)) {
    if (lookup_expression_word(word)) found.push_back(word);
  }
  static const std::regex au_re(R"(\b[Aa][Uu]\s*\d+)");
  static const std::regex decimal_re(R"([-+]?\d*\.\d+)");
  const std::string s(text);
  for (const std::regex* re : {&au_re, &decimal_re}) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), *re); it != std::sregex_iterator(); ++it)
      found.push_back(it->str());
  }
  return found;
}

inline bool contains_label_token(std::string_view text) { return !find_label_tokens(text).empty(); }

}  // namespace seke
