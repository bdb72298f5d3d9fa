#include <gtest/gtest.h>

#include "seke/response.hpp"
#include "test_support.hpp"

using namespace seke;

namespace {

const AuVocabulary kVocab = AuVocabulary::standard();

std::string dense_aus(std::initializer_list<int> on) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int id : kVocab.ids()) j[std::to_string(id)] = std::find(on.begin(), on.end(), id) != on.end();
  return j.dump();
}

ParseErrorKind error_kind(const Parsed<PartialAnnotation>& p) { return std::get<ParseError>(p).kind; }

}  // namespace

TEST(ParseStructured, AcceptsFencedAnswer) {
  std::string raw = "Sure.\n```json\n{\"expression\": \"sadness\", \"valence\": -0.4, \"arousal\": 0.2}\n```\nDone.";
  auto p = parse_structured(raw, {TaskKind::Expression, TaskKind::ValenceArousal}, kVocab);
  ASSERT_TRUE(parsed_ok(p));
  const auto& a = std::get<PartialAnnotation>(p);
  EXPECT_EQ(a.expression->value, Expression::sadness);
  EXPECT_EQ(a.va->value, (VaAnnotation{-0.4, 0.2}));
  EXPECT_FALSE(a.aus);
}

TEST(ParseStructured, SingleLineFenceAndAuPrefix) {
  std::string aus = dense_aus({6, 12});
  aus.replace(aus.find("\"6\""), 3, "\"AU6\"");
  auto p = parse_structured("```{\"aus\": " + aus + "}```", {TaskKind::ActionUnits}, kVocab);
  ASSERT_TRUE(parsed_ok(p));
  EXPECT_EQ(std::get<PartialAnnotation>(p).aus->value.active_ids(), (std::vector<int>{6, 12}));
}

TEST(ParseStructured, ErrorKinds) {
  const TaskSet ex{TaskKind::Expression};
  EXPECT_EQ(error_kind(parse_structured("happiness", ex, kVocab)), ParseErrorKind::no_json);
  EXPECT_EQ(error_kind(parse_structured("```json\n{oops\n```", ex, kVocab)), ParseErrorKind::no_json);
  EXPECT_EQ(error_kind(parse_structured("```json\n{\"expression\": \"happiness\", \"valence\": 0.1}\n```", ex, kVocab)),
            ParseErrorKind::bad_schema);
  EXPECT_EQ(error_kind(parse_structured("```json\n{\"expression\": \"glee\"}\n```", ex, kVocab)),
            ParseErrorKind::bad_schema);
  EXPECT_EQ(error_kind(parse_structured("```json\n{}\n```", ex, kVocab)), ParseErrorKind::bad_schema);
  EXPECT_EQ(error_kind(parse_structured("```json\n{\"valence\": 1.2, \"arousal\": 0}\n```", {TaskKind::ValenceArousal},
                                        kVocab)),
            ParseErrorKind::range);

  std::string aus = dense_aus({});
  aus.insert(1, "\"3\": true, ");
  EXPECT_EQ(error_kind(parse_structured("```json\n{\"aus\": " + aus + "}\n```", {TaskKind::ActionUnits}, kVocab)),
            ParseErrorKind::vocabulary);
  EXPECT_EQ(error_kind(parse_structured("```json\n{\"aus\": {\"12\": true}}\n```", {TaskKind::ActionUnits}, kVocab)),
            ParseErrorKind::bad_schema);
}

TEST(ParseResponse, SummaryNeedsAnalysis) {
  auto shape = *schema_shape("summary");
  std::string body = "{\"expression\": \"anger\", \"valence\": -0.5, \"arousal\": 0.6, \"aus\": " + dense_aus({4}) + "}";
  auto p = parse_response("```json\n" + body + "\n```", shape, kVocab, Provenance::generated("x"));
  ASSERT_FALSE(parsed_ok(p));
  EXPECT_EQ(std::get<ParseError>(p).kind, ParseErrorKind::bad_schema);
  body.insert(body.size() - 1, ", \"analysis\": \"brows lowered\"");
  p = parse_response("```json\n" + body + "\n```", shape, kVocab, Provenance::generated("x"));
  ASSERT_TRUE(parsed_ok(p));
  EXPECT_EQ(*std::get<StructuredAnswer>(p).analysis, "brows lowered");
}

TEST(ParseResponse, NormalizeShapeAcceptsNulls) {
  auto shape = *schema_shape("normalize");
  auto p = parse_response("```json\n{\"expression\": null, \"valence\": 0.3, \"arousal\": 0.1, \"aus\": {\"12\": true}}\n```",
                          shape, kVocab, Provenance::generated(""));
  ASSERT_TRUE(parsed_ok(p));
  const auto& a = std::get<StructuredAnswer>(p).labels;
  EXPECT_FALSE(a.expression);
  EXPECT_TRUE(a.va);
  EXPECT_EQ(a.aus->value.active_ids(), std::vector<int>{12});
  EXPECT_EQ(a.aus->value.occurrences.size(), kVocab.size());
}

TEST(SchemaIds, RegistryRoundTrip) {
  for (int mask = 1; mask < 8; ++mask) {
    TaskSet s;
    for (int b = 0; b < 3; ++b)
      if (mask & (1 << b)) s.insert(kAllTasks[static_cast<std::size_t>(b)]);
    auto shape = schema_shape(prior_schema_id(s));
    ASSERT_TRUE(shape);
    EXPECT_EQ(shape->tasks, s);
  }
  EXPECT_FALSE(is_registered_schema("prior:"));
  EXPECT_FALSE(is_registered_schema("prior:aus+aus"));
  EXPECT_FALSE(is_registered_schema("free"));
}

// Any annotation over any task subset survives render -> parse.
TEST(ParseStructured, RenderRoundTripProperty) {
  seke::RandomStream rng(99);
  for (int i = 0; i < 1000; ++i) {
    auto full = testing_support::random_complete(rng, kVocab);
    TaskSet s;
    for (TaskKind t : kAllTasks)
      if (rng.bernoulli(0.5)) s.insert(t);
    if (s.empty()) s.insert(TaskKind::Expression);
    auto labels = full.as_partial(Provenance::generated(""), s);
    auto p = parse_structured(render_structured(labels), s, kVocab);
    ASSERT_TRUE(parsed_ok(p)) << std::get<ParseError>(p).detail;
    EXPECT_EQ(std::get<PartialAnnotation>(p), labels);
  }
}
