#include <gtest/gtest.h>

#include "seke/simlab.hpp"

using namespace seke;

namespace {

const AuVocabulary kVocab = AuVocabulary::standard();
const Provenance kGen = Provenance::generated("");

SimConfig small_config() {
  SimConfig c;
  c.noise_grid = {0.0, 0.3};
  c.va_sigma_grid = {0.0, 0.2};
  c.records_per_cell = 150;
  c.workers = 2;
  return c;
}

// Direct simulation of the continue-with-probability-p chain.
double simulate_chain(double p, int n, int trials, std::uint64_t seed) {
  RandomStream rng(seed);
  long total = 0;
  for (int t = 0; t < trials; ++t) {
    int s = 2;
    while (s < n && rng.uniform() < p) ++s;
    total += s;
  }
  return static_cast<double>(total) / trials;
}

SampleSet rounds_of(std::vector<PartialAnnotation> rs, TaskSet targets) {
  SampleSet s;
  s.targets = targets;
  s.rounds = std::move(rs);
  return s;
}

PartialAnnotation expr_round(Expression e) { return {Labeled<Expression>{e, kGen}, std::nullopt, std::nullopt}; }

PartialAnnotation au_round(std::vector<int> ids) {
  return {std::nullopt, std::nullopt, Labeled<AuAnnotation>{AuAnnotation::from_active(kVocab, ids), kGen}};
}

}  // namespace

TEST(ClosedForm, KnownValues) {
  EXPECT_DOUBLE_EQ(expected_samples_closed_form(0.5, 5), 2.875);
  EXPECT_EQ(expected_samples_closed_form(0.0, 5), 2.0);
  EXPECT_EQ(expected_samples_closed_form(1.0, 5), 5.0);
  EXPECT_EQ(expected_samples_closed_form(0.7, 2), 2.0);
  for (double p : {0.1, 0.3, 0.6, 0.9})
    for (int n = 2; n <= 8; ++n)
      EXPECT_NEAR(expected_samples_closed_form(p, n), 2.0 + p * (1.0 - std::pow(p, n - 2)) / (1.0 - p), 1e-12);
  EXPECT_THROW(expected_samples_closed_form(1.5, 5), DomainError);
  EXPECT_THROW(expected_samples_closed_form(0.5, 1), DomainError);
}

TEST(ClosedForm, MatchesMonteCarlo) {
  for (double p : {0.5, 0.75}) EXPECT_NEAR(simulate_chain(p, 5, 200000, 3), expected_samples_closed_form(p, 5), 0.02);
}

TEST(VoteSummary, MajorityAndTies) {
  auto s = rounds_of({expr_round(Expression::anger), expr_round(Expression::fear)}, {TaskKind::Expression});
  EXPECT_EQ(vote_summary(s, kVocab, kGen).expression->value, Expression::fear);
  s.rounds.push_back(expr_round(Expression::anger));
  EXPECT_EQ(vote_summary(s, kVocab, kGen).expression->value, Expression::anger);

  auto a = rounds_of({au_round({6}), au_round({12}), au_round({6, 12})}, {TaskKind::ActionUnits});
  EXPECT_EQ(vote_summary(a, kVocab, kGen).aus->value.active_ids(), (std::vector<int>{6, 12}));
  auto b = rounds_of({au_round({6, 1}), au_round({12})}, {TaskKind::ActionUnits});
  EXPECT_EQ(vote_summary(b, kVocab, kGen).aus->value.active_ids(), (std::vector<int>{12}));
}

TEST(VoteSummary, AveragesVa) {
  SampleSet s;
  s.targets = {TaskKind::ValenceArousal};
  for (auto va : {VaAnnotation{0.2, -0.4}, VaAnnotation{0.4, 0.0}})
    s.rounds.push_back({std::nullopt, Labeled<VaAnnotation>{va, kGen}, std::nullopt});
  auto out = vote_summary(s, kVocab, kGen);
  EXPECT_NEAR(out.va->value.valence, 0.3, 1e-15);
  EXPECT_NEAR(out.va->value.arousal, -0.2, 1e-15);
  EXPECT_FALSE(out.expression);
}

TEST(RunCell, NoiselessCellIsExact) {
  SimConfig c;
  c.records_per_cell = 3000;
  auto cell = run_cell(c, 0.0, 0.0);
  ASSERT_EQ(cell.strategies.size(), 3u);
  EXPECT_EQ(cell.strategies[0].strategy, "uamc");
  EXPECT_EQ(cell.strategies[1].strategy, "fixed2");
  EXPECT_EQ(cell.strategies[2].strategy, "fixed5");
  for (const auto& s : cell.strategies) {
    EXPECT_EQ(s.expr_err, 0.0) << s.strategy;
    EXPECT_EQ(s.au_hamming, 0.0) << s.strategy;
    EXPECT_NEAR(s.va_abs_err, 0.0, 1e-12) << s.strategy;
    EXPECT_EQ(s.n_expr + s.n_au + s.n_va, 3000u);
  }
  EXPECT_NEAR(cell.stats("uamc").mean_S, 2.875, 0.08);
  EXPECT_EQ(cell.stats("fixed2").mean_S, 2.0);
  EXPECT_EQ(cell.stats("fixed5").mean_S, 5.0);
  EXPECT_EQ(cell.stats("uamc").mean_calls, cell.stats("uamc").mean_S);
}

TEST(RunCell, OracleSummarizerAddsOneCall) {
  SimConfig c;
  c.records_per_cell = 150;
  c.summarizer = Summarizer::oracle;
  auto cell = run_cell(c, 0.0, 0.0);
  for (const auto& s : cell.strategies) {
    EXPECT_EQ(s.expr_err, 0.0);
    EXPECT_DOUBLE_EQ(s.mean_calls, s.mean_S + 1.0);
  }
}

TEST(RunCell, NoiseRaisesError) {
  SimConfig c;
  c.records_per_cell = 600;
  auto clean = run_cell(c, 0.0, 0.1);
  auto noisy = run_cell(c, 0.3, 0.1);
  EXPECT_GT(noisy.stats("fixed2").expr_err, clean.stats("fixed2").expr_err);
  EXPECT_GT(noisy.stats("fixed2").au_hamming, 0.1);
  EXPECT_GT(noisy.stats("uamc").mean_S, clean.stats("uamc").mean_S);
  EXPECT_LT(noisy.stats("fixed5").au_hamming, noisy.stats("fixed2").au_hamming);
}

TEST(RunGrid, DeterministicAcrossRunsAndWorkers) {
  auto c = small_config();
  auto a = grid_to_csv(run_grid(c));
  c.workers = 1;
  auto b = grid_to_csv(run_grid(c));
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 4 * 3);
  EXPECT_EQ(a.substr(0, a.find('\n')), "theta,va_sigma,strategy,mean_S,mean_calls,expr_err,au_hamming,va_abs_err");
  c.seed = 8;
  EXPECT_NE(grid_to_csv(run_grid(c)), a);
}

TEST(RunGrid, GridOrder) {
  auto cells = run_grid(small_config());
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1].theta, 0.0);
  EXPECT_EQ(cells[1].va_sigma, 0.2);
  EXPECT_EQ(cells[2].theta, 0.3);
  EXPECT_EQ(cells[2].va_sigma, 0.0);
}

TEST(SimConfig, Validation) {
  auto c = small_config();
  c.records_per_cell = 99;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.noise_grid = {1.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.baselines = {0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.noise_grid.clear();
  EXPECT_THROW(run_grid(c), ConfigError);
}

TEST(Bootstrap, Intervals) {
  auto constant = bootstrap_mean(std::vector<double>(50, -0.25), 500, 1);
  EXPECT_EQ(constant.mean, -0.25);
  EXPECT_EQ(constant.lower, -0.25);
  EXPECT_EQ(constant.upper, -0.25);

  RandomStream rng(4);
  std::vector<double> d;
  for (int i = 0; i < 2000; ++i) d.push_back(rng.normal(1.0, 1.0));
  auto ci = bootstrap_mean(d, 2000, 9);
  EXPECT_LT(ci.lower, ci.mean);
  EXPECT_GT(ci.upper, ci.mean);
  // half-width near 1.96 / sqrt(2000)
  EXPECT_NEAR((ci.upper - ci.lower) / 2.0, 1.96 / std::sqrt(2000.0), 0.01);
  EXPECT_EQ(bootstrap_mean(d, 2000, 9).upper, ci.upper);
  EXPECT_THROW(bootstrap_mean({}, 10, 1), DomainError);
}

TEST(Paired, Differences) {
  std::vector<RecordOutcome> a{{TaskKind::Expression, 1.0, 2, 2}, {TaskKind::ActionUnits, 0.5, 3, 3}};
  std::vector<RecordOutcome> b{{TaskKind::Expression, 0.0, 5, 5}, {TaskKind::ActionUnits, 0.25, 5, 5}};
  EXPECT_EQ(paired_differences(a, b), (std::vector<double>{1.0, 0.25}));
  EXPECT_EQ(paired_differences(a, b, TaskKind::ActionUnits), (std::vector<double>{0.25}));
  EXPECT_EQ(paired_call_differences(a, b), (std::vector<double>{-3.0, -2.0}));
  b.pop_back();
  EXPECT_THROW(paired_differences(a, b), LengthMismatch);
}
