#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "json.hpp"

#include "cause_sieve/discover.hpp"
#include "cause_sieve/synth.hpp"

using namespace cause_sieve;

namespace {

ScoreRow row(CandidateSet s, double total) {
  ScoreRow r;
  r.set = std::move(s);
  r.total = total;
  return r;
}

Dataset table(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd v(y.size(), x.cols() + 1);
  v << y, x;
  std::vector<std::string> names{"Y"};
  for (Eigen::Index j = 1; j <= x.cols(); ++j) names.push_back("X" + std::to_string(j));
  return Dataset::from_matrix(v, names);
}

}  // namespace

TEST(Score, FormulaExamples) {
  const DiscoveryConfig cfg;
  const ScoreRow best = score_from_p_values({1}, 1.0, 0.0, 1.0, cfg);
  EXPECT_DOUBLE_EQ(best.total, 0.0);

  const ScoreRow r = score_from_p_values({1, 2}, std::exp(-2.0), 1e-15, std::exp(-1.0), cfg);
  EXPECT_NEAR(r.independence, -2.0, 1e-12);
  EXPECT_NEAR(r.distribution, -1.0, 1e-12);
  EXPECT_NEAR(r.total, -3.0, 1e-12);
}

TEST(Score, ClampingAndWeights) {
  DiscoveryConfig cfg;
  const double floor = std::log(1e-12);
  const ScoreRow r = score_from_p_values({1}, 0.0, 1.0, 1e-300, cfg);
  EXPECT_DOUBLE_EQ(r.independence, floor);
  EXPECT_DOUBLE_EQ(r.significance, floor);
  EXPECT_DOUBLE_EQ(r.distribution, floor);
  EXPECT_DOUBLE_EQ(r.total, 3.0 * floor);

  cfg.lambdas = {2.0, 0.5, 0.0};
  const ScoreRow w = score_from_p_values({1}, 0.1, 0.2, 0.3, cfg);
  EXPECT_NEAR(w.total, 2.0 * std::log(0.1) + 0.5 * std::log(0.8), 1e-12);

  cfg.significance_score = SignificanceScore::NegLogP;
  EXPECT_NEAR(score_from_p_values({1}, 0.1, 0.2, 0.3, cfg).significance, -std::log(0.2), 1e-12);
}

TEST(Score, ArgmaxTieBreak) {
  EXPECT_EQ(argmax_row({row({1, 2}, -1.0), row({3}, -1.0)}), 1u);
  EXPECT_EQ(argmax_row({row({2}, -1.0), row({1}, -1.0)}), 1u);
  EXPECT_EQ(argmax_row({row({1}, -5.0), row({2}, -1.0), row({1, 2}, -1.0)}), 1u);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(argmax_row({row({1}, ninf), row({2}, -100.0)}), 1u);
  EXPECT_THROW(argmax_row({}), Error);
}

TEST(Isd, Intersection) {
  EXPECT_EQ(intersect_all({CandidateSet{2, 3}}), (std::vector<int>{2, 3}));
  EXPECT_EQ(intersect_all({CandidateSet{1, 2}, CandidateSet{2, 3}}), (std::vector<int>{2}));
  EXPECT_EQ(intersect_all({CandidateSet{1}, CandidateSet{2}}), std::vector<int>{});
  EXPECT_EQ(intersect_all({}), std::vector<int>{});
}

TEST(Metrics, Examples) {
  std::vector<std::vector<int>> est(8, {1, 2});
  est.push_back({1, 4, 5});
  est.push_back({1, 4, 5});
  const Metrics m = metrics({1, 2, 3}, est);
  EXPECT_NEAR(m.correct_causes_pct, 60.0, 1e-12);
  EXPECT_NEAR(m.no_false_positives_pct, 80.0, 1e-12);

  const Metrics all = metrics({1, 2, 3}, {{3, 2, 1}, {1, 2, 3}});
  EXPECT_DOUBLE_EQ(all.correct_causes_pct, 100.0);
  EXPECT_DOUBLE_EQ(all.no_false_positives_pct, 100.0);

  const Metrics none = metrics({1, 2, 3}, {{}, {}});
  EXPECT_DOUBLE_EQ(none.correct_causes_pct, 0.0);
  EXPECT_DOUBLE_EQ(none.no_false_positives_pct, 100.0);

  EXPECT_THROW(metrics({1}, {}), Error);
}

TEST(Plausibility, LinearChainSubsetIsPlausible) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const GeneratedDataset g = gen_linear_chain(s, 500, ChainNoise::Gaussian);
    hits += check_plausibility(g.data, {2}, FunctionClass::linear()).plausible;
  }
  EXPECT_GE(hits, 17);
}

TEST(Plausibility, SupportViolationIsRecordedNotThrown) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.3, 3.0);
  Eigen::VectorXd y(60);
  Eigen::MatrixXd x(60, 1);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = u(gen);
    y[i] = u(gen);
  }
  y[0] = 0.3;
  const Dataset d = table(y, x);
  const auto pareto = FunctionClass::cpcm(ParametricFamily::Pareto);
  const CandidateEvaluation e = evaluate_candidate(d, {1}, pareto, {});
  EXPECT_FALSE(e.verdict.plausible);
  ASSERT_TRUE(e.verdict.reason.has_value());
  EXPECT_EQ(*e.verdict.reason, Errc::DomainViolation);
  EXPECT_EQ(e.row.total, -std::numeric_limits<double>::infinity());
  try {
    discover(d, pareto);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::DomainViolation);
  }
}

TEST(Plausibility, VerdictMatchesPValues) {
  const GeneratedDataset g = gen_linear_chain(3, 300, ChainNoise::Uniform);
  DiscoveryConfig cfg;
  cfg.alpha = 0.2;
  for (const auto& s : enumerate_candidates(2, 12)) {
    const PlausibilityVerdict v = check_plausibility(g.data, s, FunctionClass::linear(), cfg);
    EXPECT_EQ(v.independent, v.p_indep > cfg.alpha);
    EXPECT_EQ(v.significant, v.p_sig_max < cfg.alpha);
    EXPECT_TRUE(v.uniform);
    EXPECT_DOUBLE_EQ(v.p_dist, 1.0);
    EXPECT_EQ(v.plausible, v.independent && v.significant);
  }
}

TEST(Discover, ExactlyOnePlausibleSet) {
  const GeneratedDataset g = gen_linear_chain(5, 400, ChainNoise::Uniform);
  const DiscoveryResult r = isd(g.data, FunctionClass::linear());
  if (r.plausible_sets.size() == 1) EXPECT_EQ(r.isd_estimate, r.plausible_sets.front().members());
  EXPECT_EQ(r.isd_estimate, intersect_all(r.plausible_sets));
  EXPECT_EQ(r.no_plausible_set, r.plausible_sets.empty());
  EXPECT_EQ(r.score_table.size(), 3u);
  EXPECT_EQ(r.score_estimate, r.score_table[argmax_row(r.score_table)].set);
}

TEST(Discover, TooManyCovariates) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> d;
  Eigen::MatrixXd x(40, 4);
  Eigen::VectorXd y(40);
  for (auto& v : x.reshaped()) v = d(gen);
  for (auto& v : y) v = d(gen);
  DiscoveryConfig cfg;
  cfg.max_p = 3;
  try {
    discover(table(y, x), FunctionClass::linear(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooManyCovariates);
  }
}

TEST(Discover, IndependentOfThreadCount) {
  const GeneratedDataset g = gen_benchmark2(4, 150);
  DiscoveryConfig one;
  one.threads = 1;
  one.seed = 21;
  DiscoveryConfig many = one;
  many.threads = 4;
  const std::string a = to_json(discover(g.data, FunctionClass::additive(), one));
  const std::string b = to_json(discover(g.data, FunctionClass::additive(), many));
  EXPECT_EQ(a, b);
}

TEST(Discover, ScorePrefersTrueParentInBenchmark1) {
  int wins = 0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const GeneratedDataset g = gen_benchmark1(s, 500);
    DiscoveryConfig cfg;
    cfg.seed = s;
    wins += score_set(g.data, {1}, FunctionClass::additive(), cfg).total >
            score_set(g.data, {2}, FunctionClass::additive(), cfg).total;
  }
  EXPECT_GE(wins, 5);
}

TEST(Json, KeyOrderAndNullTotals) {
  DiscoveryResult r;
  r.isd_estimate = {1};
  r.plausible_sets = {CandidateSet{1}};
  r.score_table = {row({1}, -0.5), row({2}, -std::numeric_limits<double>::infinity())};
  r.score_estimate = CandidateSet{1};
  PlausibilityVerdict bad;
  bad.set = CandidateSet{2};
  bad.reason = Errc::DomainViolation;
  r.verdicts = {PlausibilityVerdict{}, bad};

  const auto j = nlohmann::ordered_json::parse(to_json(r));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"isd_estimate", "plausible_sets", "score_table", "score_estimate", "config",
                                            "seed", "diagnostics"}));
  EXPECT_TRUE(j["score_table"][1]["total"].is_null());
  EXPECT_DOUBLE_EQ(j["score_table"][0]["total"].get<double>(), -0.5);
  EXPECT_EQ(j["config"]["class"], "additive");
  EXPECT_EQ(j["diagnostics"]["unevaluated"][0]["reason"], "DomainViolation");
  EXPECT_EQ(j["diagnostics"]["no_plausible_set"], false);
}

TEST(EmptyParent, GaussianNullIsAccepted) {
  int accepted = 0;
  for (int s = 0; s < 40; ++s) {
    std::mt19937_64 gen(static_cast<std::uint64_t>(s));
    std::normal_distribution<double> d;
    Eigen::VectorXd y(500);
    for (auto& v : y) v = d(gen);
    accepted += empty_parent_test(y, ParametricFamily::Gaussian).p_value > 0.05;
  }
  EXPECT_GE(accepted, 36);
}

TEST(EmptyParent, ParetoIsNotGaussian) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd y(500);
  for (auto& v : y) v = std::pow(1.0 - u(gen), -0.5);
  EXPECT_LT(empty_parent_test(y, ParametricFamily::Gaussian).p_value, 0.01);
  EXPECT_GT(empty_parent_test(y, ParametricFamily::Pareto).p_value, 0.01);
  y[3] = 0.9;
  try {
    empty_parent_test(y, ParametricFamily::Pareto);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DomainViolation);
  }
}
