#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "cause_sieve/csv.hpp"
#include "cause_sieve/model.hpp"

using namespace cause_sieve;

namespace {

// Average rank by brute-force counting.
Eigen::VectorXd rank_oracle(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double below = 0;
    double equal = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      below += x[j] < x[i];
      equal += x[j] == x[i];
    }
    const double avg_rank = below + (equal + 1.0) / 2.0;
    out[i] = (avg_rank - 0.5) / static_cast<double>(n);
  }
  return out;
}

RawTable table(std::vector<std::string> header, std::vector<std::vector<double>> rows) {
  return RawTable{std::move(header), std::move(rows)};
}

RawTable three_column(int n) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < n; ++i) rows.push_back({std::sin(i * 0.1), static_cast<double>(i), std::cos(i * 0.37)});
  return table({"A", "Y", "B"}, rows);
}

Errc error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

}  // namespace

TEST(PitRescale, SmallExamples) {
  const Eigen::VectorXd a = pit_rescale(Eigen::Vector3d(3.0, 1.0, 2.0));
  EXPECT_DOUBLE_EQ(a[0], 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(a[2], 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(pit_rescale(Eigen::VectorXd::Constant(1, 7.0))[0], 0.5);
  const Eigen::VectorXd tie = pit_rescale(Eigen::Vector2d(1.0, 1.0));
  EXPECT_DOUBLE_EQ(tie[0], 0.5);
  EXPECT_DOUBLE_EQ(tie[1], 0.5);
}

TEST(PitRescale, MatchesCountingOracleWithTies) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int> d(0, 9);
  Eigen::VectorXd x(200);
  for (auto& v : x) v = d(gen);
  const Eigen::VectorXd got = pit_rescale(x);
  const Eigen::VectorXd want = rank_oracle(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
  EXPECT_GT(got.minCoeff(), 0.0);
  EXPECT_LT(got.maxCoeff(), 1.0);
}

TEST(PitRescale, InvariantUnderIncreasingTransform) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d;
  Eigen::VectorXd x(300);
  for (auto& v : x) v = d(gen);
  const Eigen::VectorXd y = x.unaryExpr([](double v) { return std::exp(3.0 * v) + 2.0; });
  EXPECT_EQ(pit_rescale(x), pit_rescale(y));
}

TEST(PitRescale, RejectsNonFinite) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  x[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(pit_rescale(x), Error);
}

TEST(EnumerateCandidates, Order) {
  const auto two = enumerate_candidates(2, 12);
  ASSERT_EQ(two.size(), 3u);
  EXPECT_EQ(two[0], CandidateSet({1}));
  EXPECT_EQ(two[1], CandidateSet({2}));
  EXPECT_EQ(two[2], CandidateSet({1, 2}));

  const auto three = enumerate_candidates(3, 12);
  ASSERT_EQ(three.size(), 7u);
  EXPECT_EQ(three.front(), CandidateSet({1}));
  EXPECT_EQ(three.back(), CandidateSet({1, 2, 3}));
}

TEST(EnumerateCandidates, EveryNonEmptySubsetOnceInOrder) {
  for (int p = 1; p <= 8; ++p) {
    const auto sets = enumerate_candidates(p, 12);
    ASSERT_EQ(sets.size(), (std::size_t{1} << p) - 1);
    std::vector<bool> seen(std::size_t{1} << p, false);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      unsigned mask = 0;
      for (int m : sets[i]) mask |= 1u << (m - 1);
      EXPECT_FALSE(seen[mask]);
      seen[mask] = true;
      if (i > 0) EXPECT_TRUE(sets[i - 1] < sets[i]);
    }
  }
}

TEST(EnumerateCandidates, Cap) {
  EXPECT_EQ(error_code_of([] { enumerate_candidates(13, 12); }), Errc::TooManyCovariates);
}

TEST(CandidateSet, SortsAndDeduplicates) {
  const CandidateSet s({3, 1, 3});
  EXPECT_EQ(s.members(), (std::vector<int>{1, 3}));
  EXPECT_TRUE(s.contains(3));
  EXPECT_FALSE(s.contains(2));
  EXPECT_EQ(s.to_string(), "{1,3}");
  EXPECT_THROW(CandidateSet(std::vector<int>{}), Error);
  EXPECT_THROW(CandidateSet({0}), Error);
}

TEST(FunctionClass, ParseRoundTrip) {
  for (const char* name : {"linear", "additive", "location-scale", "cpcm:gaussian", "cpcm:gamma", "cpcm:pareto"})
    EXPECT_EQ(FunctionClass::parse(name).label(), name);
  EXPECT_THROW(FunctionClass::parse("gam"), Error);
  EXPECT_TRUE(FunctionClass::additive().distribution_exempt());
  EXPECT_FALSE(FunctionClass::cpcm(ParametricFamily::Pareto).distribution_exempt());
}

TEST(ValidateDataset, MovesTargetFirst) {
  const Dataset d = validate_dataset(three_column(500), "Y");
  EXPECT_EQ(d.p(), 2);
  EXPECT_EQ(d.n(), 500);
  EXPECT_EQ(d.names(), (std::vector<std::string>{"Y", "A", "B"}));
  EXPECT_DOUBLE_EQ(d.y()[10], 10.0);
  EXPECT_DOUBLE_EQ(d.covariate(1)[10], std::sin(1.0));
}

TEST(ValidateDataset, Errors) {
  EXPECT_EQ(error_code_of([] { validate_dataset(three_column(30), "Z"); }), Errc::MissingTarget);
  EXPECT_EQ(error_code_of([] { validate_dataset(three_column(10), "Y"); }), Errc::TooFewRows);

  RawTable constant = three_column(30);
  for (auto& r : constant.rows) r[2] = 1.0;
  EXPECT_EQ(error_code_of([&] { validate_dataset(constant, "Y"); }), Errc::ConstantColumn);

  RawTable nan = three_column(30);
  nan.rows[7][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    validate_dataset(nan, "Y");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteEntry);
    EXPECT_NE(std::string(e.what()).find("row 8"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'A'"), std::string::npos);
  }

  RawTable dup = three_column(30);
  dup.header[2] = "A";
  EXPECT_EQ(error_code_of([&] { validate_dataset(dup, "Y"); }), Errc::DuplicateName);
}

TEST(Csv, ParsesQuotedHeaderAndCrlf) {
  const RawTable t = csv::parse("\"Y\",\"x, 1\"\r\n1.5,-2e-3\r\n3,4\r\n");
  EXPECT_EQ(t.header, (std::vector<std::string>{"Y", "x, 1"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(t.rows[0][1], -2e-3);
  EXPECT_DOUBLE_EQ(t.rows[1][0], 3.0);
}

TEST(Csv, RejectsGarbage) {
  EXPECT_EQ(error_code_of([] { csv::parse(""); }), Errc::MalformedCsv);
  EXPECT_EQ(error_code_of([] { csv::parse("Y,X\n1,abc\n"); }), Errc::MalformedCsv);
  EXPECT_EQ(error_code_of([] { validate_dataset(csv::parse("Y,X\n1,1,000\n"), "Y"); }), Errc::MalformedCsv);
}

TEST(Csv, RoundTripIsExact) {
  const Dataset d = validate_dataset(three_column(40), "Y");
  const Dataset back = validate_dataset(csv::parse(csv::to_string(d)), "Y");
  EXPECT_EQ(back.names(), d.names());
  EXPECT_EQ(back.values(), d.values());
}
