#include <gtest/gtest.h>

#include <random>

#include "cause_sieve/verify.hpp"

using namespace cause_sieve;

namespace {

double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0;
  for (double t : pts) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [t](double v) { return v <= t; })) / a.size();
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [t](double v) { return v <= t; })) / b.size();
    d = std::max(d, std::fabs(fa - fb));
  }
  return d;
}

VerifyOptions seeded(std::uint64_t s) {
  VerifyOptions o;
  o.seed = s;
  return o;
}

}  // namespace

TEST(DistEquality, TwoSampleKsMatchesBruteForce) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> d(0, 20);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(37);
    std::vector<double> b(53);
    for (auto& v : a) v = d(gen) * 0.5;
    for (auto& v : b) v = d(gen) * 0.5;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_NEAR(verify_detail::ks_two_sample_sorted(a, b), ks_brute(a, b), 1e-12);
  }
}

TEST(DistEquality, IdentityAndScaleMismatch) {
  const DistEqualityScan scan(EqualityDist::Exponential, 20000, 3);
  EXPECT_LT(scan.distance(0.0, 1.0), 0.02);
  EXPECT_NEAR(scan.median(), std::log(2.0), 0.03);
  for (double a : GridAxis{-4, 4, 0.05}.points()) EXPECT_GT(scan.distance(a, 0.5), 0.1) << a;
}

TEST(DistEquality, GridValidation) {
  EXPECT_THROW(check_dist_equality(EqualityDist::Exponential, 1000, {-4, 4, 0.1}, {-2, 2, 0.05}), Error);
  EXPECT_THROW(check_dist_equality(EqualityDist::Exponential, 1000, {-3, 4, 0.05}, {-2, 2, 0.05}), Error);
}

TEST(DistEquality, ReportsMinimaNearIdentity) {
  const TheoryCheckReport r = check_dist_equality(EqualityDist::Exponential, 4000, {-4, 4, 0.05}, {-2, 2, 0.05});
  ASSERT_FALSE(r.result["minima"].empty());
  const auto& best = r.result["minima"][0];
  EXPECT_NEAR(best["a"].get<double>(), 0.0, 0.1);
  EXPECT_NEAR(best["b"].get<double>(), 1.0, 0.1);
}

TEST(CoolLemma, SmallRunsSeparateArms) {
  for (int part = 1; part <= 4; ++part) {
    const TheoryCheckReport r = check_cool_lemma(part, 600, 20, seeded(2));
    EXPECT_GE(r.result["rejection_rate"].get<double>(), 0.8) << part;
    EXPECT_LE(r.result["control_rejection_rate"].get<double>(), 0.25) << part;
    EXPECT_EQ(r.check_id, "cool-lemma:" + std::to_string(part));
  }
  EXPECT_THROW(check_cool_lemma(5, 600, 20), Error);
}

TEST(GammaException, ArmsAndErrors) {
  const TheoryCheckReport r = check_gamma_support_exception(2.0, 3.0, 1.0, 1000, 30, seeded(3));
  EXPECT_LE(r.result["rejection_rate"].get<double>(), 0.2);
  EXPECT_GE(r.result["control_rejection_rate"].get<double>(), 0.8);
  try {
    check_gamma_support_exception(0.0, 3.0, 1.0, 1000, 30);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadParam);
  }
}

TEST(NormException, LowPowerGuard) {
  const TheoryCheckReport r = check_norm_exception(150, 3, seeded(4));
  EXPECT_TRUE(r.result["low_power"].get<bool>());
  EXPECT_FALSE(r.pass);
}

TEST(Marginalizability, ReplayIsIdentical) {
  const std::string a = check_marginalizability(ChainNoise::Uniform, 300, 10, seeded(5)).to_json();
  const std::string b = check_marginalizability(ChainNoise::Uniform, 300, 10, seeded(5)).to_json();
  EXPECT_EQ(a, b);
  const auto j = nlohmann::json::parse(a);
  EXPECT_EQ(j["check_id"], "marginalizability:uniform");
  EXPECT_EQ(j["n_reps"], 10);
  EXPECT_EQ(j["seed"], 5);
}

TEST(Verify, CheckIds) {
  EXPECT_EQ(check_ids().size(), 8u);
  try {
    run_check("cool-lemma:9", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadParam);
  }
}
