#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>

#include "cause_sieve/regress.hpp"

using namespace cause_sieve;

namespace {

struct Sample {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Eigen::VectorXd draw(std::mt19937_64& gen, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

Eigen::VectorXd gauss(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> d;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd ca = a.array() - a.mean();
  const Eigen::ArrayXd cb = b.array() - b.mean();
  return (ca * cb).sum() / std::sqrt(ca.square().sum() * cb.square().sum());
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

TEST(Ols, MatchesNormalEquationsAndTTest) {
  std::mt19937_64 gen(1);
  const int n = 80;
  Eigen::MatrixXd x(n, 3);
  x << gauss(gen, n), gauss(gen, n), gauss(gen, n);
  const Eigen::VectorXd y = (1.5 + 2.0 * x.col(0).array() - 0.05 * x.col(2).array() + gauss(gen, n).array()).matrix();

  Eigen::MatrixXd d(n, 4);
  d << Eigen::VectorXd::Ones(n), x;
  const Eigen::MatrixXd xtx_inv = (d.transpose() * d).inverse();
  const Eigen::VectorXd beta = xtx_inv * d.transpose() * y;
  const Eigen::VectorXd resid = y - d * beta;
  const double df = n - 4;
  const double s2 = resid.squaredNorm() / df;

  const LinearFit f = ols(x, y);
  EXPECT_NEAR(f.intercept, beta[0], 1e-10);
  boost::math::students_t t(df);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(f.coefficients[j], beta[j + 1], 1e-10);
    const double tstat = beta[j + 1] / std::sqrt(s2 * xtx_inv(j + 1, j + 1));
    EXPECT_NEAR(f.p_values[static_cast<std::size_t>(j)], 2.0 * boost::math::cdf(complement(t, std::fabs(tstat))),
                1e-10);
  }
  EXPECT_NEAR((f.residuals - resid).cwiseAbs().maxCoeff(), 0.0, 1e-10);
  EXPECT_NEAR(f.residuals.sum(), 0.0, 1e-9);
  EXPECT_NEAR((x.transpose() * f.residuals).cwiseAbs().maxCoeff(), 0.0, 1e-9);
}

TEST(Ols, ExactLineHasZeroResiduals) {
  const Eigen::MatrixXd x = Eigen::Vector3d(0.0, 1.0, 2.0);
  const LinearFit f = ols(x, Eigen::Vector3d(1.0, 3.0, 5.0));
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.coefficients[0], 2.0, 1e-12);
  EXPECT_EQ(f.residuals, Eigen::Vector3d::Zero());
  EXPECT_EQ(f.p_values[0], 0.0);
}

TEST(Ols, RankDeficient) {
  std::mt19937_64 gen(2);
  Eigen::MatrixXd x(30, 2);
  x.col(0) = gauss(gen, 30);
  x.col(1) = 2.0 * x.col(0);
  EXPECT_EQ(error_code_of([&] { ols(x, gauss(gen, 30)); }), Errc::RankDeficient);
}

TEST(FitLinear, NoiseIsPitOfResiduals) {
  std::mt19937_64 gen(3);
  const Eigen::MatrixXd x = gauss(gen, 50);
  const Eigen::VectorXd y = (x.array() + 0.5 * gauss(gen, 50).array()).matrix();
  const NoiseRecovery r = fit_linear(x, y);
  EXPECT_EQ(r.eps, pit_rescale(ols(x, y).residuals));
  EXPECT_EQ(r.significance_p.size(), 1u);
  EXPECT_LT(r.significance_p[0], 1e-6);
}

TEST(Smoother, SingleCovariateIsLocalLinear) {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd x = draw(gen, 300, -2, 2);
  const Eigen::VectorXd y = ((3.0 * x.array()).sin() + 0.2 * gauss(gen, 300).array()).matrix();
  const BackfitSmoother s = BackfitSmoother::fit(x, y, {});
  const double h = s.bandwidths()[0];
  Eigen::VectorXd direct(300);
  for (int r = 0; r < 300; ++r) {
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (int t = 0; t < 300; ++t) {
      const double u = x(t, 0) - x(r, 0);
      const double w = std::exp(-0.5 * u * u / (h * h));
      const Eigen::Vector2d z(1.0, u);
      a += w * z * z.transpose();
      b += w * y[t] * z;
    }
    direct[r] = a.ldlt().solve(b)[0];
  }
  // centred component plus intercept
  const Eigen::VectorXd expected = (direct.array() - direct.mean() + y.mean()).matrix();
  EXPECT_LT((s.fitted() - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Smoother, CvBandwidthRecoversSmoothCurve) {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd x = draw(gen, 300, -2, 2);
  const Eigen::VectorXd y = (3.0 * x.array()).sin().matrix();
  SmootherConfig cfg;
  cfg.bandwidth_rule = BandwidthRule::CrossValidation;
  EXPECT_LE(fit_additive(x, y, cfg).fit_loss, 0.05);
}

TEST(Smoother, LinearTargetIsNearlyExact) {
  std::mt19937_64 gen(5);
  const Eigen::MatrixXd x = draw(gen, 200, 0, 1);
  EXPECT_LE(fit_additive(x, x.col(0)).fit_loss, 1e-4);
}

TEST(Smoother, AdditiveComponentsAndCvBandwidth) {
  std::mt19937_64 gen(6);
  const int n = 400;
  Eigen::MatrixXd x(n, 2);
  x << draw(gen, n, -2, 2), draw(gen, n, -2, 2);
  const Eigen::VectorXd truth = (x.col(0).array().sin() + 0.5 * x.col(1).array().square()).matrix();
  const Eigen::VectorXd y = truth + 0.2 * gauss(gen, n);
  for (auto rule : {BandwidthRule::Silverman, BandwidthRule::CrossValidation}) {
    SmootherConfig cfg;
    cfg.bandwidth_rule = rule;
    const BackfitSmoother s = BackfitSmoother::fit(x, y, cfg);
    EXPECT_LT((s.fitted() - truth).squaredNorm() / n, 0.01);
    EXPECT_LT((s.predict(x) - s.fitted()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Smoother, CandidateCap) {
  std::mt19937_64 gen(7);
  Eigen::MatrixXd x(60, 7);
  for (int c = 0; c < 7; ++c) x.col(c) = gauss(gen, 60);
  EXPECT_EQ(error_code_of([&] { fit_additive(x, gauss(gen, 60)); }), Errc::Precondition);
}

TEST(LocationScale, RecoversScale) {
  std::mt19937_64 gen(8);
  const int n = 800;
  const Eigen::MatrixXd x = draw(gen, n, -1.5, 1.5);
  const Eigen::VectorXd sd = (0.8 * x.col(0).array()).exp().matrix();
  const Eigen::VectorXd y = (x.col(0).array().cos() + sd.array() * gauss(gen, n).array()).matrix();
  const LocationScaleModel m = LocationScaleModel::fit(x, y, {});
  EXPECT_GT(corr(m.sigma(), sd), 0.9);
  EXPECT_NEAR((m.sigma().array() / sd.array()).log().mean(), 0.0, 0.2);
  const Eigen::VectorXd z = (y - m.mu()).array() / m.sigma().array();
  EXPECT_NEAR(z.squaredNorm() / n, 1.0, 1e-9);
}

TEST(CpcmGaussian, SameRanksAsLocationScale) {
  std::mt19937_64 gen(9);
  const int n = 200;
  const Eigen::MatrixXd x = draw(gen, n, -1, 1);
  const Eigen::VectorXd y = (x.col(0).array() + (0.5 + x.col(0).array().abs()) * gauss(gen, n).array()).matrix();
  const NoiseRecovery a = fit_cpcm(x, y, ParametricFamily::Gaussian);
  const NoiseRecovery b = fit_location_scale(x, y);
  EXPECT_EQ(pit_rescale(a.eps), b.eps);
  EXPECT_EQ(a.significance_p, b.significance_p);
  EXPECT_GT(a.eps.minCoeff(), 0.0);
  EXPECT_LT(a.eps.maxCoeff(), 1.0);
}

TEST(Pareto, UniformWeightsGiveGlobalMle) {
  std::mt19937_64 gen(10);
  const Eigen::VectorXd y = (draw(gen, 100, 0, 1).array().inverse()).matrix();
  const Eigen::VectorXd ly = y.array().log().matrix();
  EXPECT_NEAR(weighted_pareto_theta(Eigen::VectorXd::Constant(100, 0.3), ly), 1.0 / ly.mean(), 1e-12);
}

TEST(Pareto, CdfAndLocalTheta) {
  std::mt19937_64 gen(11);
  const int n = 1500;
  const Eigen::MatrixXd x = draw(gen, n, 0, 1);
  Eigen::VectorXd theta(n);
  Eigen::VectorXd y(n);
  const Eigen::VectorXd u = draw(gen, n, 0, 1);
  for (int i = 0; i < n; ++i) {
    theta[i] = 1.0 + 3.0 * x(i, 0);
    y[i] = std::pow(1.0 - u[i], -1.0 / theta[i]);
  }
  const LocalParametricModel m = LocalParametricModel::fit(x, y, ParametricFamily::Pareto);
  const Eigen::MatrixXd est = m.fitted_parameters();
  EXPECT_GT(corr(est.col(0), theta), 0.9);
  EXPECT_DOUBLE_EQ(m.cdf(Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Constant(1, 1, 1.0))[0], 0.5);

  const NoiseRecovery r = fit_cpcm(x, y, ParametricFamily::Pareto);
  EXPECT_LT(r.significance_p[0], 0.05);
}

TEST(Gamma, MomentEstimates) {
  std::mt19937_64 gen(12);
  std::gamma_distribution<double> g(2.0, 1.5);
  const int n = 3000;
  const Eigen::MatrixXd x = draw(gen, n, 0, 1);
  Eigen::VectorXd y(n);
  for (auto& v : y) v = g(gen);
  const Eigen::MatrixXd est = LocalParametricModel::fit(x, y, ParametricFamily::Gamma).fitted_parameters();
  EXPECT_NEAR(est.col(0).mean(), 2.0, 0.3);
  EXPECT_NEAR(est.col(1).mean(), 1.5, 0.25);
}

TEST(Support, Violations) {
  EXPECT_EQ(error_code_of([] { check_support(Eigen::Vector2d(1.0, 0.5), ParametricFamily::Pareto); }),
            Errc::DomainViolation);
  EXPECT_EQ(error_code_of([] { check_support(Eigen::Vector2d(1.0, 0.0), ParametricFamily::Gamma); }),
            Errc::DomainViolation);
  EXPECT_NO_THROW(check_support(Eigen::Vector2d(-3.0, 0.0), ParametricFamily::Gaussian));
}

TEST(PermSignificance, RequiresEnoughPermutations) {
  std::mt19937_64 gen(13);
  const Eigen::MatrixXd x = gauss(gen, 60);
  SignificanceOptions sig;
  sig.n_perm = 49;
  EXPECT_EQ(error_code_of([&] { fit_additive(x, gauss(gen, 60), {}, sig); }), Errc::Precondition);
}

TEST(PermSignificance, StrongSignalHitsMinimumPValue) {
  std::mt19937_64 gen(14);
  const int n = 200;
  Eigen::MatrixXd x(n, 2);
  x << draw(gen, n, -2, 2), draw(gen, n, -2, 2);
  const Eigen::VectorXd y = ((2.0 * x.col(0).array()).sin() + 0.1 * gauss(gen, n).array()).matrix();
  const NoiseRecovery r = fit_additive(x, y);
  EXPECT_DOUBLE_EQ(r.significance_p[0], 1.0 / 100.0);
  const NoiseRecovery again = fit_additive(x, y);
  EXPECT_EQ(again.significance_p, r.significance_p);
}

TEST(PermSignificance, NoiseColumnIsRarelySignificant) {
  int rejected = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    std::mt19937_64 gen(100 + s);
    const int n = 200;
    Eigen::MatrixXd x(n, 2);
    x << draw(gen, n, -2, 2), draw(gen, n, -2, 2);
    const Eigen::VectorXd y = ((2.0 * x.col(0).array()).sin() + 0.5 * gauss(gen, n).array()).matrix();
    SignificanceOptions sig;
    sig.seed = s;
    rejected += fit_additive(x, y, {}, sig).significance_p[1] <= 0.05;
  }
  // binomial(40, 0.05) exceeds 6 with probability below 0.01
  EXPECT_LE(rejected, 6);
}

TEST(PermSignificance, CountsNotWorseLosses) {
  // a loss model that ignores the permutation ties every replicate
  struct Flat {
    double loss() const { return 1.0; }
    double loss_permuted(int, std::span<const int>) const { return 1.0; }
  };
  std::mt19937_64 gen(15);
  const Eigen::MatrixXd x = gauss(gen, 40);
  const auto p = perm_significance(
      x, gauss(gen, 40), [](const auto&, const auto&, const auto&, const auto&) { return Flat{}; }, 60, 3);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}
