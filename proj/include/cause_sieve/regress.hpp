#pragma once

// Noise recovery: estimate eps_S = f^<-(Y, X_S) under each function class,
// together with per-covariate significance p-values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "cause_sieve/distributions.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/smoother.hpp"
#include "cause_sieve/stattests.hpp"

namespace cause_sieve {

/// Largest candidate-set size accepted by the smoothing estimators.
inline constexpr std::size_t kMaxSmoothedSet = 6;

/// Settings for the permutation significance attached to smoothing fits.
struct SignificanceOptions {
  int n_perm = 99;
  int folds = 5;
  std::uint64_t seed = 0;
};

namespace detail {

/// Keeps CDF-transformed noise strictly inside (0,1).
inline double clamp_open_unit(double u) {
  constexpr double lo = 0x1.0p-53;
  constexpr double hi = 1.0 - 0x1.0p-53;
  if (std::isnan(u)) return 0.5;
  return std::clamp(u, lo, hi);
}

inline void require_smoothed_size(Eigen::Index cols) {
  require(cols >= 1 && static_cast<std::size_t>(cols) <= kMaxSmoothedSet, Errc::Precondition,
          "smoothing estimators accept 1.." + std::to_string(kMaxSmoothedSet) + " covariates, got " +
              std::to_string(cols));
}

inline double scale_floor(const Eigen::VectorXd& y, const SmootherConfig& cfg) {
  const double sd = sample_sd(y);
  return cfg.sigma_floor * (sd > 0 ? sd : 1.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear

struct LinearFit {
  Eigen::VectorXd coefficients;  ///< slopes, one per column of x
  double intercept = 0.0;
  Eigen::VectorXd residuals;
  std::vector<double> p_values;  ///< two-sided t-test of each slope = 0
};

inline LinearFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  require(n == y.size(), Errc::Precondition, "x and y differ in length");
  require(k >= 1 && k < n - 1, Errc::Precondition, "need 1 <= |S| < n - 1 for least squares");
  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = x;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k + 1) fail(Errc::RankDeficient, "design matrix [1, X_S] is collinear");
  const Eigen::VectorXd beta = qr.solve(y);

  LinearFit fit;
  fit.intercept = beta[0];
  fit.coefficients = beta.tail(k);
  fit.residuals = y - design * beta;
  // residuals at rounding level are exact zeros
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, y.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::fabs(fit.residuals[i]) <= noise) fit.residuals[i] = 0.0;

  const double df = static_cast<double>(n - k - 1);
  const double sigma2 = fit.residuals.squaredNorm() / df;
  const Eigen::MatrixXd r_inv =
      qr.matrixR().topLeftCorner(k + 1, k + 1).triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
  // (X'X)^-1 = P R^-1 R^-T P'
  const Eigen::MatrixXd cov_perm = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation().indices();
  Eigen::VectorXd diag(k + 1);
  for (Eigen::Index i = 0; i < k + 1; ++i) diag[perm[i]] = cov_perm(i, i);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double se = std::sqrt(sigma2 * diag[j + 1]);
    const double b = fit.coefficients[j];
    if (se > 0) {
      fit.p_values.push_back(dist::t_two_sided_p(b / se, df));
    } else {
      fit.p_values.push_back(b != 0.0 ? 0.0 : 1.0);
    }
  }
  return fit;
}

inline NoiseRecovery fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const LinearFit f = ols(x, y);
  NoiseRecovery out;
  out.f_class = FunctionClass::linear();
  out.eps = pit_rescale(f.residuals);
  out.significance_p = f.p_values;
  out.fit_loss = f.residuals.squaredNorm() / static_cast<double>(y.size());
  return out;
}

inline NoiseRecovery fit_linear(const Dataset& data, const CandidateSet& s) {
  NoiseRecovery out = fit_linear(data.block(s), data.y());
  out.set = s;
  return out;
}

// ---------------------------------------------------------------------------
// Loss models for permutation significance

/// Squared-error loss of a backfitted mean.
class MeanLossModel {
 public:
  MeanLossModel(const BackfitSmoother& mean, const Eigen::MatrixXd& x_eval, Eigen::VectorXd y_eval)
      : block_(mean.bind(x_eval, true)), y_(std::move(y_eval)) {}

  double loss() const { return (y_ - block_.predict()).squaredNorm(); }
  double loss_permuted(int col, std::span<const int> perm) const {
    return (y_ - block_.predict_permuted(col, perm)).squaredNorm();
  }

 private:
  BackfitSmoother::Block block_;
  Eigen::VectorXd y_;
};

// ---------------------------------------------------------------------------
// Additive (conditional mean) fits

struct AdditiveFit {
  BackfitSmoother mean;
  Eigen::VectorXd residuals;
};

inline AdditiveFit fit_additive_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SmootherConfig& cfg) {
  detail::require_smoothed_size(x.cols());
  AdditiveFit f{BackfitSmoother::fit(x, y, cfg), {}};
  f.residuals = y - f.mean.fitted();
  return f;
}

inline NoiseRecovery fit_additive(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SmootherConfig& cfg = {},
                                  const SignificanceOptions& sig = {}) {
  const AdditiveFit f = fit_additive_model(x, y, cfg);
  NoiseRecovery out;
  out.f_class = FunctionClass::additive();
  out.eps = pit_rescale(f.residuals);
  out.fit_loss = f.residuals.squaredNorm() / static_cast<double>(y.size());
  out.significance_p = perm_significance(
      x, y,
      [&](const Eigen::MatrixXd& xt, const Eigen::VectorXd& yt, const Eigen::MatrixXd& xe, const Eigen::VectorXd& ye) {
        return MeanLossModel(BackfitSmoother::fit(xt, yt, cfg), xe, ye);
      },
      sig.n_perm, sig.seed, sig.folds);
  return out;
}

inline NoiseRecovery fit_additive(const Dataset& data, const CandidateSet& s, const SmootherConfig& cfg = {},
                                  const SignificanceOptions& sig = {}) {
  NoiseRecovery out = fit_additive(data.block(s), data.y(), cfg, sig);
  out.set = s;
  return out;
}

// ---------------------------------------------------------------------------
// Location-scale fits

/// Two-stage heteroscedastic fit: mu by the backfitted smoother, then
/// log((Y - mu)^2 + floor^2) smoothed the same way. sigma = kappa *
/// exp(fit / 2), floored, where kappa makes the standardised residuals have
/// unit mean square on the training data.
class LocationScaleModel {
 public:
  static LocationScaleModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SmootherConfig& cfg) {
    detail::require_smoothed_size(x.cols());
    LocationScaleModel m{BackfitSmoother::fit(x, y, cfg), {}, 1.0, detail::scale_floor(y, cfg)};
    const Eigen::VectorXd resid = y - m.mean_.fitted();
    const Eigen::VectorXd log_sq = (resid.array().square() + m.floor_ * m.floor_).log().matrix();
    m.log_var_.emplace(BackfitSmoother::fit(x, log_sq, cfg));
    const Eigen::VectorXd raw = m.raw_sigma(m.log_var_->fitted());
    const double ms = (resid.array() / raw.array()).square().mean();
    m.kappa_ = (ms > 0 && std::isfinite(ms)) ? std::sqrt(ms) : 1.0;
    return m;
  }

  Eigen::VectorXd mu() const { return mean_.fitted(); }
  Eigen::VectorXd sigma() const { return scale(log_var_->fitted()); }
  const BackfitSmoother& mean_smoother() const { return mean_; }
  const BackfitSmoother& log_var_smoother() const { return *log_var_; }
  double floor() const { return floor_; }

  /// Applies kappa and the floor to a log-variance prediction.
  Eigen::VectorXd scale(const Eigen::VectorXd& log_var) const {
    return (raw_sigma(log_var) * kappa_).cwiseMax(floor_);
  }

 private:
  LocationScaleModel(BackfitSmoother mean, std::optional<BackfitSmoother> log_var, double kappa, double floor)
      : mean_(std::move(mean)), log_var_(std::move(log_var)), kappa_(kappa), floor_(floor) {}

  Eigen::VectorXd raw_sigma(const Eigen::VectorXd& log_var) const {
    return (0.5 * log_var.array()).exp().matrix().cwiseMax(floor_);
  }

  BackfitSmoother mean_;
  std::optional<BackfitSmoother> log_var_;
  double kappa_;
  double floor_;
};

/// Gaussian negative log-likelihood (up to a constant) of a location-scale
/// model.
class GaussianLossModel {
 public:
  GaussianLossModel(const LocationScaleModel& m, const Eigen::MatrixXd& x_eval, Eigen::VectorXd y_eval)
      : model_(m),
        mean_(m.mean_smoother().bind(x_eval, true)),
        log_var_(m.log_var_smoother().bind(x_eval, true)),
        y_(std::move(y_eval)) {}

  double loss() const { return nll(mean_.predict(), log_var_.predict()); }
  double loss_permuted(int col, std::span<const int> perm) const {
    return nll(mean_.predict_permuted(col, perm), log_var_.predict_permuted(col, perm));
  }

 private:
  double nll(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) const {
    const Eigen::VectorXd sigma = model_.scale(log_var);
    return (sigma.array().log() + 0.5 * ((y_ - mu).array() / sigma.array()).square()).sum();
  }

  LocationScaleModel model_;
  BackfitSmoother::Block mean_;
  BackfitSmoother::Block log_var_;
  Eigen::VectorXd y_;
};

inline std::vector<double> gaussian_significance(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                 const SmootherConfig& cfg, const SignificanceOptions& sig) {
  return perm_significance(
      x, y,
      [&](const Eigen::MatrixXd& xt, const Eigen::VectorXd& yt, const Eigen::MatrixXd& xe, const Eigen::VectorXd& ye) {
        return GaussianLossModel(LocationScaleModel::fit(xt, yt, cfg), xe, ye);
      },
      sig.n_perm, sig.seed, sig.folds);
}

inline NoiseRecovery fit_location_scale(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        const SmootherConfig& cfg = {}, const SignificanceOptions& sig = {}) {
  const LocationScaleModel m = LocationScaleModel::fit(x, y, cfg);
  const Eigen::VectorXd mu = m.mu();
  NoiseRecovery out;
  out.f_class = FunctionClass::location_scale();
  out.eps = pit_rescale(((y - mu).array() / m.sigma().array()).matrix());
  out.fit_loss = (y - mu).squaredNorm() / static_cast<double>(y.size());
  out.significance_p = gaussian_significance(x, y, cfg, sig);
  return out;
}

inline NoiseRecovery fit_location_scale(const Dataset& data, const CandidateSet& s, const SmootherConfig& cfg = {},
                                        const SignificanceOptions& sig = {}) {
  NoiseRecovery out = fit_location_scale(data.block(s), data.y(), cfg, sig);
  out.set = s;
  return out;
}

// ---------------------------------------------------------------------------
// Conditionally parametric fits

/// Support condition of the family on the target.
inline void check_support(const Eigen::VectorXd& y, ParametricFamily family) {
  switch (family) {
    case ParametricFamily::Pareto:
      if (y.minCoeff() < 1.0)
        fail(Errc::DomainViolation, "Pareto family needs Y >= 1, min(Y) = " + std::to_string(y.minCoeff()));
      break;
    case ParametricFamily::Gamma:
      if (y.minCoeff() <= 0.0)
        fail(Errc::DomainViolation, "Gamma family needs Y > 0, min(Y) = " + std::to_string(y.minCoeff()));
      break;
    case ParametricFamily::Gaussian:
      break;
  }
}

/// Pareto tail index from kernel weights: sum(w) / sum(w * ln y). With equal
/// weights this is the global MLE 1 / mean(ln y).
inline double weighted_pareto_theta(const Eigen::VectorXd& weights, const Eigen::VectorXd& log_y) {
  return weights.sum() / weights.dot(log_y);
}

/// Local parametric estimate of theta(x) for the Pareto or Gamma family by
/// product-Gaussian-kernel weighting over X_S.
class LocalParametricModel {
 public:
  static LocalParametricModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ParametricFamily family) {
    require(family != ParametricFamily::Gaussian, Errc::Precondition, "Gaussian family uses the location-scale fit");
    detail::require_smoothed_size(x.cols());
    check_support(y, family);
    LocalParametricModel m;
    m.family_ = family;
    m.x_ = x;
    m.bandwidth_ = product_bandwidths(x);
    m.values_ = sufficient_values(y, family);
    m.global_ = m.values_.colwise().mean();
    return m;
  }

  ParametricFamily family() const noexcept { return family_; }
  const Eigen::MatrixXd& training_x() const noexcept { return x_; }
  const std::vector<double>& bandwidths() const noexcept { return bandwidth_; }

  /// Kernel-weighted sums of the sufficient values, one row per evaluation
  /// point: Pareto (1, ln y); Gamma (1, y, y^2).
  static Eigen::MatrixXd sufficient_values(const Eigen::VectorXd& y, ParametricFamily family) {
    if (family == ParametricFamily::Pareto) {
      Eigen::MatrixXd v(y.size(), 2);
      v.col(0).setOnes();
      v.col(1) = y.array().log().matrix();
      return v;
    }
    Eigen::MatrixXd v(y.size(), 3);
    v.col(0).setOnes();
    v.col(1) = y;
    v.col(2) = y.array().square().matrix();
    return v;
  }

  const Eigen::MatrixXd& values() const noexcept { return values_; }

  /// Converts weighted sums to parameters: Pareto -> (theta); Gamma -> (shape,
  /// scale). Rows whose weights all underflow use the global estimate.
  Eigen::MatrixXd parameters(const Eigen::MatrixXd& sums) const {
    Eigen::MatrixXd theta(sums.rows(), family_ == ParametricFamily::Pareto ? 1 : 2);
    for (Eigen::Index r = 0; r < sums.rows(); ++r) {
      const Eigen::RowVectorXd s = sums(r, 0) > 1e-300 ? Eigen::RowVectorXd(sums.row(r) / sums(r, 0)) : global_;
      if (family_ == ParametricFamily::Pareto) {
        const double t = 1.0 / s[1];
        if (!(t > 0) || !std::isfinite(t)) fail(Errc::DegenerateTheta, "Pareto theta estimate " + std::to_string(t));
        theta(r, 0) = t;
      } else {
        const double mean = s[1];
        const double var = s[2] - mean * mean;
        if (!(var > 0) || !(mean > 0) || !std::isfinite(var))
          fail(Errc::DegenerateTheta, "Gamma moment estimate mean " + std::to_string(mean) + ", variance " +
                                          std::to_string(var));
        theta(r, 0) = mean * mean / var;
        theta(r, 1) = var / mean;
      }
    }
    return theta;
  }

  /// F(y; theta) for each row.
  Eigen::VectorXd cdf(const Eigen::VectorXd& y, const Eigen::MatrixXd& theta) const {
    Eigen::VectorXd u(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (family_ == ParametricFamily::Pareto) {
        u[i] = -std::expm1(-theta(i, 0) * std::log(y[i]));
      } else {
        u[i] = dist::gamma_cdf(y[i], theta(i, 0), theta(i, 1));
      }
      u[i] = detail::clamp_open_unit(u[i]);
    }
    return u;
  }

  /// Summed negative log-likelihood, dropping terms free of theta.
  double nll(const Eigen::VectorXd& y, const Eigen::MatrixXd& theta) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double ly = std::log(y[i]);
      if (family_ == ParametricFamily::Pareto) {
        s += -std::log(theta(i, 0)) + theta(i, 0) * ly;
      } else {
        const double k = theta(i, 0);
        const double sc = theta(i, 1);
        s += -((k - 1.0) * ly - y[i] / sc - k * std::log(sc) - std::lgamma(k));
      }
    }
    return s;
  }

  Eigen::MatrixXd fitted_parameters() const {
    const ProductKernelBlock self(x_, x_, bandwidth_);
    return parameters(self.weighted_sums(values_));
  }

 private:
  ParametricFamily family_ = ParametricFamily::Pareto;
  Eigen::MatrixXd x_;
  std::vector<double> bandwidth_;
  Eigen::MatrixXd values_;
  Eigen::RowVectorXd global_;
};

class ParametricLossModel {
 public:
  ParametricLossModel(LocalParametricModel m, const Eigen::MatrixXd& x_eval, Eigen::VectorXd y_eval)
      : model_(std::move(m)), block_(x_eval, model_.training_x(), model_.bandwidths()), y_(std::move(y_eval)) {
    block_.prepare_permutation();
  }

  double loss() const { return model_.nll(y_, model_.parameters(block_.weighted_sums(model_.values()))); }
  double loss_permuted(int col, std::span<const int> perm) const {
    return model_.nll(y_, model_.parameters(block_.weighted_sums_permuted(col, perm, model_.values())));
  }

 private:
  LocalParametricModel model_;
  ProductKernelBlock block_;
  Eigen::VectorXd y_;
};

inline NoiseRecovery fit_cpcm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ParametricFamily family,
                              const SmootherConfig& cfg = {}, const SignificanceOptions& sig = {}) {
  check_support(y, family);
  NoiseRecovery out;
  out.f_class = FunctionClass::cpcm(family);
  if (family == ParametricFamily::Gaussian) {
    const LocationScaleModel m = LocationScaleModel::fit(x, y, cfg);
    const Eigen::VectorXd mu = m.mu();
    const Eigen::VectorXd z = (y - mu).array() / m.sigma().array();
    out.eps = z.unaryExpr([](double v) { return detail::clamp_open_unit(dist::normal_cdf(v)); });
    out.fit_loss = (y - mu).squaredNorm() / static_cast<double>(y.size());
    out.significance_p = gaussian_significance(x, y, cfg, sig);
    return out;
  }
  const LocalParametricModel m = LocalParametricModel::fit(x, y, family);
  const Eigen::MatrixXd theta = m.fitted_parameters();
  out.eps = m.cdf(y, theta);
  // mean implied by theta; Pareto means are finite only for theta > 1
  Eigen::VectorXd mean(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    mean[i] = family == ParametricFamily::Pareto
                  ? (theta(i, 0) > 1 ? theta(i, 0) / (theta(i, 0) - 1) : std::numeric_limits<double>::quiet_NaN())
                  : theta(i, 0) * theta(i, 1);
  out.fit_loss = mean.allFinite() ? (y - mean).squaredNorm() / static_cast<double>(y.size())
                                  : std::numeric_limits<double>::infinity();
  out.significance_p = perm_significance(
      x, y,
      [&](const Eigen::MatrixXd& xt, const Eigen::VectorXd& yt, const Eigen::MatrixXd& xe, const Eigen::VectorXd& ye) {
        return ParametricLossModel(LocalParametricModel::fit(xt, yt, family), xe, ye);
      },
      sig.n_perm, sig.seed, sig.folds);
  return out;
}

inline NoiseRecovery fit_cpcm(const Dataset& data, const CandidateSet& s, ParametricFamily family,
                              const SmootherConfig& cfg = {}, const SignificanceOptions& sig = {}) {
  NoiseRecovery out = fit_cpcm(data.block(s), data.y(), family, cfg, sig);
  out.set = s;
  return out;
}

/// Dispatches on the function class.
inline NoiseRecovery recover_noise(const Dataset& data, const CandidateSet& s, const FunctionClass& f_class,
                                   const SmootherConfig& cfg = {}, const SignificanceOptions& sig = {}) {
  switch (f_class.kind()) {
    case FunctionClass::Kind::Linear: return fit_linear(data, s);
    case FunctionClass::Kind::Additive: return fit_additive(data, s, cfg, sig);
    case FunctionClass::Kind::LocationScale: return fit_location_scale(data, s, cfg, sig);
    case FunctionClass::Kind::Cpcm: return fit_cpcm(data, s, *f_class.family(), cfg, sig);
  }
  fail(Errc::Precondition, "unknown function class");
}

}  // namespace cause_sieve
