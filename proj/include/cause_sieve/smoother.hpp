#pragma once

// Kernel smoothers: univariate local-linear smoothing with backfitting for
// main effects, and product-Gaussian-kernel weighting for the joint
// (interaction) stage and the local parametric estimators.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"

namespace cause_sieve {

inline double sample_sd(const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  if (n < 2) return 0.0;
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / (n - 1));
}

/// 1.06 * sd * n^(-1/(d+4)); d = 1 is Silverman's rule.
inline double rule_of_thumb_bandwidth(const Eigen::VectorXd& x, int dim = 1) {
  const double sd = sample_sd(x);
  require(sd > 0, Errc::Precondition, "bandwidth of a constant column");
  return 1.06 * sd * std::pow(static_cast<double>(x.size()), -1.0 / (dim + 4.0));
}

/// Local-linear smoother weights with a Gaussian kernel: row r holds the
/// weights l_t(eval_r) so that the fit at eval_r is sum_t l_t * target_t.
/// Kernel weights are shifted by the largest one in each row so points far
/// from the data fall back to their nearest neighbours instead of 0/0.
inline Eigen::MatrixXd local_linear_weights(const Eigen::VectorXd& eval, const Eigen::VectorXd& train, double h) {
  const Eigen::Index m = eval.size();
  const Eigen::Index n = train.size();
  Eigen::MatrixXd w(m, n);
  Eigen::VectorXd dlt(n);
  Eigen::VectorXd k(n);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double x0 = eval[r];
    dlt = train.array() - x0;
    double min_u2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) min_u2 = std::min(min_u2, dlt[t] * dlt[t]);
    const double inv = 1.0 / (h * h);
    for (Eigen::Index t = 0; t < n; ++t) k[t] = std::exp(-0.5 * (dlt[t] * dlt[t] - min_u2) * inv);
    const double s0 = k.sum();
    const double s1 = k.dot(dlt);
    const double s2 = (k.array() * dlt.array().square()).sum();
    const double det = s0 * s2 - s1 * s1;
    if (det > 1e-10 * s0 * s2) {
      w.row(r) = (k.array() * (s2 - dlt.array() * s1) / det).matrix().transpose();
    } else {
      w.row(r) = (k / s0).transpose();
    }
  }
  return w;
}

/// Leave-one-out choice among multiples of the rule-of-thumb bandwidth for
/// regressing `target` on `x`.
inline double cv_bandwidth(const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  const double base = rule_of_thumb_bandwidth(x);
  constexpr std::array<double, 7> multipliers{0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 2.8};
  double best_h = base;
  double best_err = std::numeric_limits<double>::infinity();
  for (double mlt : multipliers) {
    const double h = base * mlt;
    const Eigen::MatrixXd s = local_linear_weights(x, x, h);
    const Eigen::VectorXd fit = s * target;
    double err = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double denom = 1.0 - s(i, i);
      if (denom <= 1e-8) {
        err = std::numeric_limits<double>::infinity();
        break;
      }
      const double e = (target[i] - fit[i]) / denom;
      err += e * e;
    }
    if (err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  return best_h;
}

// ---------------------------------------------------------------------------
// Product Gaussian kernel

/// Product-kernel weights between evaluation rows and training rows, kept
/// factorised per column so that one column can be swapped for a permuted
/// copy without recomputing any exponentials.
class ProductKernelBlock {
 public:
  ProductKernelBlock(const Eigen::MatrixXd& eval, const Eigen::MatrixXd& train, std::span<const double> bandwidth)
      : cols_(train.cols()) {
    const Eigen::Index m = eval.rows();
    const Eigen::Index n = train.rows();
    factor_.reserve(static_cast<std::size_t>(cols_));
    for (Eigen::Index c = 0; c < cols_; ++c) {
      const double inv = 1.0 / (bandwidth[static_cast<std::size_t>(c)] * bandwidth[static_cast<std::size_t>(c)]);
      Eigen::MatrixXd f(m, n);
      for (Eigen::Index t = 0; t < n; ++t)
        for (Eigen::Index r = 0; r < m; ++r) {
          const double d = eval(r, c) - train(t, c);
          f(r, t) = std::exp(-0.5 * d * d * inv);
        }
      factor_.push_back(std::move(f));
    }
    full_ = factor_.front();
    for (Eigen::Index c = 1; c < cols_; ++c) full_.array() *= factor_[static_cast<std::size_t>(c)].array();
  }

  /// Precomputes, for each column, the product of all other columns' factors.
  /// Needed before weighted_sums_permuted.
  void prepare_permutation() {
    if (!others_.empty()) return;
    for (Eigen::Index c = 0; c < cols_; ++c) {
      Eigen::MatrixXd o = Eigen::MatrixXd::Ones(full_.rows(), full_.cols());
      for (Eigen::Index k = 0; k < cols_; ++k)
        if (k != c) o.array() *= factor_[static_cast<std::size_t>(k)].array();
      others_.push_back(std::move(o));
    }
  }

  /// Row-wise sum_t w_rt * values_tk.
  Eigen::MatrixXd weighted_sums(const Eigen::MatrixXd& values) const { return full_ * values; }

  /// As weighted_sums, but with column `col` of evaluation row r taken from
  /// evaluation row perm[r].
  Eigen::MatrixXd weighted_sums_permuted(int col, std::span<const int> perm, const Eigen::MatrixXd& values) const {
    const auto& f = factor_[static_cast<std::size_t>(col)];
    const auto& o = others_[static_cast<std::size_t>(col)];
    Eigen::MatrixXd w(full_.rows(), full_.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) w.row(r) = f.row(perm[static_cast<std::size_t>(r)]).cwiseProduct(o.row(r));
    return w * values;
  }

  Eigen::Index rows() const noexcept { return full_.rows(); }

 private:
  Eigen::Index cols_;
  std::vector<Eigen::MatrixXd> factor_;
  std::vector<Eigen::MatrixXd> others_;
  Eigen::MatrixXd full_;
};

/// Rule-of-thumb bandwidths for a product kernel over the columns of x.
inline std::vector<double> product_bandwidths(const Eigen::MatrixXd& x) {
  std::vector<double> h;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    h.push_back(rule_of_thumb_bandwidth(x.col(c), static_cast<int>(x.cols())));
  return h;
}


/// Training-side moments for a local-linear fit on a product kernel:
/// columns 1, x_c, x_a * x_b (a <= b), target, x_c * target.
inline Eigen::MatrixXd joint_moment_values(const Eigen::MatrixXd& x, const Eigen::VectorXd& target) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd v(n, 1 + d + d * (d + 1) / 2 + 1 + d);
  Eigen::Index c = 0;
  v.col(c++).setOnes();
  for (Eigen::Index a = 0; a < d; ++a) v.col(c++) = x.col(a);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a; b < d; ++b) v.col(c++) = x.col(a).cwiseProduct(x.col(b));
  v.col(c++) = target;
  for (Eigen::Index a = 0; a < d; ++a) v.col(c++) = x.col(a).cwiseProduct(target);
  return v;
}

/// Local-linear predictions at eval rows from the weighted moment sums. A
/// small ridge on the slopes keeps sparse regions stable; a singular system
/// falls back to the local mean.
inline Eigen::VectorXd joint_local_linear(const Eigen::MatrixXd& sums, const Eigen::MatrixXd& x_eval,
                                          std::span<const double> bandwidth, Eigen::VectorXd* hat = nullptr) {
  const Eigen::Index d = x_eval.cols();
  const Eigen::Index m = x_eval.rows();
  const Eigen::Index t0 = 1 + d + d * (d + 1) / 2;
  Eigen::VectorXd out(m);
  Eigen::MatrixXd a(d + 1, d + 1);
  Eigen::VectorXd rhs(d + 1);
  Eigen::VectorXd basis(d + 1);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double s0 = sums(r, 0);
    if (hat) (*hat)[r] = 1.0;
    if (!(s0 > 1e-300)) {
      out[r] = 0.0;
      continue;
    }
    a(0, 0) = s0;
    Eigen::Index c = 1 + d;
    for (Eigen::Index i = 0; i < d; ++i) {
      a(0, i + 1) = a(i + 1, 0) = sums(r, 1 + i);
      for (Eigen::Index j = i; j < d; ++j, ++c) a(i + 1, j + 1) = a(j + 1, i + 1) = sums(r, c);
    }
    rhs[0] = sums(r, t0);
    for (Eigen::Index i = 0; i < d; ++i) rhs[i + 1] = sums(r, t0 + 1 + i);
    basis[0] = 1.0;
    for (Eigen::Index i = 0; i < d; ++i) basis[i + 1] = x_eval(r, i);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double h = bandwidth[static_cast<std::size_t>(i)];
      a(i + 1, i + 1) += 1e-3 * s0 * h * h;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12)) {
      out[r] = rhs[0] / s0;
      if (hat) (*hat)[r] = 1.0 / s0;
      continue;
    }
    out[r] = basis.dot(ldlt.solve(rhs));
    if (hat) (*hat)[r] = basis.dot(ldlt.solve(basis));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backfitted smoother

/// Conditional-mean estimate mu(x) = c + sum_j m_j(x_j) + m_joint(x).
///
/// The main effects m_j are fitted by backfitting univariate local-linear
/// smoothers and centred to mean zero. With two or more covariates a joint
/// local-linear product-kernel smoother of the main-effect residuals adds the
/// part of mu that is not additive in the coordinates.
class BackfitSmoother {
 public:
  class Block;

  static BackfitSmoother fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SmootherConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    require(n == y.size(), Errc::Precondition, "x and y differ in length");
    require(d >= 1, Errc::Precondition, "no covariates");

    BackfitSmoother s;
    s.x_ = x;
    s.intercept_ = y.mean();
    s.bandwidth_.resize(static_cast<std::size_t>(d));
    std::vector<Eigen::MatrixXd> smoother(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::VectorXd xj = x.col(j);
      const double h = cfg.bandwidth_rule == BandwidthRule::CrossValidation
                           ? cv_bandwidth(xj, (y.array() - s.intercept_).matrix())
                           : rule_of_thumb_bandwidth(xj);
      s.bandwidth_[static_cast<std::size_t>(j)] = h;
      smoother[static_cast<std::size_t>(j)] = local_linear_weights(xj, xj, h);
    }

    std::vector<Eigen::VectorXd> comp(static_cast<std::size_t>(d), Eigen::VectorXd::Zero(n));
    std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(d), Eigen::VectorXd::Zero(n));
    std::vector<double> offset(static_cast<std::size_t>(d), 0.0);
    const Eigen::VectorXd centred = (y.array() - s.intercept_).matrix();

    auto best_comp = comp;
    auto best_partial = partial;
    auto best_offset = offset;
    double best_loss = centred.squaredNorm() / static_cast<double>(n);
    double prev_loss = best_loss;
    int increases = 0;
    double prev_change = std::numeric_limits<double>::infinity();
    s.loss_history_.push_back(best_loss);

    for (int sweep = 0; sweep < cfg.backfit_max_iter; ++sweep) {
      double change = 0.0;
      double norm = 0.0;
      Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
      for (const auto& c : comp) total += c;
      for (Eigen::Index j = 0; j < d; ++j) {
        auto& cj = comp[static_cast<std::size_t>(j)];
        total -= cj;
        partial[static_cast<std::size_t>(j)] = centred - total;
        Eigen::VectorXd updated = smoother[static_cast<std::size_t>(j)] * partial[static_cast<std::size_t>(j)];
        offset[static_cast<std::size_t>(j)] = updated.mean();
        updated.array() -= offset[static_cast<std::size_t>(j)];
        change += (updated - cj).squaredNorm();
        norm += updated.squaredNorm();
        cj = std::move(updated);
        total += cj;
      }
      ++s.sweeps_;
      const double loss = (centred - total).squaredNorm() / static_cast<double>(n);
      s.loss_history_.push_back(loss);
      // a rising loss while the updates contract is settling, not divergence
      const double rel_change = norm > 0.0 ? std::sqrt(change / norm) : 0.0;
      if (loss > prev_loss * (1.0 + cfg.backfit_tol) && rel_change >= prev_change) {
        if (++increases >= 5) fail(Errc::BackfitDiverged, "loss increased for 5 consecutive sweeps");
      } else {
        increases = 0;
      }
      prev_change = rel_change;
      prev_loss = loss;
      if (loss <= best_loss * (1.0 + 1e-10)) {
        best_loss = std::min(best_loss, loss);
        best_comp = comp;
        best_partial = partial;
        best_offset = offset;
        s.accepted_losses_.push_back(loss);
      }
      if (norm <= 0.0 || std::sqrt(change / norm) < cfg.backfit_tol) break;
    }
    s.component_ = std::move(best_comp);
    s.partial_ = std::move(best_partial);
    s.offset_ = std::move(best_offset);

    Eigen::VectorXd main = Eigen::VectorXd::Constant(n, s.intercept_);
    for (const auto& c : s.component_) main += c;
    s.joint_fitted_ = Eigen::VectorXd::Zero(n);
    if (d >= 2) {
      s.joint_ = true;
      s.joint_bandwidth_ = product_bandwidths(x);
      s.joint_target_ = y - main;
      const Eigen::MatrixXd v = joint_moment_values(x, s.joint_target_);
      const std::vector<double> base = s.joint_bandwidth_;
      const std::vector<double> multipliers = cfg.bandwidth_rule == BandwidthRule::CrossValidation
                                                  ? std::vector<double>{0.7, 1.0, 1.4, 2.0, 2.8}
                                                  : std::vector<double>{1.0};
      double best = std::numeric_limits<double>::infinity();
      for (double mlt : multipliers) {
        std::vector<double> h = base;
        for (double& hh : h) hh *= mlt;
        const ProductKernelBlock self(x, x, h);
        Eigen::VectorXd hat(n);
        const Eigen::VectorXd fit = joint_local_linear(self.weighted_sums(v), x, h, &hat);
        double err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double e = (s.joint_target_[i] - fit[i]) / std::max(1e-8, 1.0 - hat[i]);
          err += e * e;
        }
        if (err < best || multipliers.size() == 1) {
          best = err;
          s.joint_bandwidth_ = h;
          s.joint_offset_ = fit.mean();
          s.joint_fitted_ = fit.array() - s.joint_offset_;
        }
      }
    }
    s.fitted_ = main + s.joint_fitted_;
    return s;
  }

  const Eigen::VectorXd& fitted() const noexcept { return fitted_; }
  const std::vector<double>& bandwidths() const noexcept { return bandwidth_; }
  /// Training loss after each sweep, starting with the intercept-only loss.
  const std::vector<double>& loss_history() const noexcept { return loss_history_; }
  /// Losses of the sweeps whose state was kept; non-increasing.
  const std::vector<double>& accepted_losses() const noexcept { return accepted_losses_; }
  int sweeps() const noexcept { return sweeps_; }

  /// Predictions at new rows, bound for repeated permuted evaluation.
  class Block {
   public:
    Block(const BackfitSmoother& s, const Eigen::MatrixXd& x_eval, bool permutable = false) : intercept_(s.intercept_) {
      const Eigen::Index d = s.x_.cols();
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const Eigen::MatrixXd w = local_linear_weights(x_eval.col(j), s.x_.col(j), s.bandwidth_[js]);
        main_.push_back((w * s.partial_[js]).array() - s.offset_[js]);
      }
      if (s.joint_) {
        joint_.emplace(x_eval, s.x_, s.joint_bandwidth_);
        bw_ = s.joint_bandwidth_;
        x_eval_ = x_eval;
        joint_values_ = joint_moment_values(s.x_, s.joint_target_);
        joint_offset_ = s.joint_offset_;
        if (permutable) joint_->prepare_permutation();
      }
    }

    Eigen::VectorXd predict() const {
      Eigen::VectorXd mu = Eigen::VectorXd::Constant(rows(), intercept_);
      for (const auto& m : main_) mu += m;
      if (joint_) mu += joint_part(joint_->weighted_sums(joint_values_), x_eval_);
      return mu;
    }

    /// Requires a block bound with permutable = true.
    Eigen::VectorXd predict_permuted(int col, std::span<const int> perm) const {
      Eigen::VectorXd mu = Eigen::VectorXd::Constant(rows(), intercept_);
      for (std::size_t j = 0; j < main_.size(); ++j) {
        if (static_cast<int>(j) == col) {
          for (Eigen::Index r = 0; r < rows(); ++r) mu[r] += main_[j][perm[static_cast<std::size_t>(r)]];
        } else {
          mu += main_[j];
        }
      }
      if (joint_) {
        Eigen::MatrixXd xp = x_eval_;
        for (Eigen::Index r = 0; r < rows(); ++r) xp(r, col) = x_eval_(perm[static_cast<std::size_t>(r)], col);
        mu += joint_part(joint_->weighted_sums_permuted(col, perm, joint_values_), xp);
      }
      return mu;
    }

    Eigen::Index rows() const { return main_.front().size(); }

   private:
    Eigen::VectorXd joint_part(const Eigen::MatrixXd& sums, const Eigen::MatrixXd& xe) const {
      return (joint_local_linear(sums, xe, bw_).array() - joint_offset_).matrix();
    }

    double intercept_;
    std::vector<Eigen::VectorXd> main_;
    std::optional<ProductKernelBlock> joint_;
    Eigen::MatrixXd joint_values_;
    double joint_offset_ = 0.0;
    std::vector<double> bw_;
    Eigen::MatrixXd x_eval_;
  };

  Block bind(const Eigen::MatrixXd& x_eval, bool permutable = false) const { return Block(*this, x_eval, permutable); }
  Eigen::VectorXd predict(const Eigen::MatrixXd& x_eval) const { return bind(x_eval).predict(); }

 private:
  Eigen::MatrixXd x_;
  double intercept_ = 0.0;
  std::vector<double> bandwidth_;
  std::vector<Eigen::VectorXd> partial_;
  std::vector<double> offset_;
  std::vector<Eigen::VectorXd> component_;
  bool joint_ = false;
  std::vector<double> joint_bandwidth_;
  Eigen::VectorXd joint_target_;
  double joint_offset_ = 0.0;
  Eigen::VectorXd joint_fitted_;
  Eigen::VectorXd fitted_;
  std::vector<double> loss_history_;
  std::vector<double> accepted_losses_;
  int sweeps_ = 0;
};

}  // namespace cause_sieve
