#pragma once

// Independence, uniformity and covariate-significance tests.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cause_sieve/distributions.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/random.hpp"

namespace cause_sieve {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
};

// ---------------------------------------------------------------------------
// HSIC

namespace detail {

/// Median of |v_i - v_k| over i < k; falls back to the mean positive distance
/// when more than half of the pairs are tied.
inline double median_pairwise_distance(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = i + 1; k < n; ++k) d.push_back(std::fabs(v[i] - v[k]));
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (med > 0) return med;
  double sum = 0.0;
  std::size_t cnt = 0;
  for (double x : d)
    if (x > 0) {
      sum += x;
      ++cnt;
    }
  return cnt ? sum / static_cast<double>(cnt) : 1.0;
}

/// Product-over-columns Gaussian RBF Gram matrix, one median-heuristic
/// bandwidth per column.
inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd log_k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::VectorXd col = x.col(c);
    const double sigma = median_pairwise_distance(col);
    const double scale = -0.5 / (sigma * sigma);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index i = k + 1; i < n; ++i) {
        const double dlt = col[i] - col[k];
        log_k(i, k) += scale * dlt * dlt;
      }
  }
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    k(c, c) = 1.0;
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double v = std::exp(log_k(r, c));
      k(r, c) = v;
      k(c, r) = v;
    }
  }
  return k;
}

/// Mean of the off-diagonal entries.
inline double off_diagonal_mean(const Eigen::MatrixXd& k) {
  const double n = static_cast<double>(k.rows());
  return (k.sum() - k.trace()) / (n * (n - 1));
}

/// H K H with H the centering matrix.
inline void center_in_place(Eigen::MatrixXd& k) {
  const Eigen::VectorXd row_mean = k.rowwise().mean();
  const double grand = row_mean.mean();
  for (Eigen::Index c = 0; c < k.cols(); ++c)
    for (Eigen::Index r = 0; r < k.rows(); ++r) k(r, c) += grand - row_mean[r] - row_mean[c];
}

}  // namespace detail

/// Kernel independence test between the rows of x (n x d, jointly) and e.
/// Statistic is n * HSIC_b (biased V-statistic). The gamma method matches the
/// first two null moments; the permutation method permutes e.
inline TestResult hsic_test(const Eigen::MatrixXd& x, const Eigen::VectorXd& e, HsicMethod method = HsicMethod::Gamma,
                            int n_perm = 1000, std::uint64_t seed = 0) {
  const Eigen::Index n = x.rows();
  require(n == e.size(), Errc::Precondition, "hsic_test: x and e differ in length");
  require(n >= kMinRows, Errc::Precondition, "hsic_test needs at least 20 observations");
  require(x.cols() >= 1, Errc::Precondition, "hsic_test: x has no columns");
  const double e_span = e.maxCoeff() - e.minCoeff();
  if (!(e_span > 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff())))
    fail(Errc::ConstantInput, "hsic_test: e is constant");
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    require(x.col(c).maxCoeff() > x.col(c).minCoeff(), Errc::Precondition, "hsic_test: constant column in x");

  Eigen::MatrixXd k = detail::rbf_gram(x);
  Eigen::MatrixXd l = detail::rbf_gram(e);
  const double mu_x = detail::off_diagonal_mean(k);
  const double mu_y = detail::off_diagonal_mean(l);
  detail::center_in_place(k);
  detail::center_in_place(l);
  const double nd = static_cast<double>(n);
  const double stat = k.cwiseProduct(l).sum() / nd;

  TestResult res;
  res.statistic = stat;
  if (method == HsicMethod::Gamma) {
    res.method = "hsic-gamma";
    double var_sum = 0.0;
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < n; ++r) {
        if (r == c) continue;
        const double v = k(r, c) * l(r, c) / 6.0;
        var_sum += v * v;
      }
    double var = var_sum / (nd * (nd - 1));
    var *= 72.0 * (nd - 4) * (nd - 5) / (nd * (nd - 1) * (nd - 2) * (nd - 3));
    const double mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / nd;
    if (!(var > 0) || !(mean > 0)) {
      res.p_value = 1.0;
      return res;
    }
    const double shape = mean * mean / var;
    const double scale = var * nd / mean;
    res.p_value = std::clamp(dist::gamma_sf(stat, shape, scale), 0.0, 1.0);
  } else {
    res.method = "hsic-permutation";
    require(n_perm >= 1, Errc::Precondition, "hsic_test: n_perm must be >= 1");
    Rng rng = make_rng(seed);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    int exceed = 0;
    for (int b = 0; b < n_perm; ++b) {
      shuffle(perm, rng);
      double s = 0.0;
      for (Eigen::Index c = 0; c < n; ++c) {
        const auto pc = perm[static_cast<std::size_t>(c)];
        for (Eigen::Index r = 0; r < n; ++r) s += k(r, c) * l(perm[static_cast<std::size_t>(r)], pc);
      }
      if (s / nd >= stat) ++exceed;
    }
    res.p_value = (1.0 + exceed) / (1.0 + n_perm);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Uniformity tests (fully specified null)

/// Asymptotic CDF of the Anderson-Darling statistic (Marsaglia & Marsaglia,
/// 2004), returned as the upper tail to keep precision for large z.
inline double ad_asymptotic_sf(double z) {
  if (z <= 0) return 1.0;
  if (z < 2.0) {
    const double cdf = std::exp(-1.2337141 / z) / std::sqrt(z) *
                       (2.00012 + (.247105 - (.0649821 - (.0347962 - (.011672 - .00168691 * z) * z) * z) * z) * z);
    return 1.0 - cdf;
  }
  const double inner = std::exp(1.0776 - (2.30695 - (.43424 - (.082433 - (.008056 - .0003146 * z) * z) * z) * z) * z);
  return -std::expm1(-inner);
}

/// Finite-n correction added to the asymptotic CDF value x.
inline double ad_finite_n_correction(Eigen::Index n_obs, double x) {
  const double n = static_cast<double>(n_obs);
  if (x > .8) return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
  const double c = .01265 + .1757 / n;
  if (x < c) {
    double t = x / c;
    t = std::sqrt(t) * (1. - t) * (49 * t - 102);
    return t * (.0037 / (n * n) + .00078 / n + .00006) / n;
  }
  double t = (x - c) / (.8 - c);
  t = -.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
  return t * (.04213 / n + .01365 / (n * n)) / n;
}

/// Upper-tail probability of A^2 for a sample of size n under U(0,1).
inline double ad_p_value(double a2, Eigen::Index n) {
  const double sf = ad_asymptotic_sf(a2);
  const double p = sf - ad_finite_n_correction(n, 1.0 - sf);
  return std::clamp(p, 0.0, 1.0);
}

inline void require_open_unit(const Eigen::VectorXd& u) {
  require(u.size() >= 1, Errc::Precondition, "uniformity test needs at least one value");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!(u[i] > 0.0 && u[i] < 1.0))
      fail(Errc::OutOfRange, "value " + std::to_string(u[i]) + " at position " + std::to_string(i) + " not in (0,1)");
}

inline TestResult ad_uniform_test(const Eigen::VectorXd& u) {
  require_open_unit(u);
  std::vector<double> s(u.data(), u.data() + u.size());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(2 * i + 1) * (std::log(s[i]) + std::log1p(-s[n - 1 - i]));
  const double nd = static_cast<double>(n);
  const double a2 = -nd - acc / nd;
  return {a2, ad_p_value(a2, u.size()), "anderson-darling"};
}

/// Kolmogorov limiting survival function Q(lambda) = P(K > lambda).
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0) return 1.0;
  constexpr double pi = 3.141592653589793238462643383279502884;
  if (lambda < 1.18) {
    // Jacobi-transformed series, fast for small lambda
    const double c = -pi * pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int k = 1; k <= 9; k += 2) sum += std::exp(c * k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline TestResult ks_uniform_test(const Eigen::VectorXd& u) {
  require_open_unit(u);
  std::vector<double> s(u.data(), u.data() + u.size());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, hi - s[i], s[i] - lo});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d), "kolmogorov-smirnov"};
}

// ---------------------------------------------------------------------------
// Permutation significance

/// A model fitted on training rows and bound to a block of evaluation rows.
/// loss() is the summed loss over the block; loss_permuted(col, perm) is the
/// same with covariate `col` (0-based within the candidate set) replaced by
/// its values at rows perm[r] of the block. No refitting happens in between.
template <class M>
concept PermutationLossModel = requires(const M& m, int col, std::span<const int> perm) {
  { m.loss() } -> std::convertible_to<double>;
  { m.loss_permuted(col, perm) } -> std::convertible_to<double>;
};

/// Assigns each of the n rows to one of `folds` folds, balanced, in a
/// seed-determined order.
inline std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed);
  shuffle(idx, rng);
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < idx.size(); ++i) out[i % static_cast<std::size_t>(folds)].push_back(idx[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  return out;
}

/// Cross-fitted permutation importance. For each fold the model is fitted on
/// the remaining rows and evaluated on the fold; covariate i is then permuted
/// within each fold. p_i = (1 + #{b : L_b <= L_0}) / (n_perm + 1).
///
/// `refit(x_train, y_train, x_eval, y_eval)` must return a
/// PermutationLossModel.
template <class Refit>
std::vector<double> perm_significance(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Refit&& refit, int n_perm,
                                      std::uint64_t seed, int folds = 5) {
  require(n_perm >= 50, Errc::Precondition, "perm_significance needs n_perm >= 50");
  require(folds >= 2, Errc::Precondition, "perm_significance needs at least two folds");
  const auto fold_rows = make_folds(x.rows(), folds, derive_seed(seed, {0}));

  using Model = std::decay_t<decltype(refit(x, y, x, y))>;
  static_assert(PermutationLossModel<Model>);
  std::vector<Model> models;
  models.reserve(fold_rows.size());
  for (std::size_t f = 0; f < fold_rows.size(); ++f) {
    std::vector<Eigen::Index> train;
    for (std::size_t g = 0; g < fold_rows.size(); ++g)
      if (g != f) train.insert(train.end(), fold_rows[g].begin(), fold_rows[g].end());
    std::sort(train.begin(), train.end());
    models.push_back(refit(take_rows(x, train), take_rows(y, train), take_rows(x, fold_rows[f]),
                           take_rows(y, fold_rows[f])));
  }

  double base = 0.0;
  for (const auto& m : models) base += m.loss();
  // losses are summed in a fixed order; the tolerance absorbs rounding when a
  // permutation leaves the predictions unchanged
  const double tol = 1e-12 * std::max(1.0, std::fabs(base));

  std::vector<double> p(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    int not_worse = 0;
    for (int b = 0; b < n_perm; ++b) {
      double loss = 0.0;
      for (std::size_t f = 0; f < models.size(); ++f) {
        Rng rng = make_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(col), static_cast<std::uint64_t>(b), f}));
        const auto perm = random_permutation(static_cast<int>(fold_rows[f].size()), rng);
        loss += models[f].loss_permuted(static_cast<int>(col), perm);
      }
      if (loss <= base + tol) ++not_worse;
    }
    p[static_cast<std::size_t>(col)] = (1.0 + not_worse) / (1.0 + n_perm);
  }
  return p;
}

}  // namespace cause_sieve
