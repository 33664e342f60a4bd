#pragma once

// Domain types shared by every estimator: datasets, function classes,
// candidate parent sets, and configuration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "cause_sieve/error.hpp"
#include "cause_sieve/random.hpp"

namespace cause_sieve {

/// Smallest sample size any test in this library is run on.
inline constexpr Eigen::Index kMinRows = 20;

// ---------------------------------------------------------------------------
// Function classes

enum class ParametricFamily { Gaussian, Gamma, Pareto };

constexpr std::string_view family_name(ParametricFamily f) noexcept {
  switch (f) {
    case ParametricFamily::Gaussian: return "gaussian";
    case ParametricFamily::Gamma: return "gamma";
    case ParametricFamily::Pareto: return "pareto";
  }
  return "?";
}

/// Structural restriction placed on the target's mechanism.
class FunctionClass {
 public:
  enum class Kind { Linear, Additive, LocationScale, Cpcm };

  static FunctionClass linear() { return FunctionClass(Kind::Linear, std::nullopt); }
  static FunctionClass additive() { return FunctionClass(Kind::Additive, std::nullopt); }
  static FunctionClass location_scale() { return FunctionClass(Kind::LocationScale, std::nullopt); }
  static FunctionClass cpcm(ParametricFamily f) { return FunctionClass(Kind::Cpcm, f); }

  /// Parses the command-line spelling: linear, additive, location-scale,
  /// cpcm:gaussian, cpcm:gamma, cpcm:pareto.
  static FunctionClass parse(std::string_view s) {
    if (s == "linear") return linear();
    if (s == "additive") return additive();
    if (s == "location-scale") return location_scale();
    if (s == "cpcm:gaussian") return cpcm(ParametricFamily::Gaussian);
    if (s == "cpcm:gamma") return cpcm(ParametricFamily::Gamma);
    if (s == "cpcm:pareto") return cpcm(ParametricFamily::Pareto);
    fail(Errc::BadConfig, "unknown function class '" + std::string(s) + "'");
  }

  Kind kind() const noexcept { return kind_; }
  const std::optional<ParametricFamily>& family() const noexcept { return family_; }

  /// Classes for which a probability integral transform always yields uniform
  /// noise, so the distributional question is vacuous.
  bool distribution_exempt() const noexcept { return kind_ != Kind::Cpcm; }

  std::string label() const {
    switch (kind_) {
      case Kind::Linear: return "linear";
      case Kind::Additive: return "additive";
      case Kind::LocationScale: return "location-scale";
      case Kind::Cpcm: return "cpcm:" + std::string(family_name(*family_));
    }
    return "?";
  }

  friend bool operator==(const FunctionClass&, const FunctionClass&) = default;

 private:
  FunctionClass(Kind k, std::optional<ParametricFamily> f) : kind_(k), family_(f) {}

  Kind kind_;
  std::optional<ParametricFamily> family_;
};

// ---------------------------------------------------------------------------
// Candidate sets

/// Non-empty set of 1-based covariate indices, stored sorted.
class CandidateSet {
 public:
  explicit CandidateSet(std::vector<int> members) : members_(std::move(members)) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
    require(!members_.empty(), Errc::Precondition, "candidate set must be non-empty");
    require(members_.front() >= 1, Errc::Precondition, "covariate indices are 1-based");
  }
  CandidateSet(std::initializer_list<int> members) : CandidateSet(std::vector<int>(members)) {}

  const std::vector<int>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  int operator[](std::size_t i) const { return members_[i]; }
  auto begin() const noexcept { return members_.begin(); }
  auto end() const noexcept { return members_.end(); }

  bool contains(int j) const { return std::binary_search(members_.begin(), members_.end(), j); }

  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (int m : members_) h = mix64(h ^ static_cast<std::uint64_t>(m));
    return h;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(members_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

  /// Ascending cardinality, then lexicographic.
  friend bool operator<(const CandidateSet& a, const CandidateSet& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a.members_ < b.members_;
  }

 private:
  std::vector<int> members_;
};

/// All 2^p - 1 non-empty subsets of {1..p}, ascending cardinality then
/// lexicographic.
inline std::vector<CandidateSet> enumerate_candidates(int p, int max_p) {
  require(p >= 1, Errc::Precondition, "need at least one covariate");
  require(p <= max_p, Errc::TooManyCovariates,
          std::to_string(p) + " covariates exceed the cap of " + std::to_string(max_p));
  std::vector<CandidateSet> out;
  out.reserve((std::size_t{1} << p) - 1);
  std::vector<int> idx;
  for (int k = 1; k <= p; ++k) {
    idx.resize(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 1);
    for (;;) {
      out.emplace_back(idx);
      int i = k - 1;
      while (i >= 0 && idx[static_cast<std::size_t>(i)] == p - k + i + 1) --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

/// Header plus numeric rows, as read from a CSV file.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Validated n x (p+1) table. The target is stored in column 0; covariates
/// follow in their original order and are addressed 1..p.
class Dataset {
 public:
  Dataset() = default;

  Eigen::Index n() const noexcept { return values_.rows(); }
  int p() const noexcept { return static_cast<int>(values_.cols()) - 1; }
  static constexpr int target_index = 0;

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& target_name() const { return names_.front(); }
  const std::string& covariate_name(int j) const { return names_.at(static_cast<std::size_t>(j)); }

  Eigen::VectorXd y() const { return values_.col(0); }
  Eigen::VectorXd covariate(int j) const {
    require(j >= 1 && j <= p(), Errc::Precondition, "covariate index out of range");
    return values_.col(j);
  }

  /// n x |s| block of the covariates in s.
  Eigen::MatrixXd block(const CandidateSet& s) const {
    Eigen::MatrixXd x(n(), static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) {
      require(s[k] <= p(), Errc::Precondition, "candidate member " + std::to_string(s[k]) + " exceeds p");
      x.col(static_cast<Eigen::Index>(k)) = values_.col(s[k]);
    }
    return x;
  }

  /// Builds and validates. Column 0 of `values` must be the target.
  static Dataset from_matrix(Eigen::MatrixXd values, std::vector<std::string> names) {
    Dataset d;
    d.values_ = std::move(values);
    d.names_ = std::move(names);
    d.check();
    return d;
  }

 private:
  void check() const {
    require(static_cast<Eigen::Index>(names_.size()) == values_.cols(), Errc::Precondition,
            "column names do not match column count");
    require(values_.cols() >= 2, Errc::Precondition, "need a target and at least one covariate");
    std::unordered_set<std::string> seen;
    for (const auto& nm : names_)
      require(seen.insert(nm).second, Errc::DuplicateName, "duplicate column name '" + nm + "'");
    for (Eigen::Index c = 0; c < values_.cols(); ++c)
      for (Eigen::Index r = 0; r < values_.rows(); ++r)
        if (!std::isfinite(values_(r, c)))
          fail(Errc::NonFiniteEntry, "row " + std::to_string(r + 1) + ", column '" +
                                         names_[static_cast<std::size_t>(c)] + "'");
    require(values_.rows() >= kMinRows, Errc::TooFewRows,
            std::to_string(values_.rows()) + " rows, need at least " + std::to_string(kMinRows));
    for (Eigen::Index c = 1; c < values_.cols(); ++c) {
      const auto col = values_.col(c);
      if (col.maxCoeff() == col.minCoeff())
        fail(Errc::ConstantColumn, "covariate '" + names_[static_cast<std::size_t>(c)] + "' is constant");
    }
  }

  Eigen::MatrixXd values_;
  std::vector<std::string> names_;
};

/// Moves the target column to the front and validates.
inline Dataset validate_dataset(const RawTable& raw, std::string_view target_name) {
  const auto it = std::find(raw.header.begin(), raw.header.end(), target_name);
  if (it == raw.header.end()) fail(Errc::MissingTarget, "target column '" + std::string(target_name) + "' not found");
  const auto target = static_cast<std::size_t>(it - raw.header.begin());
  const auto cols = raw.header.size();

  std::vector<std::size_t> order{target};
  for (std::size_t c = 0; c < cols; ++c)
    if (c != target) order.push_back(c);

  Eigen::MatrixXd values(static_cast<Eigen::Index>(raw.rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    require(raw.rows[r].size() == cols, Errc::MalformedCsv,
            "row " + std::to_string(r + 1) + " has " + std::to_string(raw.rows[r].size()) + " fields, expected " +
                std::to_string(cols));
    for (std::size_t k = 0; k < cols; ++k)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = raw.rows[r][order[k]];
  }
  std::vector<std::string> names;
  for (auto c : order) names.push_back(raw.header[c]);
  return Dataset::from_matrix(std::move(values), std::move(names));
}

// ---------------------------------------------------------------------------
// Probability integral transform

/// (average rank - 0.5) / n. Strictly inside (0,1) and invariant under
/// strictly increasing transforms of the input.
inline Eigen::VectorXd pit_rescale(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  require(n >= 1, Errc::Precondition, "pit_rescale needs at least one value");
  require(x.allFinite(), Errc::Precondition, "pit_rescale input must be finite");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  Eigen::VectorXd out(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && x[idx[static_cast<std::size_t>(j + 1)]] == x[idx[static_cast<std::size_t>(i)]]) ++j;
    // ranks i+1 .. j+1 share their average
    const double rank = 0.5 * static_cast<double>(i + j + 2);
    for (Eigen::Index k = i; k <= j; ++k) out[idx[static_cast<std::size_t>(k)]] = (rank - 0.5) / static_cast<double>(n);
    i = j + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class BandwidthRule { Silverman, CrossValidation };

struct SmootherConfig {
  BandwidthRule bandwidth_rule = BandwidthRule::Silverman;
  int backfit_max_iter = 50;
  double backfit_tol = 1e-6;
  /// Relative to sd(Y): the fitted scale is never below sigma_floor * sd(Y).
  double sigma_floor = 1e-6;

  void validate() const {
    require(backfit_max_iter >= 1, Errc::BadConfig, "backfit_max_iter must be >= 1");
    require(backfit_tol > 0, Errc::BadConfig, "backfit_tol must be > 0");
    require(sigma_floor > 0, Errc::BadConfig, "sigma_floor must be > 0");
  }
};

enum class HsicMethod { Gamma, Permutation };

struct HsicConfig {
  HsicMethod method = HsicMethod::Gamma;
  int n_perm = 1000;
};

/// How the significance p-values enter the score.
enum class SignificanceScore {
  OneMinusPLog,  ///< ln(1 - max p), in (-inf, 0]
  NegLogP,       ///< -ln(max p), in [0, inf)
};

struct DiscoveryConfig {
  double alpha = 0.05;
  std::array<double, 3> lambdas{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
  HsicConfig hsic{};
  SmootherConfig smoother{};
  int max_p = 12;
  int significance_permutations = 99;
  int significance_folds = 5;
  SignificanceScore significance_score = SignificanceScore::OneMinusPLog;
  /// 0 selects the hardware concurrency.
  unsigned threads = 0;

  void validate() const {
    require(alpha > 0 && alpha < 1, Errc::BadConfig, "alpha must lie in (0,1)");
    for (double l : lambdas) require(l >= 0 && std::isfinite(l), Errc::BadConfig, "lambdas must be >= 0");
    require(max_p >= 1 && max_p <= 20, Errc::BadConfig, "max_p must lie in [1,20]");
    require(significance_permutations >= 50, Errc::BadConfig, "significance_permutations must be >= 50");
    require(significance_folds >= 2, Errc::BadConfig, "significance_folds must be >= 2");
    require(hsic.n_perm >= 1, Errc::BadConfig, "hsic n_perm must be >= 1");
    smoother.validate();
  }
};

// ---------------------------------------------------------------------------
// Noise recovery result

struct NoiseRecovery {
  Eigen::VectorXd eps;                ///< recovered noise, every entry in (0,1)
  std::vector<double> significance_p; ///< one p-value per member of `set`
  double fit_loss = 0.0;              ///< in-sample MSE of the mean component
  FunctionClass f_class = FunctionClass::additive();
  CandidateSet set{1};
};

}  // namespace cause_sieve
