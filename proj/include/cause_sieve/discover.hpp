#pragma once

// F-plausibility verdicts, the ISD intersection, score search, the empty
// parent test and the benchmark metrics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cause_sieve/distributions.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/parallel.hpp"
#include "cause_sieve/random.hpp"
#include "cause_sieve/regress.hpp"
#include "cause_sieve/stattests.hpp"

namespace cause_sieve {

/// Floor applied to every log-p term of the score.
inline constexpr double kLogFloor = -27.631021115928547;  // ln(1e-12)

struct PlausibilityVerdict {
  CandidateSet set{1};
  bool independent = false;
  double p_indep = 0.0;
  bool significant = false;
  double p_sig_max = 1.0;
  /// Vacuously true with p_dist = 1 for distribution-exempt classes.
  bool uniform = false;
  double p_dist = 0.0;
  bool plausible = false;
  /// Set when the candidate could not be evaluated (e.g. DomainViolation).
  std::optional<Errc> reason;
  std::string reason_detail;
};

struct ScoreRow {
  CandidateSet set{1};
  double independence = kLogFloor;
  double significance = kLogFloor;
  double distribution = kLogFloor;
  double total = -std::numeric_limits<double>::infinity();
};

struct CandidateEvaluation {
  PlausibilityVerdict verdict;
  ScoreRow row;
};

struct DiscoveryResult {
  std::vector<int> isd_estimate;
  std::vector<CandidateSet> plausible_sets;
  /// True when no candidate was plausible; isd_estimate is then empty.
  bool no_plausible_set = false;
  std::vector<PlausibilityVerdict> verdicts;
  std::vector<ScoreRow> score_table;
  CandidateSet score_estimate{1};
  FunctionClass f_class = FunctionClass::additive();
  DiscoveryConfig config;
};

namespace detail {

inline double clamped_log(double p) { return std::max(kLogFloor, std::log(std::max(p, 0.0))); }

/// Failures that mark a single candidate implausible instead of aborting.
inline bool candidate_local_error(Errc c) {
  switch (c) {
    case Errc::DomainViolation:
    case Errc::DegenerateTheta:
    case Errc::BackfitDiverged:
    case Errc::RankDeficient:
    case Errc::ConstantInput:
      return true;
    default:
      return false;
  }
}

inline bool smoothing_class(const FunctionClass& f) { return f.kind() != FunctionClass::Kind::Linear; }

inline std::optional<ParametricFamily> support_family(const FunctionClass& f) {
  if (f.kind() == FunctionClass::Kind::Cpcm && *f.family() != ParametricFamily::Gaussian) return f.family();
  return std::nullopt;
}

}  // namespace detail

/// Score components from the three p-values; exposed for direct testing.
inline ScoreRow score_from_p_values(const CandidateSet& s, double p_hsic, double p_sig_max, double p_dist,
                                    const DiscoveryConfig& cfg) {
  ScoreRow row;
  row.set = s;
  row.independence = detail::clamped_log(p_hsic);
  if (cfg.significance_score == SignificanceScore::OneMinusPLog) {
    row.significance = detail::clamped_log(1.0 - p_sig_max);
  } else {
    row.significance = -detail::clamped_log(p_sig_max);
  }
  row.distribution = detail::clamped_log(p_dist);
  row.total = cfg.lambdas[0] * row.independence + cfg.lambdas[1] * row.significance + cfg.lambdas[2] * row.distribution;
  return row;
}

/// Runs noise recovery for one candidate and answers the three questions.
/// The candidate's random stream is derived from (seed, set hash).
inline CandidateEvaluation evaluate_candidate(const Dataset& data, const CandidateSet& s, const FunctionClass& f_class,
                                              const DiscoveryConfig& cfg) {
  require(s.members().back() <= data.p(), Errc::Precondition, "candidate " + s.to_string() + " exceeds p");
  CandidateEvaluation out;
  out.verdict.set = s;
  out.row.set = s;
  const std::uint64_t stream = derive_seed(cfg.seed, {s.hash()});

  if (detail::smoothing_class(f_class) && s.size() > kMaxSmoothedSet) {
    out.verdict.reason = Errc::Precondition;
    out.verdict.reason_detail = "set larger than the smoothing cap";
    return out;
  }
  try {
    const SignificanceOptions sig{cfg.significance_permutations, cfg.significance_folds, derive_seed(stream, {1})};
    const NoiseRecovery rec = recover_noise(data, s, f_class, cfg.smoother, sig);
    const TestResult indep = hsic_test(data.block(s), rec.eps, cfg.hsic.method, cfg.hsic.n_perm, derive_seed(stream, {2}));
    const double p_sig_max = *std::max_element(rec.significance_p.begin(), rec.significance_p.end());
    const double p_dist = f_class.distribution_exempt() ? 1.0 : ad_uniform_test(rec.eps).p_value;

    PlausibilityVerdict& v = out.verdict;
    v.p_indep = indep.p_value;
    v.independent = indep.p_value > cfg.alpha;
    v.p_sig_max = p_sig_max;
    v.significant = p_sig_max < cfg.alpha;
    v.p_dist = p_dist;
    v.uniform = f_class.distribution_exempt() || p_dist > cfg.alpha;
    v.plausible = v.independent && v.significant && v.uniform;
    out.row = score_from_p_values(s, indep.p_value, p_sig_max, p_dist, cfg);
  } catch (const Error& e) {
    if (!detail::candidate_local_error(e.code())) throw;
    out.verdict = PlausibilityVerdict{};
    out.verdict.set = s;
    out.verdict.reason = e.code();
    out.verdict.reason_detail = e.what();
    out.row = ScoreRow{};
    out.row.set = s;
  }
  return out;
}

inline PlausibilityVerdict check_plausibility(const Dataset& data, const CandidateSet& s, const FunctionClass& f_class,
                                              const DiscoveryConfig& cfg = {}) {
  return evaluate_candidate(data, s, f_class, cfg).verdict;
}

inline ScoreRow score_set(const Dataset& data, const CandidateSet& s, const FunctionClass& f_class,
                          const DiscoveryConfig& cfg = {}) {
  return evaluate_candidate(data, s, f_class, cfg).row;
}

/// Intersection of the given sets; empty when the list is empty.
inline std::vector<int> intersect_all(const std::vector<CandidateSet>& sets) {
  if (sets.empty()) return {};
  std::vector<int> acc = sets.front().members();
  for (std::size_t i = 1; i < sets.size(); ++i) {
    std::vector<int> next;
    std::set_intersection(acc.begin(), acc.end(), sets[i].begin(), sets[i].end(), std::back_inserter(next));
    acc = std::move(next);
  }
  return acc;
}

/// First row with the largest total. Rows arrive in enumeration order, so
/// ties resolve to the smaller, then lexicographically first, set.
inline std::size_t argmax_row(const std::vector<ScoreRow>& rows) {
  require(!rows.empty(), Errc::Precondition, "empty score table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const bool better = rows[i].total > rows[best].total ||
                        (rows[i].total == rows[best].total && rows[i].set < rows[best].set);
    if (better) best = i;
  }
  return best;
}

/// Evaluates every candidate once and fills both the ISD and the score
/// fields. Results do not depend on the thread count.
inline DiscoveryResult discover(const Dataset& data, const FunctionClass& f_class, const DiscoveryConfig& cfg = {}) {
  cfg.validate();
  if (const auto fam = detail::support_family(f_class)) check_support(data.y(), *fam);
  const auto candidates = enumerate_candidates(data.p(), cfg.max_p);

  std::vector<CandidateEvaluation> evals(candidates.size());
  parallel_for(candidates.size(), cfg.threads,
               [&](std::size_t i) { evals[i] = evaluate_candidate(data, candidates[i], f_class, cfg); });

  DiscoveryResult r;
  r.f_class = f_class;
  r.config = cfg;
  for (auto& e : evals) {
    if (e.verdict.plausible) r.plausible_sets.push_back(e.verdict.set);
    r.verdicts.push_back(std::move(e.verdict));
    r.score_table.push_back(std::move(e.row));
  }
  r.isd_estimate = intersect_all(r.plausible_sets);
  r.no_plausible_set = r.plausible_sets.empty();
  r.score_estimate = r.score_table[argmax_row(r.score_table)].set;
  return r;
}

inline DiscoveryResult isd(const Dataset& data, const FunctionClass& f_class, const DiscoveryConfig& cfg = {}) {
  return discover(data, f_class, cfg);
}

inline DiscoveryResult score_search(const Dataset& data, const FunctionClass& f_class, const DiscoveryConfig& cfg = {}) {
  return discover(data, f_class, cfg);
}

// ---------------------------------------------------------------------------
// Empty parent set

/// AD test of F(Y; theta_hat) against U(0,1) with theta fitted globally.
inline TestResult empty_parent_test(const Eigen::VectorXd& y, ParametricFamily family) {
  require(y.size() >= kMinRows, Errc::Precondition, "empty_parent_test needs at least 20 observations");
  check_support(y, family);
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd u(y.size());
  switch (family) {
    case ParametricFamily::Gaussian: {
      const double mean = y.mean();
      const double sd = sample_sd(y);
      if (!(sd > 0)) fail(Errc::DegenerateTheta, "constant target");
      for (Eigen::Index i = 0; i < y.size(); ++i) u[i] = dist::normal_cdf((y[i] - mean) / sd);
      break;
    }
    case ParametricFamily::Pareto: {
      const double theta = n / y.array().log().sum();
      if (!(theta > 0) || !std::isfinite(theta)) fail(Errc::DegenerateTheta, "Pareto theta estimate");
      for (Eigen::Index i = 0; i < y.size(); ++i) u[i] = -std::expm1(-theta * std::log(y[i]));
      break;
    }
    case ParametricFamily::Gamma: {
      const double mean = y.mean();
      const double var = (y.array() - mean).square().mean();
      if (!(var > 0)) fail(Errc::DegenerateTheta, "constant target");
      for (Eigen::Index i = 0; i < y.size(); ++i) u[i] = dist::gamma_cdf(y[i], mean * mean / var, var / mean);
      break;
    }
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = detail::clamp_open_unit(u[i]);
  TestResult r = ad_uniform_test(u);
  r.method = "empty-parent-ad";
  return r;
}

inline TestResult empty_parent_test(const Dataset& data, ParametricFamily family) {
  return empty_parent_test(data.y(), family);
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double correct_causes_pct = 0.0;
  double no_false_positives_pct = 0.0;
};

/// Mean recovered fraction of the true parents, and the share of runs whose
/// estimate contains no non-parent. With an empty truth every run counts as
/// fully correct.
inline Metrics metrics(const std::vector<int>& true_pa, const std::vector<std::vector<int>>& estimates) {
  require(!estimates.empty(), Errc::Precondition, "metrics needs at least one estimate");
  std::vector<int> truth = true_pa;
  std::sort(truth.begin(), truth.end());
  double correct = 0.0;
  double clean = 0.0;
  for (auto est : estimates) {
    std::sort(est.begin(), est.end());
    std::vector<int> hit;
    std::set_intersection(est.begin(), est.end(), truth.begin(), truth.end(), std::back_inserter(hit));
    correct += truth.empty() ? 1.0 : static_cast<double>(hit.size()) / static_cast<double>(truth.size());
    if (hit.size() == est.size()) clean += 1.0;
  }
  const double runs = static_cast<double>(estimates.size());
  return {100.0 * correct / runs, 100.0 * clean / runs};
}

// ---------------------------------------------------------------------------
// JSON

namespace json_out {

inline std::string real(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

inline std::string int_array(const std::vector<int>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out + "]";
}

}  // namespace json_out

inline const char* significance_score_name(SignificanceScore s) {
  return s == SignificanceScore::OneMinusPLog ? "one_minus_p_log" : "neg_log_p";
}

/// Serialises a result with a fixed key order and 17 significant digits.
/// A total of -inf (candidate not evaluable) is written as null.
inline std::string to_json(const DiscoveryResult& r) {
  using namespace json_out;
  const DiscoveryConfig& c = r.config;
  std::string o = "{\n";
  o += "  \"isd_estimate\": " + int_array(r.isd_estimate) + ",\n";
  o += "  \"plausible_sets\": [";
  for (std::size_t i = 0; i < r.plausible_sets.size(); ++i)
    o += (i ? "," : "") + int_array(r.plausible_sets[i].members());
  o += "],\n  \"score_table\": [";
  for (std::size_t i = 0; i < r.score_table.size(); ++i) {
    const ScoreRow& s = r.score_table[i];
    o += i ? ",\n    " : "\n    ";
    o += "{\"set\": " + int_array(s.set.members()) + ", \"independence\": " + real(s.independence) +
         ", \"significance\": " + real(s.significance) + ", \"distribution\": " + real(s.distribution) +
         ", \"total\": " + real(s.total) + "}";
  }
  o += r.score_table.empty() ? "],\n" : "\n  ],\n";
  o += "  \"score_estimate\": " + int_array(r.score_estimate.members()) + ",\n";
  o += "  \"config\": {\"class\": " + string(r.f_class.label()) + ", \"alpha\": " + real(c.alpha) +
       ", \"lambdas\": [" + real(c.lambdas[0]) + "," + real(c.lambdas[1]) + "," + real(c.lambdas[2]) + "]" +
       ", \"hsic_method\": " + string(c.hsic.method == HsicMethod::Gamma ? "gamma" : "permutation") +
       ", \"hsic_permutations\": " + std::to_string(c.hsic.n_perm) + ", \"bandwidth_rule\": " +
       string(c.smoother.bandwidth_rule == BandwidthRule::Silverman ? "silverman" : "cv") +
       ", \"max_p\": " + std::to_string(c.max_p) +
       ", \"significance_permutations\": " + std::to_string(c.significance_permutations) +
       ", \"significance_folds\": " + std::to_string(c.significance_folds) +
       ", \"significance_score\": " + string(significance_score_name(c.significance_score)) + "},\n";
  o += "  \"seed\": " + std::to_string(c.seed) + ",\n";
  o += "  \"diagnostics\": {\"no_plausible_set\": " + std::string(r.no_plausible_set ? "true" : "false") +
       ", \"unevaluated\": [";
  bool first = true;
  for (const auto& v : r.verdicts) {
    if (!v.reason) continue;
    o += (first ? "" : ", ") + std::string("{\"set\": ") + int_array(v.set.members()) +
         ", \"reason\": " + string(std::string(errc_name(*v.reason))) + "}";
    first = false;
  }
  o += "]}\n}\n";
  return o;
}

}  // namespace cause_sieve
