#pragma once

// Monte-Carlo checks of the identifiability lemmas and counterexamples.
// Each check returns a report with its rates or minima and a pass flag.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cause_sieve/discover.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/parallel.hpp"
#include "cause_sieve/random.hpp"
#include "cause_sieve/stattests.hpp"
#include "cause_sieve/synth.hpp"

namespace cause_sieve {

struct TheoryCheckReport {
  std::string check_id;
  int n_reps = 0;
  Eigen::Index n_samples = 0;
  nlohmann::ordered_json result = nlohmann::ordered_json::object();
  bool pass = false;
  std::uint64_t seed = 0;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["check_id"] = check_id;
    j["n_reps"] = n_reps;
    j["n_samples"] = n_samples;
    j["result"] = result;
    j["pass"] = pass;
    j["seed"] = seed;
    return j.dump(2) + "\n";
  }
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  double alpha = 0.05;
};

namespace verify_detail {

/// Share of reps in which the HSIC test of (x, xi(rep)) rejects at alpha.
/// `draw(rng)` returns the pair (conditioning block, tested variable).
template <class Draw>
double rejection_rate(int n_reps, const VerifyOptions& opt, std::uint64_t arm, Draw&& draw) {
  std::vector<char> rejected(static_cast<std::size_t>(n_reps), 0);
  parallel_for(static_cast<std::size_t>(n_reps), opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(opt.seed, {arm, r}));
    const auto [x, xi] = draw(rng);
    rejected[r] = hsic_test(x, xi).p_value < opt.alpha;
  });
  return static_cast<double>(std::count(rejected.begin(), rejected.end(), 1)) / n_reps;
}

/// sup |F1 - F2| for two ascending samples.
inline double ks_two_sample_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  return d;
}

inline Eigen::MatrixXd column(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace verify_detail

// ---------------------------------------------------------------------------
// a + bX =d X

enum class EqualityDist { Exponential, Lognormal };

inline const char* equality_dist_name(EqualityDist d) {
  return d == EqualityDist::Exponential ? "exponential" : "lognormal";
}

struct GridAxis {
  double lo;
  double hi;
  double step;

  std::vector<double> points() const {
    std::vector<double> v;
    const int m = static_cast<int>(std::llround((hi - lo) / step));
    for (int i = 0; i <= m; ++i) v.push_back(lo + step * i);
    return v;
  }
};

/// Two-sample KS distance between a + bX and an independent copy of X.
class DistEqualityScan {
 public:
  DistEqualityScan(EqualityDist dist, Eigen::Index n, std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, {0xd15}));
    auto draw = [&] {
      return dist == EqualityDist::Exponential ? -std::log1p(-uniform01(rng)) : std::exp(standard_normal(rng));
    };
    for (Eigen::Index i = 0; i < n; ++i) x_.push_back(draw());
    for (Eigen::Index i = 0; i < n; ++i) ref_.push_back(draw());
    std::sort(x_.begin(), x_.end());
    std::sort(ref_.begin(), ref_.end());
  }

  double median() const {
    const std::size_t m = x_.size();
    return m % 2 ? x_[m / 2] : 0.5 * (x_[m / 2 - 1] + x_[m / 2]);
  }

  double distance(double a, double b) const {
    std::vector<double> t(x_.size());
    const std::size_t m = x_.size();
    for (std::size_t i = 0; i < m; ++i) t[i] = a + b * (b >= 0 ? x_[i] : x_[m - 1 - i]);
    return verify_detail::ks_two_sample_sorted(t, ref_);
  }

 private:
  std::vector<double> x_;
  std::vector<double> ref_;
};

inline TheoryCheckReport check_dist_equality(EqualityDist dist, Eigen::Index n = 20000,
                                             GridAxis grid_a = {-4.0, 4.0, 0.05}, GridAxis grid_b = {-2.0, 2.0, 0.05},
                                             const VerifyOptions& opt = {}) {
  require(grid_a.step > 0 && grid_a.step <= 0.05 && grid_b.step > 0 && grid_b.step <= 0.05, Errc::BadParam,
          "grid steps must be in (0, 0.05]");
  require(grid_a.lo <= -4 && grid_a.hi >= 4 && grid_b.lo <= -2 && grid_b.hi >= 2, Errc::BadParam,
          "grid must cover [-4,4] x [-2,2]");
  const DistEqualityScan scan(dist, n, opt.seed);
  const auto as = grid_a.points();
  const auto bs = grid_b.points();
  const std::size_t na = as.size();
  const std::size_t nb = bs.size();
  std::vector<double> ks(na * nb);
  parallel_for(nb, opt.threads, [&](std::size_t j) {
    for (std::size_t i = 0; i < na; ++i) ks[j * na + i] = scan.distance(as[i], bs[j]);
  });
  auto at = [&](std::size_t i, std::size_t j) { return ks[j * na + i]; };

  struct Minimum {
    double a, b, ks;
  };
  std::vector<Minimum> minima;
  for (std::size_t j = 0; j < nb; ++j)
    for (std::size_t i = 0; i < na; ++i) {
      bool local = true;
      for (int dj = -1; dj <= 1 && local; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (!di && !dj) continue;
          const auto ii = static_cast<std::ptrdiff_t>(i) + di;
          const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(na) || jj >= static_cast<std::ptrdiff_t>(nb)) continue;
          if (at(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)) < at(i, j)) {
            local = false;
            break;
          }
        }
      if (local) minima.push_back({as[i], bs[j], at(i, j)});
    }
  std::sort(minima.begin(), minima.end(), [](const Minimum& l, const Minimum& r) { return l.ks < r.ks; });

  const double med = scan.median();
  const double target[2][2] = {{0.0, 1.0}, {2.0 * med, -1.0}};
  auto near = [](double a, double b, const double* t) { return std::hypot(a - t[0], b - t[1]) <= 0.1; };
  bool pass = minima.size() >= 2;
  if (pass) {
    const bool direct = near(minima[0].a, minima[0].b, target[0]) && near(minima[1].a, minima[1].b, target[1]);
    const bool swapped = near(minima[0].a, minima[0].b, target[1]) && near(minima[1].a, minima[1].b, target[0]);
    pass = direct || swapped;
  }
  int stray = 0;
  if (!minima.empty()) {
    const double cut = 1.5 * minima[0].ks;
    for (std::size_t j = 0; j < nb; ++j)
      for (std::size_t i = 0; i < na; ++i)
        if (at(i, j) <= cut && !near(as[i], bs[j], target[0]) && !near(as[i], bs[j], target[1])) ++stray;
  }
  pass = pass && stray == 0;

  TheoryCheckReport rep{"dist-equality", 1, n};
  rep.seed = opt.seed;
  rep.result["distribution"] = equality_dist_name(dist);
  rep.result["median"] = med;
  rep.result["expected_minima"] = {{0.0, 1.0}, {2.0 * med, -1.0}};
  nlohmann::ordered_json top = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(5, minima.size()); ++k)
    top.push_back({{"a", minima[k].a}, {"b", minima[k].b}, {"ks", minima[k].ks}});
  rep.result["minima"] = top;
  rep.result["points_near_minimum_outside_targets"] = stray;
  rep.pass = pass;
  return rep;
}

// ---------------------------------------------------------------------------
// Inseparability lemma

/// Dependence arm and independence control for each part. Components are
/// independent N(0,1) except in part 4, where (X1, X2, X3) has pairwise
/// correlation 0.5.
inline TheoryCheckReport check_cool_lemma(int part, Eigen::Index n = 2000, int n_reps = 100,
                                          const VerifyOptions& opt = {}) {
  require(part >= 1 && part <= 4, Errc::BadParam, "part must be 1..4");
  require(n >= kMinRows && n_reps >= 1, Errc::BadParam, "need n >= 20 and n_reps >= 1");
  auto cube = [](double x) { return x * x * x; };
  auto one_plus_sq = [](double x) { return 1.0 + x * x; };

  auto arm = [&](bool control) {
    return [=](Rng& rng) {
      std::vector<double> x1(static_cast<std::size_t>(n));
      std::vector<double> xi(static_cast<std::size_t>(n));
      const Eigen::MatrixXd z = part == 4 ? synth_detail::equicorrelated_normal(rng, n, 3, 0.5)
                                          : synth_detail::equicorrelated_normal(rng, n, 2, 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = z(i, 0);
        const double b = z(i, 1);
        double v = 0.0;
        switch (part) {
          case 1:
            // f(X1) (h1(X1) + h2(X2)); control: f = 1, h1 constant
            v = control ? 1.0 + cube(b) : one_plus_sq(a) * (cube(a) + cube(b));
            break;
          case 2:
            // f(X1) + h1(X1) h2(X2); control: f(X1) + h1(X1) + h2(X2) with f = -h1
            v = control ? -one_plus_sq(a) + one_plus_sq(a) + one_plus_sq(b) : a + one_plus_sq(a) * one_plus_sq(b);
            break;
          case 3:
            // f1(X1) + f2(X1) h(X2); control: constant f1, f2
            v = control ? 1.0 + 2.0 * b : std::sin(a) + std::exp(a) * b;
            break;
          case 4: {
            // f1(X1) + f2(X1) (X2 + X3); control: f1 = -E[X2 + X3 | X1], f2 = 1
            const double s = z(i, 1) + z(i, 2);
            v = control ? s - a : a + one_plus_sq(a) * s;
            break;
          }
        }
        x1[static_cast<std::size_t>(i)] = a;
        xi[static_cast<std::size_t>(i)] = v;
      }
      return std::pair{verify_detail::column(x1), Eigen::VectorXd(verify_detail::column(xi))};
    };
  };
  const double dep = verify_detail::rejection_rate(n_reps, opt, 2 * part, arm(false));
  const double ctl = verify_detail::rejection_rate(n_reps, opt, 2 * part + 1, arm(true));

  TheoryCheckReport rep{"cool-lemma:" + std::to_string(part), n_reps, n};
  rep.seed = opt.seed;
  rep.result["rejection_rate"] = dep;
  rep.result["control_rejection_rate"] = ctl;
  rep.pass = dep >= 0.95 && ctl <= 0.10;
  return rep;
}

// ---------------------------------------------------------------------------
// Gamma support exception

/// Y ~ Gamma(k1, scale), eta ~ Gamma(k2, scale), X1 = Y + eta: Y / X1 is
/// independent of X1. The control draws eta with twice the scale.
inline TheoryCheckReport check_gamma_support_exception(double k1 = 2.0, double k2 = 3.0, double scale = 1.0,
                                                       Eigen::Index n = 2000, int n_reps = 100,
                                                       const VerifyOptions& opt = {}) {
  require(k1 > 0 && k2 > 0 && scale > 0, Errc::BadParam, "shapes and scale must be positive");
  require(n >= kMinRows && n_reps >= 1, Errc::BadParam, "need n >= 20 and n_reps >= 1");
  auto arm = [&](double eta_scale) {
    return [=](Rng& rng) {
      Eigen::VectorXd x(n);
      Eigen::VectorXd ratio(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double y = gamma_draw(rng, k1, scale);
        const double e = gamma_draw(rng, k2, eta_scale);
        x[i] = y + e;
        ratio[i] = y / x[i];
      }
      return std::pair{Eigen::MatrixXd(x), ratio};
    };
  };
  const double equal = verify_detail::rejection_rate(n_reps, opt, 1, arm(scale));
  const double unequal = verify_detail::rejection_rate(n_reps, opt, 2, arm(2.0 * scale));

  TheoryCheckReport rep{"gamma-exception", n_reps, n};
  rep.seed = opt.seed;
  rep.result["k1"] = k1;
  rep.result["k2"] = k2;
  rep.result["scale"] = scale;
  rep.result["rejection_rate"] = equal;
  rep.result["control_rejection_rate"] = unequal;
  rep.pass = equal <= 0.12 && unequal >= 0.9;
  return rep;
}

// ---------------------------------------------------------------------------
// Gaussian CPCM exception

/// Draws X with density proportional to (x^2+1)^(-1/2) exp(x^2/(2(x^2+1)) - x^2/2)
/// by rejection from N(0,1). With Y | X ~ N(X/(X^2+1), 1/(X^2+1)) the joint
/// density is proportional to exp(-(x^2 + y^2 + x^2 y^2)/2 + xy), symmetric
/// in (x, y), so both directions are Gaussian CPCMs.
inline double draw_norm_exception_x(Rng& rng) {
  for (;;) {
    const double x = standard_normal(rng);
    const double q = x * x + 1.0;
    // ratio to the N(0,1) envelope, bounded by e^(1/2)
    const double ratio = std::exp(0.5 * x * x / q - 0.5) / std::sqrt(q);
    if (uniform01(rng) < ratio) return x;
  }
}

/// Direction decision: {1} when Y | X admits the Gaussian CPCM and X | Y does
/// not, otherwise the empty set.
inline std::vector<int> gaussian_cpcm_direction(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                const DiscoveryConfig& cfg) {
  Eigen::MatrixXd fwd(x.size(), 2);
  fwd << y, x;
  Eigen::MatrixXd rev(x.size(), 2);
  rev << x, y;
  const auto cls = FunctionClass::cpcm(ParametricFamily::Gaussian);
  DiscoveryConfig single = cfg;
  single.threads = 1;
  const bool forward = isd(Dataset::from_matrix(fwd, {"Y", "X1"}), cls, single).isd_estimate == std::vector<int>{1};
  const bool reverse = isd(Dataset::from_matrix(rev, {"X1", "Y"}), cls, single).isd_estimate == std::vector<int>{1};
  return forward && !reverse ? std::vector<int>{1} : std::vector<int>{};
}

inline TheoryCheckReport check_norm_exception(Eigen::Index n = 1000, int n_reps = 50, const VerifyOptions& opt = {}) {
  require(n >= kMinRows && n_reps >= 1, Errc::BadParam, "need n >= 20 and n_reps >= 1");
  auto run = [&](bool exception) {
    std::vector<char> empty(static_cast<std::size_t>(n_reps), 0);
    std::vector<char> forward(static_cast<std::size_t>(n_reps), 0);
    parallel_for(static_cast<std::size_t>(n_reps), opt.threads, [&](std::size_t r) {
      Rng rng = make_rng(derive_seed(opt.seed, {exception ? 1u : 2u, r}));
      Eigen::VectorXd x(n);
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (exception) {
          x[i] = draw_norm_exception_x(rng);
          const double q = x[i] * x[i] + 1.0;
          y[i] = x[i] / q + standard_normal(rng) / std::sqrt(q);
        } else {
          x[i] = standard_normal(rng);
          y[i] = std::sin(2.0 * x[i]) + (1.0 + 0.5 * x[i] * x[i]) * standard_normal(rng);
        }
      }
      DiscoveryConfig cfg;
      cfg.alpha = opt.alpha;
      cfg.seed = derive_seed(opt.seed, {3, r});
      const auto est = gaussian_cpcm_direction(x, y, cfg);
      empty[r] = est.empty();
      forward[r] = est == std::vector<int>{1};
    });
    const double k = n_reps;
    return std::pair{std::count(empty.begin(), empty.end(), 1) / k, std::count(forward.begin(), forward.end(), 1) / k};
  };
  const auto [exc_empty, exc_forward] = run(true);
  const auto [ctl_empty, ctl_forward] = run(false);

  TheoryCheckReport rep{"norm-exception", n_reps, n};
  rep.seed = opt.seed;
  rep.result["exception_empty_rate"] = exc_empty;
  rep.result["exception_forward_rate"] = exc_forward;
  rep.result["control_empty_rate"] = ctl_empty;
  rep.result["control_forward_rate"] = ctl_forward;
  const bool low_power = n < 200;
  rep.result["low_power"] = low_power;
  rep.pass = !low_power && exc_empty >= 0.7 && ctl_forward >= 0.7;
  return rep;
}

// ---------------------------------------------------------------------------
// Marginalizability of the linear chain

inline TheoryCheckReport check_marginalizability(ChainNoise noise, Eigen::Index n = 5000, int n_reps = 50,
                                                 const VerifyOptions& opt = {}) {
  require(n >= kMinRows && n_reps >= 1, Errc::BadParam, "need n >= 20 and n_reps >= 1");
  std::vector<std::vector<int>> estimates(static_cast<std::size_t>(n_reps));
  parallel_for(static_cast<std::size_t>(n_reps), opt.threads, [&](std::size_t r) {
    const std::uint64_t s = derive_seed(opt.seed, {r});
    DiscoveryConfig cfg;
    cfg.alpha = opt.alpha;
    cfg.seed = s;
    cfg.threads = 1;
    estimates[r] = isd(gen_linear_chain(s, n, noise).data, FunctionClass::linear(), cfg).isd_estimate;
  });
  const double k = n_reps;
  const double empty_rate = std::count_if(estimates.begin(), estimates.end(), [](auto& e) { return e.empty(); }) / k;
  const double one_rate =
      std::count_if(estimates.begin(), estimates.end(), [](auto& e) { return e == std::vector<int>{1}; }) / k;

  TheoryCheckReport rep{std::string("marginalizability:") + chain_noise_name(noise), n_reps, n};
  rep.seed = opt.seed;
  rep.result["noise"] = chain_noise_name(noise);
  rep.result["empty_rate"] = empty_rate;
  rep.result["one_rate"] = one_rate;
  rep.pass = noise == ChainNoise::Gaussian ? empty_rate >= 0.9 : one_rate >= 0.8;
  return rep;
}

/// Check ids accepted by run_check().
inline const std::vector<std::string>& check_ids() {
  static const std::vector<std::string> ids{
      "dist-equality",   "cool-lemma:1",   "cool-lemma:2",      "cool-lemma:3",
      "cool-lemma:4",    "gamma-exception", "norm-exception",   "marginalizability"};
  return ids;
}

/// Runs one check by id with its default sizes. "marginalizability" yields
/// one report per noise family.
inline std::vector<TheoryCheckReport> run_check(const std::string& id, const VerifyOptions& opt) {
  if (id == "dist-equality") return {check_dist_equality(EqualityDist::Exponential, 20000, {-4, 4, 0.05}, {-2, 2, 0.05}, opt)};
  if (id.starts_with("cool-lemma:") && id.size() == 12 && id[11] >= '1' && id[11] <= '4')
    return {check_cool_lemma(id[11] - '0', 2000, 100, opt)};
  if (id == "gamma-exception") return {check_gamma_support_exception(2.0, 3.0, 1.0, 2000, 100, opt)};
  if (id == "norm-exception") return {check_norm_exception(1000, 50, opt)};
  if (id == "marginalizability")
    return {check_marginalizability(ChainNoise::Gaussian, 5000, 50, opt),
            check_marginalizability(ChainNoise::Uniform, 5000, 50, opt)};
  fail(Errc::BadParam, "unknown check '" + id + "'");
}

}  // namespace cause_sieve
