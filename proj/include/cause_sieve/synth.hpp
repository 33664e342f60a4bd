#pragma once

// Synthetic generators: the additive simulation grid, the three benchmarks
// and the linear chain. Every generator is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cause_sieve/csv.hpp"
#include "cause_sieve/distributions.hpp"
#include "cause_sieve/error.hpp"
#include "cause_sieve/model.hpp"
#include "cause_sieve/perlin.hpp"
#include "cause_sieve/random.hpp"

namespace cause_sieve {

struct GeneratedDataset {
  Dataset data;
  std::vector<int> true_pa;
  std::string generator_id;
  std::uint64_t seed = 0;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
};

/// Shape of the random functions; benchmark 2 uses a smoother, stronger one.
struct PerlinShape {
  int octaves = 2;
  double base_frequency = 0.5;
  double persistence = 0.5;
};

namespace synth_detail {

inline PerlinFunction make_fn(std::uint64_t seed, std::uint64_t slot, int dim, double amplitude,
                              const PerlinShape& shape = {}) {
  return PerlinFunction(PerlinSpec{derive_seed(seed, {0xf0, slot}), dim, shape.octaves, shape.base_frequency,
                                   amplitude, shape.persistence});
}

/// Rows of N(0, R) with R = (1 - c) I + c 11'.
inline Eigen::MatrixXd equicorrelated_normal(Rng& rng, Eigen::Index n, int d, double c) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(d, d, c);
  r.diagonal().setOnes();
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(r).matrixL();
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = standard_normal(rng);
  return z * l.transpose();
}

/// Uniform on (-sqrt 3, sqrt 3): mean 0, variance 1.
inline double centred_uniform(double u) { return std::numbers::sqrt3 * (2.0 * u - 1.0); }

inline std::vector<std::string> default_names(int p) {
  std::vector<std::string> names{"Y"};
  for (int j = 1; j <= p; ++j) names.push_back("X" + std::to_string(j));
  return names;
}

}  // namespace synth_detail

inline constexpr double kGridInteractionAmp = 4.0;
inline constexpr PerlinShape kGridInteractionShape{1, 0.35, 0.5};

/// Y = g1(X1) + g2(X2) + gamma * g12(X1, X2) + eta with (X1, X2) standard
/// bivariate normal with correlation c.

inline GeneratedDataset gen_additive_grid(std::uint64_t seed, Eigen::Index n, double c, double gamma) {
  require(c >= 0.0 && c <= 0.95, Errc::BadParam, "c must lie in [0, 0.95]");
  require(gamma >= 0.0 && gamma <= 1.0, Errc::BadParam, "gamma must lie in [0, 1]");
  require(n >= 100, Errc::BadParam, "n must be >= 100");
  const auto g1 = synth_detail::make_fn(seed, 1, 1, 1.0);
  const auto g2 = synth_detail::make_fn(seed, 2, 1, 1.0);
  // smooth and strong enough that gamma visibly moves the discovery rate
  const auto g12 = synth_detail::make_fn(seed, 3, 2, kGridInteractionAmp, kGridInteractionShape);
  Rng rng = make_rng(derive_seed(seed, {0xda7a}));
  const Eigen::MatrixXd x = synth_detail::equicorrelated_normal(rng, n, 2, c);
  Eigen::MatrixXd v(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = x(i, 0);
    const double x2 = x(i, 1);
    v(i, 0) = g1(x1) + g2(x2) + gamma * g12(x1, x2) + standard_normal(rng);
    v(i, 1) = x1;
    v(i, 2) = x2;
  }
  GeneratedDataset out{Dataset::from_matrix(std::move(v), synth_detail::default_names(2)), {1, 2}, "additive-grid",
                       seed};
  out.params["n"] = n;
  out.params["c"] = c;
  out.params["gamma"] = gamma;
  return out;
}

/// X1 = eta1, Y = gY(X1) + etaY, Xi = P1_i(Y) + P2_i(Y) * eta_i for i = 2..4.
/// eta1..eta4 are uniform with a Gaussian copula of pairwise correlation 0.5.
inline GeneratedDataset gen_benchmark1(std::uint64_t seed, Eigen::Index n) {
  require(n >= kMinRows, Errc::BadParam, "n must be >= 20");
  constexpr double rho = 0.5;
  const auto gy = synth_detail::make_fn(seed, 1, 1, 1.0);
  std::vector<PerlinFunction> loc;
  std::vector<PerlinFunction> scale;
  for (int i = 0; i < 3; ++i) {
    loc.push_back(synth_detail::make_fn(seed, 10 + i, 1, 1.0));
    scale.push_back(synth_detail::make_fn(seed, 20 + i, 1, 1.0));
  }
  Rng rng = make_rng(derive_seed(seed, {0xda7a}));
  const Eigen::MatrixXd z = synth_detail::equicorrelated_normal(rng, n, 4, rho);
  Eigen::MatrixXd v(n, 5);
  for (Eigen::Index r = 0; r < n; ++r) {
    double eta[4];
    for (int j = 0; j < 4; ++j) eta[j] = synth_detail::centred_uniform(dist::normal_cdf(z(r, j)));
    const double x1 = eta[0];
    const double y = gy(x1) + standard_normal(rng);
    v(r, 0) = y;
    v(r, 1) = x1;
    for (int i = 0; i < 3; ++i) {
      const double s = std::exp(std::clamp(scale[i](y), -1.5, 1.5));
      v(r, 2 + i) = loc[i](y) + s * eta[1 + i];
    }
  }
  GeneratedDataset out{Dataset::from_matrix(std::move(v), synth_detail::default_names(4)), {1}, "benchmark1", seed};
  out.params["n"] = n;
  out.params["noise_correlation"] = rho;
  return out;
}

/// (X1, X2, X3) normal with pairwise correlation 0.5, Y = gY(X1, X2, X3) + etaY.
inline GeneratedDataset gen_benchmark2(std::uint64_t seed, Eigen::Index n) {
  require(n >= kMinRows, Errc::BadParam, "n must be >= 20");
  constexpr double c = 0.5;
  const auto gy = synth_detail::make_fn(seed, 1, 3, 5.0, PerlinShape{1, 0.15, 0.5});
  Rng rng = make_rng(derive_seed(seed, {0xda7a}));
  const Eigen::MatrixXd x = synth_detail::equicorrelated_normal(rng, n, 3, c);
  Eigen::MatrixXd v(n, 4);
  for (Eigen::Index r = 0; r < n; ++r) {
    v(r, 0) = gy(x(r, 0), x(r, 1), x(r, 2)) + standard_normal(rng);
    v.row(r).tail(3) = x.row(r);
  }
  GeneratedDataset out{Dataset::from_matrix(std::move(v), synth_detail::default_names(3)), {1, 2, 3}, "benchmark2",
                       seed};
  out.params["n"] = n;
  out.params["c"] = c;
  return out;
}

/// Pareto tail index used by benchmark 3 when Y has parents.
inline double benchmark3_theta(const PerlinFunction& p, std::span<const double> x_pa) {
  return std::clamp(2.0 * std::exp(p(x_pa)), 0.5, 5.0);
}

/// Star graph between Y and X1..X3 with each edge oriented at random.
/// Parents of Y are N(0,1); Y | X_pa ~ Pareto(theta(X_pa)) on [1, inf);
/// children are Xi = P1_i(ln Y) + P2_i(ln Y) * eta_i with eta_i ~ U(0,1).
inline GeneratedDataset gen_benchmark3(std::uint64_t seed, Eigen::Index n) {
  require(n >= kMinRows, Errc::BadParam, "n must be >= 20");
  constexpr double kConstantTheta = 2.0;
  Rng orient = make_rng(derive_seed(seed, {0xed9e}));
  std::vector<int> pa;
  std::vector<int> ch;
  for (int j = 1; j <= 3; ++j) (uniform01(orient) < 0.5 ? pa : ch).push_back(j);

  std::optional<PerlinFunction> theta_fn;
  if (!pa.empty()) theta_fn.emplace(synth_detail::make_fn(seed, 1, static_cast<int>(pa.size()), 0.6));
  std::vector<PerlinFunction> loc;
  std::vector<PerlinFunction> scale;
  for (int i = 0; i < 3; ++i) {
    loc.push_back(synth_detail::make_fn(seed, 10 + i, 1, 1.0));
    scale.push_back(synth_detail::make_fn(seed, 20 + i, 1, 0.5));
  }

  Rng rng = make_rng(derive_seed(seed, {0xda7a}));
  Eigen::MatrixXd v(n, 4);
  double theta_min = std::numeric_limits<double>::infinity();
  double theta_max = -theta_min;
  for (Eigen::Index r = 0; r < n; ++r) {
    std::vector<double> x_pa;
    for (int j : pa) {
      v(r, j) = standard_normal(rng);
      x_pa.push_back(v(r, j));
    }
    const double theta = theta_fn ? benchmark3_theta(*theta_fn, x_pa) : kConstantTheta;
    theta_min = std::min(theta_min, theta);
    theta_max = std::max(theta_max, theta);
    // inverse CDF of Pareto(theta) with scale 1
    const double u = uniform01(rng);
    const double y = std::exp(-std::log1p(-u) / theta);
    v(r, 0) = y;
    const double ly = std::log(y);
    for (int j : ch) {
      const double s = std::exp(std::clamp(scale[j - 1](ly), -1.0, 1.0));
      v(r, j) = loc[j - 1](ly) + s * uniform01(rng);
    }
  }
  GeneratedDataset out{Dataset::from_matrix(std::move(v), synth_detail::default_names(3)), pa, "benchmark3", seed};
  out.params["n"] = n;
  out.params["children"] = ch;
  out.params["theta_min"] = theta_min;
  out.params["theta_max"] = theta_max;
  return out;
}

enum class ChainNoise { Gaussian, Uniform };

inline const char* chain_noise_name(ChainNoise k) { return k == ChainNoise::Gaussian ? "gaussian" : "uniform"; }

/// X1 = eta1, X2 = X1 + eta2, X0 = X1 + X2 + eta0 with unit-variance noise.
/// The target is X0.
inline GeneratedDataset gen_linear_chain(std::uint64_t seed, Eigen::Index n, ChainNoise noise) {
  require(n >= kMinRows, Errc::BadParam, "n must be >= 20");
  Rng rng = make_rng(derive_seed(seed, {0xda7a}));
  auto draw = [&] {
    return noise == ChainNoise::Gaussian ? standard_normal(rng) : synth_detail::centred_uniform(uniform01(rng));
  };
  Eigen::MatrixXd v(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double x1 = draw();
    const double x2 = x1 + draw();
    v(r, 0) = x1 + x2 + draw();
    v(r, 1) = x1;
    v(r, 2) = x2;
  }
  GeneratedDataset out{Dataset::from_matrix(std::move(v), {"X0", "X1", "X2"}), {1, 2},
                       std::string("linear-chain-") + chain_noise_name(noise), seed};
  out.params["n"] = n;
  out.params["noise"] = chain_noise_name(noise);
  return out;
}

/// Generator ids accepted by generate().
inline const std::vector<std::string>& generator_ids() {
  static const std::vector<std::string> ids{"additive-grid", "benchmark1",          "benchmark2",
                                            "benchmark3",    "linear-chain-gaussian", "linear-chain-uniform"};
  return ids;
}

/// Dispatch by id. `c` and `gamma` are used by the additive grid only.
inline GeneratedDataset generate(const std::string& id, std::uint64_t seed, Eigen::Index n, double c = 0.5,
                                 double gamma = 0.5) {
  if (id == "additive-grid") return gen_additive_grid(seed, n, c, gamma);
  if (id == "benchmark1") return gen_benchmark1(seed, n);
  if (id == "benchmark2") return gen_benchmark2(seed, n);
  if (id == "benchmark3") return gen_benchmark3(seed, n);
  if (id == "linear-chain-gaussian") return gen_linear_chain(seed, n, ChainNoise::Gaussian);
  if (id == "linear-chain-uniform") return gen_linear_chain(seed, n, ChainNoise::Uniform);
  fail(Errc::BadParam, "unknown generator '" + id + "'");
}

/// Function class under which a generator's target equation holds.
inline FunctionClass natural_class(const std::string& id) {
  if (id == "benchmark3") return FunctionClass::cpcm(ParametricFamily::Pareto);
  if (id.starts_with("linear-chain")) return FunctionClass::linear();
  return FunctionClass::additive();
}

inline std::string sidecar_json(const GeneratedDataset& g) {
  nlohmann::ordered_json j;
  j["generator_id"] = g.generator_id;
  j["seed"] = g.seed;
  j["true_pa"] = g.true_pa;
  j["params"] = g.params;
  return j.dump(2) + "\n";
}

/// Writes `<stem>.csv` and `<stem>.json`.
inline void write_generated(const GeneratedDataset& g, const std::string& stem) {
  csv::write_file(stem + ".csv", csv::to_string(g.data));
  csv::write_file(stem + ".json", sidecar_json(g));
}

}  // namespace cause_sieve
