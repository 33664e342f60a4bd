#pragma once

// Replicated runs over the generators: benchmark tables and the additive
// simulation grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cause_sieve/discover.hpp"
#include "cause_sieve/parallel.hpp"
#include "cause_sieve/synth.hpp"

namespace cause_sieve {

struct BenchmarkRun {
  std::vector<int> true_pa;
  std::vector<int> isd_estimate;
  std::vector<int> score_estimate;
};

struct BenchmarkSummary {
  std::vector<BenchmarkRun> runs;
  Metrics isd;
  Metrics score;
};

inline std::string benchmark_generator(int id) {
  require(id >= 1 && id <= 3, Errc::BadParam, "benchmark must be 1, 2 or 3");
  return "benchmark" + std::to_string(id);
}

/// Metrics when the truth differs between runs (benchmark 3).
inline Metrics metrics_per_run(const std::vector<BenchmarkRun>& runs, const std::vector<std::vector<int>>& est) {
  Metrics total;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Metrics m = metrics(runs[r].true_pa, {est[r]});
    total.correct_causes_pct += m.correct_causes_pct;
    total.no_false_positives_pct += m.no_false_positives_pct;
  }
  total.correct_causes_pct /= static_cast<double>(runs.size());
  total.no_false_positives_pct /= static_cast<double>(runs.size());
  return total;
}

/// Replicate r uses seed derive_seed(seed, {r}) for both data and discovery.
/// Replicates run in parallel; candidates within a replicate run serially.
inline BenchmarkSummary run_benchmark(int id, int reps, Eigen::Index n, const FunctionClass& f_class,
                                      DiscoveryConfig cfg) {
  require(reps >= 1, Errc::BadParam, "reps must be >= 1");
  const std::string gen = benchmark_generator(id);
  const unsigned outer = cfg.threads;
  const std::uint64_t root = cfg.seed;
  cfg.threads = 1;
  BenchmarkSummary out;
  out.runs.resize(static_cast<std::size_t>(reps));
  parallel_for(out.runs.size(), outer, [&](std::size_t r) {
    const std::uint64_t s = derive_seed(root, {r});
    const GeneratedDataset g = generate(gen, s, n);
    DiscoveryConfig c = cfg;
    c.seed = s;
    const DiscoveryResult res = discover(g.data, f_class, c);
    out.runs[r] = {g.true_pa, res.isd_estimate, res.score_estimate.members()};
  });
  std::vector<std::vector<int>> isd_est;
  std::vector<std::vector<int>> score_est;
  for (const auto& run : out.runs) {
    isd_est.push_back(run.isd_estimate);
    score_est.push_back(run.score_estimate);
  }
  out.isd = metrics_per_run(out.runs, isd_est);
  out.score = metrics_per_run(out.runs, score_est);
  return out;
}

struct GridRow {
  double c;
  double gamma;
  int rep;
  int discovered_count;
};

inline std::vector<double> linspace(double lo, double hi, int steps) {
  require(steps >= 1, Errc::BadParam, "steps must be >= 1");
  if (steps == 1) return {lo};
  std::vector<double> v;
  for (int i = 0; i < steps; ++i) v.push_back(lo + (hi - lo) * i / (steps - 1));
  return v;
}

/// ISD(Additive) over the (c, gamma) grid; rows ordered by c, gamma, rep.
inline std::vector<GridRow> simulate_grid(const std::vector<double>& cs, const std::vector<double>& gammas, int reps,
                                          Eigen::Index n, DiscoveryConfig cfg) {
  require(reps >= 1, Errc::BadParam, "reps must be >= 1");
  std::vector<GridRow> rows;
  for (double c : cs)
    for (double g : gammas)
      for (int r = 0; r < reps; ++r) rows.push_back({c, g, r, 0});
  const unsigned outer = cfg.threads;
  const std::uint64_t root = cfg.seed;
  cfg.threads = 1;
  parallel_for(rows.size(), outer, [&](std::size_t i) {
    GridRow& row = rows[i];
    const std::uint64_t s = derive_seed(root, {static_cast<std::uint64_t>(std::llround(row.c * 1e6)),
                                              static_cast<std::uint64_t>(std::llround(row.gamma * 1e6)),
                                              static_cast<std::uint64_t>(row.rep)});
    DiscoveryConfig c = cfg;
    c.seed = s;
    const auto res = isd(gen_additive_grid(s, n, row.c, row.gamma).data, FunctionClass::additive(), c);
    row.discovered_count = static_cast<int>(res.isd_estimate.size());
  });
  return rows;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, Errc::Precondition, "spearman needs two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    return Eigen::VectorXd(pit_rescale(x) * static_cast<double>(v.size()));
  };
  const Eigen::VectorXd ra = ranks(a);
  const Eigen::VectorXd rb = ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean();
  const Eigen::VectorXd cb = rb.array() - rb.mean();
  const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return den > 0 ? ca.dot(cb) / den : 0.0;
}

}  // namespace cause_sieve
