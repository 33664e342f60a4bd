// cause_sieve: command-line front end.
//
//   cause_sieve discover data.csv --target Y --class additive --out result.json
//   cause_sieve bench --benchmark 2 --reps 20
//   cause_sieve simulate --grid c:0..0.9 gamma:0..1 --steps 4 5 --reps 10 --out grid.csv
//   cause_sieve datagen --generator benchmark1 --n 500 --out b1
//   cause_sieve verify --check all
//
// Exit codes: 0 success, 1 a verify check failed, 2 invalid input or flags,
// 3 a statistical procedure failed.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cause_sieve/cause_sieve.hpp"

namespace cs = cause_sieve;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitStatistical = 3;

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CAUSE_SIEVE_SEED")) {
    std::uint64_t v = 0;
    std::istringstream in(env);
    in >> v;
    cs::require(!in.fail() && in.eof(), cs::Errc::BadConfig, "CAUSE_SIEVE_SEED is not an unsigned integer");
    return v;
  }
  return 0;
}

struct DiscoveryFlags {
  double alpha = 0.05;
  std::vector<double> lambdas;
  std::string hsic = "gamma";
  int hsic_permutations = 1000;
  std::string bandwidth = "silverman";
  int max_p = 12;
  int significance_permutations = 99;
  int significance_folds = 5;
  std::string significance_score = "one_minus_p_log";

  void attach(CLI::App* app) {
    app->add_option("--alpha", alpha, "Significance level")->capture_default_str();
    app->add_option("--lambdas", lambdas, "Score weights l1 l2 l3")->expected(3);
    app->add_option("--hsic", hsic, "HSIC p-value method")
        ->check(CLI::IsMember({"gamma", "permutation"}))
        ->capture_default_str();
    app->add_option("--hsic-permutations", hsic_permutations, "Permutations for --hsic permutation")
        ->capture_default_str();
    app->add_option("--bandwidth", bandwidth, "Smoother bandwidth rule")
        ->check(CLI::IsMember({"silverman", "cv"}))
        ->capture_default_str();
    app->add_option("--max-p", max_p, "Largest number of covariates to enumerate")->capture_default_str();
    app->add_option("--significance-permutations", significance_permutations)->capture_default_str();
    app->add_option("--significance-folds", significance_folds)->capture_default_str();
    app->add_option("--significance-score", significance_score, "How significance enters the score")
        ->check(CLI::IsMember({"one_minus_p_log", "neg_log_p"}))
        ->capture_default_str();
  }

  cs::DiscoveryConfig build(std::uint64_t seed, unsigned threads) const {
    cs::DiscoveryConfig c;
    c.alpha = alpha;
    if (!lambdas.empty()) c.lambdas = {lambdas[0], lambdas[1], lambdas[2]};
    c.seed = seed;
    c.hsic.method = hsic == "gamma" ? cs::HsicMethod::Gamma : cs::HsicMethod::Permutation;
    c.hsic.n_perm = hsic_permutations;
    c.smoother.bandwidth_rule =
        bandwidth == "cv" ? cs::BandwidthRule::CrossValidation : cs::BandwidthRule::Silverman;
    c.max_p = max_p;
    c.significance_permutations = significance_permutations;
    c.significance_folds = significance_folds;
    c.significance_score =
        significance_score == "neg_log_p" ? cs::SignificanceScore::NegLogP : cs::SignificanceScore::OneMinusPLog;
    c.threads = threads;
    c.validate();
    return c;
  }
};

void attach_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--seed", o.seed, "Root seed (falls back to CAUSE_SIEVE_SEED, then 0)");
  app->add_option("--threads", o.threads, "Worker threads, 0 = all cores")->capture_default_str();
}

std::string named_set(const cs::Dataset& d, const std::vector<int>& members) {
  std::string out = "{";
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out += ", ";
    out += d.names()[static_cast<std::size_t>(members[i])];
  }
  return out + "}";
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f%%", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct DiscoverArgs {
  std::string csv;
  std::string target;
  std::string f_class = "additive";
  std::string mode = "both";
  std::string out;
  DiscoveryFlags flags;
  CommonOptions common;
};

int run_discover(const DiscoverArgs& a) {
  const cs::FunctionClass f_class = cs::FunctionClass::parse(a.f_class);
  const cs::DiscoveryConfig cfg = a.flags.build(resolve_seed(a.common.seed), a.common.threads);
  const cs::Dataset data = cs::validate_dataset(cs::csv::read_file(a.csv), a.target);
  const cs::DiscoveryResult r = cs::discover(data, f_class, cfg);
  if (!a.out.empty()) cs::csv::write_file(a.out, cs::to_json(r));

  std::cout << "target " << a.target << ", " << data.p() << " covariates, n = " << data.n() << ", class "
            << f_class.label() << "\n";
  if (a.mode != "score") {
    std::cout << "plausible sets:";
    if (r.plausible_sets.empty()) std::cout << " none";
    for (const auto& s : r.plausible_sets) std::cout << " " << named_set(data, s.members());
    std::cout << "\nISD estimate:   " << named_set(data, r.isd_estimate) << "\n";
  }
  if (a.mode != "isd") std::cout << "score estimate: " << named_set(data, r.score_estimate.members()) << "\n";
  for (const auto& v : r.verdicts)
    if (v.reason) std::cout << "not evaluated " << v.set.to_string() << ": " << v.reason_detail << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  int benchmark = 1;
  int reps = 20;
  Eigen::Index n = 500;
  std::string f_class;
  std::string out;
  DiscoveryFlags flags;
  CommonOptions common;
};

int run_bench(const BenchArgs& a) {
  const std::string gen = cs::benchmark_generator(a.benchmark);
  const cs::FunctionClass f_class = a.f_class.empty() ? cs::natural_class(gen) : cs::FunctionClass::parse(a.f_class);
  const cs::DiscoveryConfig cfg = a.flags.build(resolve_seed(a.common.seed), a.common.threads);
  const cs::BenchmarkSummary s = cs::run_benchmark(a.benchmark, a.reps, a.n, f_class, cfg);

  std::cout << "benchmark " << a.benchmark << ", " << a.reps << " reps, n = " << a.n << ", class "
            << f_class.label() << "\n";
  std::cout << "algorithm  correct causes / no false positives\n";
  std::cout << "ISD        " << pct(s.isd.correct_causes_pct) << "/ " << pct(s.isd.no_false_positives_pct) << "\n";
  std::cout << "Score      " << pct(s.score.correct_causes_pct) << "/ " << pct(s.score.no_false_positives_pct)
            << "\n";
  if (!a.out.empty()) {
    std::string csv = "algorithm,correct_causes_pct,no_false_positives_pct\n";
    csv += "isd," + cs::csv::format_real(s.isd.correct_causes_pct) + "," +
           cs::csv::format_real(s.isd.no_false_positives_pct) + "\n";
    csv += "score," + cs::csv::format_real(s.score.correct_causes_pct) + "," +
           cs::csv::format_real(s.score.no_false_positives_pct) + "\n";
    cs::csv::write_file(a.out, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::vector<std::string> grid{"c:0..0.9", "gamma:0..1"};
  std::vector<int> steps{4, 5};
  int reps = 10;
  Eigen::Index n = 500;
  std::string out;
  DiscoveryFlags flags;
  CommonOptions common;
};

/// "name:lo..hi" -> (lo, hi).
std::pair<double, double> parse_range(const std::string& spec, const std::string& name) {
  const std::string prefix = name + ":";
  cs::require(spec.starts_with(prefix), cs::Errc::BadConfig, "grid entry '" + spec + "' must start with " + prefix);
  const std::string body = spec.substr(prefix.size());
  const auto dots = body.find("..");
  cs::require(dots != std::string::npos, cs::Errc::BadConfig, "grid entry '" + spec + "' must look like lo..hi");
  try {
    std::size_t used_lo = 0;
    std::size_t used_hi = 0;
    const std::string lo = body.substr(0, dots);
    const std::string hi = body.substr(dots + 2);
    const double a = std::stod(lo, &used_lo);
    const double b = std::stod(hi, &used_hi);
    cs::require(used_lo == lo.size() && used_hi == hi.size() && a <= b, cs::Errc::BadConfig,
                "bad range in grid entry '" + spec + "'");
    return {a, b};
  } catch (const std::logic_error&) {
    cs::fail(cs::Errc::BadConfig, "bad number in grid entry '" + spec + "'");
  }
}

int run_simulate(const SimulateArgs& a) {
  cs::require(a.grid.size() == 2, cs::Errc::BadConfig, "--grid takes c:lo..hi gamma:lo..hi");
  const auto [c_lo, c_hi] = parse_range(a.grid[0], "c");
  const auto [g_lo, g_hi] = parse_range(a.grid[1], "gamma");
  const int c_steps = a.steps.front();
  const int g_steps = a.steps.back();
  const cs::DiscoveryConfig cfg = a.flags.build(resolve_seed(a.common.seed), a.common.threads);
  const auto rows = cs::simulate_grid(cs::linspace(c_lo, c_hi, c_steps), cs::linspace(g_lo, g_hi, g_steps), a.reps,
                                      a.n, cfg);

  std::string csv = "c,gamma,rep,discovered_count\n";
  for (const auto& r : rows)
    csv += cs::csv::format_real(r.c) + "," + cs::csv::format_real(r.gamma) + "," + std::to_string(r.rep) + "," +
           std::to_string(r.discovered_count) + "\n";
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    cs::csv::write_file(a.out, csv);
  }

  // share of reps that recover both parents, per gamma
  std::map<double, std::pair<int, int>> by_gamma;
  std::vector<double> cell_gamma;
  std::vector<double> cell_rate;
  std::map<std::pair<double, double>, std::pair<int, int>> by_cell;
  for (const auto& r : rows) {
    auto& g = by_gamma[r.gamma];
    g.first += r.discovered_count == 2;
    ++g.second;
    auto& c = by_cell[{r.c, r.gamma}];
    c.first += r.discovered_count == 2;
    ++c.second;
  }
  for (const auto& [key, v] : by_cell) {
    cell_gamma.push_back(key.second);
    cell_rate.push_back(static_cast<double>(v.first) / v.second);
  }
  std::ostream& log = a.out.empty() ? std::cerr : std::cout;
  log << "gamma  rate of {1,2}\n";
  for (const auto& [g, v] : by_gamma) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-6.3g %.3f\n", g, static_cast<double>(v.first) / v.second);
    log << buf;
  }
  if (cell_gamma.size() >= 2) log << "spearman(gamma, rate) over cells = " << cs::spearman(cell_gamma, cell_rate) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DatagenArgs {
  std::string generator;
  Eigen::Index n = 500;
  double c = 0.5;
  double gamma = 0.5;
  std::string out;
  CommonOptions common;
};

int run_datagen(const DatagenArgs& a) {
  const cs::GeneratedDataset g = cs::generate(a.generator, resolve_seed(a.common.seed), a.n, a.c, a.gamma);
  cs::write_generated(g, a.out);
  std::cout << "wrote " << a.out << ".csv and " << a.out << ".json (" << g.data.n() << " rows, true parents "
            << named_set(g.data, g.true_pa) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string check = "all";
  std::string out_dir = "verify";
  CommonOptions common;
};

int run_verify(const VerifyArgs& a) {
  cs::VerifyOptions opt;
  opt.seed = resolve_seed(a.common.seed);
  opt.threads = a.common.threads;
  std::vector<std::string> ids;
  if (a.check == "all") {
    ids = cs::check_ids();
  } else {
    ids.push_back(a.check);
  }
  // reject bad ids before any work starts
  for (const auto& id : ids) {
    const auto& known = cs::check_ids();
    cs::require(std::find(known.begin(), known.end(), id) != known.end(), cs::Errc::BadParam,
                "unknown check '" + id + "'");
  }
  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  cs::require(!ec, cs::Errc::Io, "cannot create '" + a.out_dir + "': " + ec.message());
  bool all_pass = true;
  for (const auto& id : ids) {
    for (const auto& rep : cs::run_check(id, opt)) {
      all_pass = all_pass && rep.pass;
      std::string file = rep.check_id;
      for (char& ch : file)
        if (ch == ':') ch = '-';
      cs::csv::write_file(a.out_dir + "/" + file + ".json", rep.to_json());
      std::cout << (rep.pass ? "PASS " : "FAIL ") << rep.check_id << "\n";
    }
  }
  return all_pass ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local causal discovery of the direct causes of a target variable"};
  app.require_subcommand(1);

  DiscoverArgs disc;
  auto* d = app.add_subcommand("discover", "Estimate the parents of a target in a CSV file");
  d->add_option("csv", disc.csv, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
  d->add_option("--target", disc.target, "Name of the target column")->required();
  d->add_option("--class", disc.f_class, "linear | additive | location-scale | cpcm:gaussian | cpcm:gamma | cpcm:pareto")
      ->capture_default_str();
  d->add_option("--mode", disc.mode, "Which estimates to report")
      ->check(CLI::IsMember({"isd", "score", "both"}))
      ->capture_default_str();
  d->add_option("--out", disc.out, "Write the JSON result here");
  disc.flags.attach(d);
  attach_common(d, disc.common);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Replicate a benchmark and report both algorithms");
  b->add_option("--benchmark", bench.benchmark, "1, 2 or 3")->required();
  b->add_option("--reps", bench.reps)->capture_default_str();
  b->add_option("--n", bench.n)->capture_default_str();
  b->add_option("--class", bench.f_class, "Defaults to the class the benchmark is built for");
  b->add_option("--out", bench.out, "Write the metrics table as CSV here");
  bench.flags.attach(b);
  attach_common(b, bench.common);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run ISD(additive) over the (c, gamma) grid");
  s->add_option("--grid", sim.grid, "c:lo..hi gamma:lo..hi")->expected(2)->capture_default_str();
  s->add_option("--steps", sim.steps, "Grid points per axis (one value for both)")->expected(1, 2)->capture_default_str();
  s->add_option("--reps", sim.reps)->capture_default_str();
  s->add_option("--n", sim.n)->capture_default_str();
  s->add_option("--out", sim.out, "Write the long-format CSV here instead of stdout");
  sim.flags.attach(s);
  attach_common(s, sim.common);

  DatagenArgs gen;
  auto* g = app.add_subcommand("datagen", "Write one generated dataset with a JSON sidecar");
  g->add_option("--generator", gen.generator)->required()->check(CLI::IsMember(cs::generator_ids()));
  g->add_option("--n", gen.n)->capture_default_str();
  g->add_option("--c", gen.c, "Covariate correlation (additive-grid)")->capture_default_str();
  g->add_option("--gamma", gen.gamma, "Interaction strength (additive-grid)")->capture_default_str();
  g->add_option("--out", gen.out, "Output stem; writes <stem>.csv and <stem>.json")->required();
  attach_common(g, gen.common);

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Monte-Carlo checks of the theory");
  v->add_option("--check", ver.check, "A check id or all")->capture_default_str();
  v->add_option("--out-dir", ver.out_dir, "Directory for the JSON reports")->capture_default_str();
  attach_common(v, ver.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*d) return run_discover(disc);
    if (*b) return run_bench(bench);
    if (*s) return run_simulate(sim);
    if (*g) return run_datagen(gen);
    if (*v) return run_verify(ver);
  } catch (const cs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cs::is_validation_error(e.code()) ? kExitUsage : kExitStatistical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  }
  return kExitUsage;
}
