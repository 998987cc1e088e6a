#pragma once

// Experiment runner and command line front end.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "sparsebump/bumps.hpp"
#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/io.hpp"
#include "sparsebump/maximal.hpp"
#include "sparsebump/operators.hpp"
#include "sparsebump/prooftrace.hpp"
#include "sparsebump/sparse.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump::lab {

inline constexpr const char* kVersion = "1.0.0";

// Relative slack for the suite's inequality checks.
inline constexpr double kCheckSlack = 1e-10;

// Counterexample thresholds, frozen from the closed-form sequence at
// N = 8, 12, 16, 20 (p = q = 2, alpha = 0, delta = 1/2):
//   E = 1.06403, 1.19351, 1.28958, 1.36557  ->  E(20)/E(8) = 1.28341
//   D = 0.998533, 0.999908, 0.999994, 0.9999996
//   largest successive |D(N')/D(N) - 1| = 1.377e-3 (8 -> 12).
inline constexpr double kEntropyGrowthBaseline = 1.25;
inline constexpr double kDirectStabilityTolerance = 2.8e-3;

/// splitmix64 finalizer, used to derive independent per-instance seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t instance_seed(std::uint64_t master, std::size_t index) {
  return splitmix64(master ^ static_cast<std::uint64_t>(index));
}

inline std::uint64_t default_master_seed() {
  if (const char* env = std::getenv("SPARSEBUMP_SEED")) {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw Error("SPARSEBUMP_SEED is not an unsigned integer");
  }
  return 42;
}

struct ExperimentConfig {
  std::string experiment = "verify-bounds";
  int dimension = 1;
  int leaf_level = 8;
  double p = 2.0;
  double q = 3.0;
  double alpha = 0.0;
  TheoremMode mode = TheoremMode::strict;
  double delta = 1.0;
  double lambda = 0.5;
  std::string family_kind = "mixed";  // random | stopping | mixed
  std::size_t target_size = 40;
  std::size_t instances = 200;
  std::uint64_t seed = default_master_seed();
  int budget = 50;
  double volatility = 0.6;
  std::vector<int> levels{8, 12, 16, 20};
  unsigned threads = 0;  // 0: hardware concurrency
  std::string out_dir;

  // Single-shot commands.
  std::string weights;  // file holding one weight, or {"sigma": ..., "w": ...}
  std::string sigma;    // file or generator spec
  std::string w;
  std::string family;   // family file
  std::string eps = "entropy:1";
  std::string cube;     // R for trace; empty means every member
  bool dual = false;

  GridConfig grid() const { return GridConfig{dimension, leaf_level}; }
  ExponentConfig exponents() const { return ExponentConfig{p, q, alpha, dimension, mode}; }

  void validate() const {
    static const char* kinds[] = {"verify-bounds", "counterexample", "sweep", "trace",
                                  "constants",     "norm",           "testing"};
    if (std::find_if(std::begin(kinds), std::end(kinds), [&](const char* k) { return experiment == k; }) ==
        std::end(kinds)) {
      throw Error("unknown experiment: " + experiment);
    }
    exponents().validate();
    if (!(delta > 0.0) || !std::isfinite(delta)) throw Error("delta must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error("lambda must lie in (0,1)");
    if (family_kind != "random" && family_kind != "stopping" && family_kind != "mixed") {
      throw Error("family_kind must be random, stopping or mixed");
    }
    if (target_size == 0) throw Error("target_size must be positive");
    if (budget < 0) throw Error("budget must be nonnegative");
    if (!(volatility > 0.0 && volatility < 1.0)) throw Error("volatility must lie in (0,1)");
    if (experiment == "verify-bounds") grid().validate();
    if (experiment == "counterexample" || experiment == "sweep") {
      if (levels.empty()) throw Error("levels must not be empty");
      for (std::size_t i = 0; i < levels.size(); ++i) {
        GridConfig{dimension, levels[i]}.validate();
        if (i > 0 && levels[i] <= levels[i - 1]) throw Error("levels must be increasing");
      }
    }
  }
};

inline std::vector<std::string> config_keys() {
  return {"experiment", "dimension", "leaf_level", "p",       "q",      "alpha", "mode",   "delta",
          "lambda",     "family_kind", "target_size", "instances", "seed", "budget", "volatility", "levels",
          "threads",    "out_dir",   "weights",    "sigma",   "w",      "family", "eps",   "cube",
          "dual"};
}

/// Sets one field from a JSON value; the single path for config files and flags.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const nlohmann::json& v) {
  try {
    if (key == "experiment") c.experiment = v.get<std::string>();
    else if (key == "dimension") c.dimension = v.get<int>();
    else if (key == "leaf_level") c.leaf_level = v.get<int>();
    else if (key == "p") c.p = v.get<double>();
    else if (key == "q") c.q = v.get<double>();
    else if (key == "alpha") c.alpha = v.get<double>();
    else if (key == "mode") {
      const auto m = v.get<std::string>();
      if (m != "strict" && m != "extended") throw Error("mode must be strict or extended");
      c.mode = m == "strict" ? TheoremMode::strict : TheoremMode::extended;
    } else if (key == "delta") c.delta = v.get<double>();
    else if (key == "lambda") c.lambda = v.get<double>();
    else if (key == "family_kind") c.family_kind = v.get<std::string>();
    else if (key == "target_size") c.target_size = v.get<std::size_t>();
    else if (key == "instances") c.instances = v.get<std::size_t>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "budget") c.budget = v.get<int>();
    else if (key == "volatility") c.volatility = v.get<double>();
    else if (key == "levels") c.levels = v.get<std::vector<int>>();
    else if (key == "threads") c.threads = v.get<unsigned>();
    else if (key == "out_dir") c.out_dir = v.get<std::string>();
    else if (key == "weights") c.weights = v.get<std::string>();
    else if (key == "sigma") c.sigma = v.get<std::string>();
    else if (key == "w") c.w = v.get<std::string>();
    else if (key == "family") c.family = v.get<std::string>();
    else if (key == "eps") c.eps = v.get<std::string>();
    else if (key == "cube") c.cube = v.get<std::string>();
    else if (key == "dual") c.dual = v.get<bool>();
    else throw Error("unknown config key: " + key);
  } catch (const nlohmann::json::exception&) {
    throw Error("bad value for config key " + key + ": " + v.dump());
  }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  for (const auto& [key, value] : j.items()) apply_setting(base, key, value);
  return base;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"experiment", c.experiment}, {"dimension", c.dimension}, {"leaf_level", c.leaf_level},
          {"p", c.p},                   {"q", c.q},                 {"alpha", c.alpha},
          {"mode", std::string(mode_name(c.mode))}, {"delta", c.delta}, {"lambda", c.lambda},
          {"family_kind", c.family_kind}, {"target_size", c.target_size}, {"instances", c.instances},
          {"seed", c.seed},             {"budget", c.budget},       {"volatility", c.volatility},
          {"levels", c.levels}};
}

// ---- verification suite ----------------------------------------------------

struct Violation {
  std::size_t instance_id = 0;
  std::string check;
  std::string detail;
};

struct InstanceRow {
  std::size_t instance_id = 0;
  std::uint64_t seed = 0;
  int N = 0;
  double lambda = 0, p = 0, q = 0, alpha = 0, delta = 0;
  double A = 0, E = 0, E_star_sym = 0, D = 0, D_star = 0, T = 0, T_star = 0, norm_lb = 0;
  bool trace_entropy_pass = false;
  bool trace_direct_pass = false;
  double certified_CE_ratio = 0;  // max of T / bound and T* / bound, entropy side
  double certified_CD_ratio = 0;  // same for the direct side
  double carleson_ratio = 0;      // max over Q0 in the family
  double testing_over_norm = 0;   // (T + T*) / norm_lb, diagnostic only
  std::string family_kind;
  std::size_t family_size = 0;
  std::vector<Violation> violations;
};

struct SuiteAggregate {
  std::size_t instances = 0;
  std::size_t violations = 0;
  std::size_t trace_failures = 0;
  double max_certified_CE_ratio = 0;
  double max_certified_CD_ratio = 0;
  double max_carleson_ratio = 0;
  double max_testing_over_norm = 0;
};

struct SuiteReport {
  std::string experiment;
  ExperimentConfig config;
  std::vector<InstanceRow> rows;
  SuiteAggregate aggregate;
  std::vector<Violation> violations;
};

namespace detail {

inline bool within(double lhs, double rhs) { return lhs <= rhs * (1.0 + kCheckSlack); }

inline SparseFamily make_family(const ExperimentConfig& c, const GridConfig& grid, const Weight& sigma,
                                std::size_t instance_id, std::uint64_t seed, std::string& kind) {
  kind = c.family_kind == "mixed" ? (instance_id % 2 == 0 ? "random" : "stopping") : c.family_kind;
  if (kind == "random") return random_sparse(grid, c.lambda, seed, c.target_size);
  return stopping_family(sigma, 1.0 / c.lambda, root_cube(grid));
}

inline void check_traces(const std::vector<TraceReport>& traces, const char* name, InstanceRow& row, bool& pass) {
  for (const TraceReport& t : traces) {
    if (t.pass()) continue;
    pass = false;
    const TraceFailure f = t.failure.value_or(TraceFailure{"unknown", 0, std::nullopt, ""});
    row.violations.push_back({row.instance_id, std::string(name) + (t.dual ? " dual trace" : " trace"),
                              "R=" + to_string(t.R) + " stage=" + f.stage + " " + f.detail});
  }
}

}  // namespace detail

/// One random instance: cascade weights, a sparse family, every constant and
/// both chains (primal and dual) for every member.
inline InstanceRow run_instance(const ExperimentConfig& c, int leaf_level, std::size_t instance_id) {
  InstanceRow row;
  row.instance_id = instance_id;
  row.seed = instance_seed(c.seed, instance_id);
  row.N = leaf_level;
  row.lambda = c.lambda;
  row.p = c.p;
  row.q = c.q;
  row.alpha = c.alpha;
  row.delta = c.delta;
  auto violate = [&](std::string check, std::string detail) {
    row.violations.push_back({instance_id, std::move(check), std::move(detail)});
  };

  try {
    const GridConfig grid{c.dimension, leaf_level};
    const std::uint64_t s1 = splitmix64(row.seed);
    const std::uint64_t s2 = splitmix64(s1);
    const std::uint64_t s3 = splitmix64(s2);
    const Weight sigma = generate_weight(grid, WeightGenerator::random_cascade(s1, c.volatility));
    const Weight w = generate_weight(grid, WeightGenerator::random_cascade(s2, c.volatility));
    const SparseFamily family = detail::make_family(c, grid, sigma, instance_id, s3, row.family_kind);
    row.family_size = family.size();
    const ExponentConfig cfg = c.exponents();
    const EntropyFunction eps_e = EntropyFunction::entropy(c.delta);
    const EntropyFunction eps_d = EntropyFunction::direct(c.delta);

    const BumpReport eb = entropy_bumps(sigma, w, cfg, eps_e);
    const BumpReport db = direct_bumps(sigma, w, cfg, eps_d);
    row.A = eb.A->value;
    row.E = eb.E->value;
    row.E_star_sym = eb.E_star_symmetric->value;
    row.D = db.D->value;
    row.D_star = db.D_star->value;

    const TestingReport tr = testing_constants(family, sigma, w, cfg);
    row.T = tr.T;
    row.T_star = tr.T_star;

    AscentOptions ao;
    ao.budget = c.budget;
    ao.seed = splitmix64(s3);
    const NormLowerBound nlb = norm_lower_bound_detail(family, sigma, w, cfg, ao);
    row.norm_lb = nlb.value;
    row.testing_over_norm = nlb.value > 0.0 ? (row.T + row.T_star) / nlb.value : 0.0;

    row.trace_entropy_pass = true;
    row.trace_direct_pass = true;
    detail::check_traces(trace_all(TraceKind::entropy, false, family, sigma, w, cfg, eps_e), "entropy", row,
                         row.trace_entropy_pass);
    detail::check_traces(trace_all(TraceKind::entropy, true, family, sigma, w, cfg, eps_e), "entropy", row,
                         row.trace_entropy_pass);
    detail::check_traces(trace_all(TraceKind::direct, false, family, sigma, w, cfg, eps_d), "direct", row,
                         row.trace_direct_pass);
    detail::check_traces(trace_all(TraceKind::direct, true, family, sigma, w, cfg, eps_d), "direct", row,
                         row.trace_direct_pass);

    const double one_minus = 1.0 - family.lambda();
    const double ce = 2.0 * eps_e.tail_sum() / one_minus;
    const double cd = 2.0 * eps_d.tail_sum() / one_minus;
    const double pd = cfg.p_dual();
    row.certified_CE_ratio = std::max(row.T / (std::pow(ce, 1.0 / cfg.q) * row.E),
                                      row.T_star / (std::pow(ce, 1.0 / pd) * row.E_star_sym));
    row.certified_CD_ratio = std::max(row.T / (std::pow(cd, 1.0 / cfg.q) * row.D),
                                      row.T_star / (std::pow(cd, 1.0 / pd) * row.D_star));
    if (!detail::within(row.certified_CE_ratio, 1.0)) violate("entropy certificate", std::to_string(row.certified_CE_ratio));
    if (!detail::within(row.certified_CD_ratio, 1.0)) violate("direct certificate", std::to_string(row.certified_CD_ratio));

    for (std::size_t i = 0; i < family.size(); ++i) {
      const std::string at = "R=" + to_string(family.cube(i));
      if (!detail::within(nlb.primal_indicator_ratios[i], nlb.value)) violate("norm witness", at);
      if (!std::isnan(tr.per_R[i]) && !detail::within(tr.per_R[i], nlb.primal_indicator_ratios[i])) {
        violate("testing witness", at);
      }
      if (!std::isnan(tr.per_R_star[i]) && !detail::within(tr.per_R_star[i], nlb.dual_indicator_ratios[i])) {
        violate("dual testing witness", at);
      }
      const CarlesonResult cr = carleson_check(family, sigma, family.cube(i));
      row.carleson_ratio = std::max(row.carleson_ratio, cr.ratio);
      if (!detail::within(cr.ratio, 1.0)) violate("carleson", at);
    }
  } catch (const std::exception& e) {
    violate("error", e.what());
  }
  return row;
}

/// Runs fn(i) for i < count on a worker pool; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) out[i] = fn(i);
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  return out;
}

inline void aggregate(SuiteReport& r) {
  SuiteAggregate& a = r.aggregate;
  a = SuiteAggregate{};
  a.instances = r.rows.size();
  r.violations.clear();
  for (const InstanceRow& row : r.rows) {
    for (const Violation& v : row.violations) r.violations.push_back(v);
    if (!row.trace_entropy_pass || !row.trace_direct_pass) ++a.trace_failures;
    a.max_certified_CE_ratio = std::max(a.max_certified_CE_ratio, row.certified_CE_ratio);
    a.max_certified_CD_ratio = std::max(a.max_certified_CD_ratio, row.certified_CD_ratio);
    a.max_carleson_ratio = std::max(a.max_carleson_ratio, row.carleson_ratio);
    a.max_testing_over_norm = std::max(a.max_testing_over_norm, row.testing_over_norm);
  }
  a.violations = r.violations.size();
}

inline SuiteReport run_verify_bounds(const ExperimentConfig& c) {
  c.validate();
  SuiteReport r;
  r.experiment = "verify-bounds";
  r.config = c;
  r.rows = parallel_map(c.instances, c.threads, [&](std::size_t i) { return run_instance(c, c.leaf_level, i); });
  aggregate(r);
  return r;
}

/// verify-bounds repeated at each leaf level; instance ids run on across levels.
inline SuiteReport run_sweep(const ExperimentConfig& c) {
  c.validate();
  SuiteReport r;
  r.experiment = "sweep";
  r.config = c;
  const std::size_t n = c.instances * c.levels.size();
  r.rows = parallel_map(n, c.threads, [&](std::size_t i) {
    return run_instance(c, c.levels[i / std::max<std::size_t>(c.instances, 1)], i);
  });
  aggregate(r);
  return r;
}

// ---- counterexample study --------------------------------------------------

struct CounterexampleRow {
  int N = 0;
  double llogl = 0, A = 0, E = 0, D = 0;
  DyadicCube E_argmax{}, D_argmax{};
};

struct CounterexampleReport {
  std::vector<CounterexampleRow> rows;
  double delta = 0.5;
  bool llogl_increasing = true;
  bool E_increasing = true;
  double E_growth = 0;           // E(last) / E(first)
  bool E_growth_ok = true;
  double D_max_deviation = 0;    // max successive |D(N')/D(N) - 1|
  bool D_stable = true;
  std::size_t violations = 0;
};

/// sigma(x) = 1/(x(1 - log x)^2) and w(x) = x^2 at each leaf level.
inline CounterexampleReport run_counterexample(const std::vector<int>& levels, double delta,
                                               const ExponentConfig& cfg) {
  cfg.validate();
  if (levels.empty()) throw Error("levels must not be empty");
  if (cfg.dimension != 1) throw Error("counterexample weights are one-dimensional");
  CounterexampleReport r;
  r.delta = delta;
  const EntropyFunction eps_e = EntropyFunction::entropy(delta);
  const EntropyFunction eps_d = EntropyFunction::direct(delta);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i > 0 && levels[i] <= levels[i - 1]) throw Error("levels must be increasing");
    const GridConfig grid{1, levels[i]};
    const Weight sigma = generate_weight(grid, WeightGenerator::counterexample_sigma());
    const Weight w = generate_weight(grid, WeightGenerator::counterexample_w());
    const BumpReport eb = entropy_bumps(sigma, w, cfg, eps_e);
    const BumpReport db = direct_bumps(sigma, w, cfg, eps_d);
    r.rows.push_back({levels[i], llogl_integral(sigma), eb.A->value, eb.E->value, db.D->value, *eb.E->argmax,
                      *db.D->argmax});
  }
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    r.llogl_increasing = r.llogl_increasing && b.llogl > a.llogl;
    r.E_increasing = r.E_increasing && b.E > a.E;
    r.D_max_deviation = std::max(r.D_max_deviation, std::abs(b.D / a.D - 1.0));
  }
  r.E_growth = r.rows.back().E / r.rows.front().E;
  r.E_growth_ok = r.rows.size() < 2 || r.E_growth > kEntropyGrowthBaseline;
  r.D_stable = r.D_max_deviation <= kDirectStabilityTolerance;
  r.violations = !r.llogl_increasing + !r.E_increasing + !r.E_growth_ok + !r.D_stable;
  return r;
}

// ---- output ----------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kCsvHeader =
    "instance_id,seed,N,lambda,p,q,alpha,delta,A,E,E_star_sym,D,D_star,T,T_star,norm_lb,"
    "trace_entropy_pass,trace_direct_pass,certified_CE_ratio,certified_CD_ratio";

inline std::string suite_csv(const SuiteReport& r) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const InstanceRow& row : r.rows) {
    const double nums[] = {row.lambda, row.p, row.q, row.alpha, row.delta, row.A, row.E, row.E_star_sym,
                           row.D, row.D_star, row.T, row.T_star, row.norm_lb};
    out += std::to_string(row.instance_id) + ',' + std::to_string(row.seed) + ',' + std::to_string(row.N);
    for (double v : nums) out += ',' + format_double(v);
    out += row.trace_entropy_pass ? ",1" : ",0";
    out += row.trace_direct_pass ? ",1" : ",0";
    out += ',' + format_double(row.certified_CE_ratio) + ',' + format_double(row.certified_CD_ratio) + '\n';
  }
  return out;
}

inline nlohmann::json suite_json(const SuiteReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (const Violation& x : r.violations) {
    v.push_back({{"instance_id", x.instance_id}, {"check", x.check}, {"detail", x.detail}});
  }
  const SuiteAggregate& a = r.aggregate;
  return {{"experiment", r.experiment},
          {"version", kVersion},
          {"seed", r.config.seed},
          {"config", config_to_json(r.config)},
          {"aggregate",
           {{"instances", a.instances},
            {"violations", a.violations},
            {"trace_failures", a.trace_failures},
            {"max_certified_CE_ratio", a.max_certified_CE_ratio},
            {"max_certified_CD_ratio", a.max_certified_CD_ratio},
            {"max_carleson_ratio", a.max_carleson_ratio},
            {"max_testing_over_norm_lb", a.max_testing_over_norm}}},
          {"violations", v}};
}

inline std::string counterexample_csv(const CounterexampleReport& r) {
  std::string out = "N,llogl,A,E,D,E_argmax,D_argmax\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.N) + ',' + format_double(row.llogl) + ',' + format_double(row.A) + ',' +
           format_double(row.E) + ',' + format_double(row.D) + ',' + to_string(row.E_argmax) + ',' +
           to_string(row.D_argmax) + '\n';
  }
  return out;
}

inline nlohmann::json counterexample_json(const CounterexampleReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"N", row.N}, {"llogl", row.llogl}, {"A", row.A}, {"E", row.E}, {"D", row.D},
                    {"E_argmax", to_string(row.E_argmax)}, {"D_argmax", to_string(row.D_argmax)}});
  }
  return {{"experiment", "counterexample"},
          {"version", kVersion},
          {"delta", r.delta},
          {"rows", rows},
          {"trends",
           {{"llogl_increasing", r.llogl_increasing},
            {"E_increasing", r.E_increasing},
            {"E_growth", r.E_growth},
            {"E_growth_baseline", kEntropyGrowthBaseline},
            {"D_max_deviation", r.D_max_deviation},
            {"D_tolerance", kDirectStabilityTolerance},
            {"D_stable", r.D_stable}}},
          {"violations", r.violations}};
}

inline void write_file(const std::string& dir, const std::string& name, const std::string& body) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << body;
}

// ---- command line ----------------------------------------------------------

namespace detail {

inline bool is_file(const std::string& s) { return !s.empty() && std::filesystem::is_regular_file(s); }

inline Weight load_weight(const std::string& source, const ExperimentConfig& c) {
  if (is_file(source)) return io::weight_from_json(io::read_json_file(source));
  return generate_weight(c.grid(), parse_generator(source));
}

inline std::pair<Weight, Weight> load_weights(const ExperimentConfig& c) {
  std::optional<Weight> sigma, w;
  if (!c.weights.empty()) {
    const nlohmann::json j = io::read_json_file(c.weights);
    if (j.contains("sigma")) {
      sigma = io::weight_from_json(j.at("sigma"));
      w = io::weight_from_json(j.contains("w") ? j.at("w") : j.at("sigma"));
    } else {
      sigma = io::weight_from_json(j);
      w = sigma;
    }
  }
  if (!c.sigma.empty()) sigma = load_weight(c.sigma, c);
  if (!c.w.empty()) w = load_weight(c.w, c);
  if (!sigma && w) sigma = w;
  if (!w && sigma) w = sigma;
  if (!sigma) throw Error("no weights given (use --weights, --sigma or --w)");
  return {*sigma, *w};
}

inline SparseFamily load_family(const ExperimentConfig& c, const GridConfig& grid) {
  if (c.family.empty()) throw Error("no family given (use --family)");
  return io::family_from_json(io::read_json_file(c.family), grid);
}

// Exponents take the weight's dimension.
inline ExponentConfig exponents_for(const ExperimentConfig& c, const Weight& sigma) {
  ExponentConfig e = c.exponents();
  e.dimension = sigma.grid().dimension;
  e.validate();
  return e;
}

inline int emit(const ExperimentConfig& c, const std::string& name, const nlohmann::json& j, int code) {
  const std::string body = j.dump(2) + '\n';
  std::cout << body;
  if (!c.out_dir.empty()) write_file(c.out_dir, name + ".json", body);
  return code;
}

inline int cmd_constants(const ExperimentConfig& c) {
  const auto [sigma, w] = load_weights(c);
  const ExponentConfig cfg = exponents_for(c, sigma);
  const EntropyFunction eps = io::parse_eps(c.eps);
  const bool entropy = eps.kind() == EpsKind::entropy;
  const BumpReport b = entropy ? entropy_bumps(sigma, w, cfg, eps) : direct_bumps(sigma, w, cfg, eps);
  nlohmann::json j = io::bump_report_json(b);
  j["skipped"] = entropy ? nlohmann::json{"D", "D_star"} : nlohmann::json{"E", "E_star_printed", "E_star_symmetric"};
  return emit(c, "constants", j, 0);
}

inline int cmd_norm(const ExperimentConfig& c) {
  const auto [sigma, w] = load_weights(c);
  const ExponentConfig cfg = exponents_for(c, sigma);
  const SparseFamily family = load_family(c, sigma.grid());
  AscentOptions o;
  o.budget = c.budget;
  o.seed = c.seed;
  const NormLowerBound nlb = norm_lower_bound_detail(family, sigma, w, cfg, o);
  nlohmann::json j{{"p", cfg.p}, {"q", cfg.q}, {"alpha", cfg.alpha}, {"budget", c.budget},
                   {"norm_lower_bound", nlb.value}, {"constant_ratio", nlb.constant_ratio}};
  j["exact_norm_l2"] = cfg.p == 2.0 && cfg.q == 2.0 ? nlohmann::json(exact_norm_l2(family, sigma, w, cfg.alpha))
                                                    : nlohmann::json(nullptr);
  return emit(c, "norm", j, 0);
}

inline int cmd_testing(const ExperimentConfig& c) {
  const auto [sigma, w] = load_weights(c);
  const ExponentConfig cfg = exponents_for(c, sigma);
  const SparseFamily family = load_family(c, sigma.grid());
  return emit(c, "testing", io::testing_report_json(testing_constants(family, sigma, w, cfg)), 0);
}

inline int cmd_trace(const ExperimentConfig& c) {
  const auto [sigma, w] = load_weights(c);
  const ExponentConfig cfg = exponents_for(c, sigma);
  const SparseFamily family = load_family(c, sigma.grid());
  const EntropyFunction eps = io::parse_eps(c.eps);
  const TraceKind kind = eps.kind() == EpsKind::entropy ? TraceKind::entropy : TraceKind::direct;
  if (!c.cube.empty()) {
    const DyadicCube r = parse_cube(c.cube);
    const TraceReport t = c.dual ? dual_trace(kind, family, sigma, w, cfg, eps, r)
                          : kind == TraceKind::entropy ? entropy_trace(family, sigma, w, cfg, eps, r)
                                                       : direct_trace(family, sigma, w, cfg, eps, r);
    return emit(c, "trace", io::trace_report_json(t), t.pass() ? 0 : 1);
  }
  nlohmann::json all = nlohmann::json::array();
  bool pass = true;
  for (const TraceReport& t : trace_all(kind, c.dual, family, sigma, w, cfg, eps)) {
    all.push_back(io::trace_report_json(t));
    pass = pass && t.pass();
  }
  return emit(c, "trace", {{"schema", "trace-set/v1"}, {"traces", all}, {"pass", pass}}, pass ? 0 : 1);
}

inline int cmd_suite(const ExperimentConfig& c) {
  const SuiteReport r = c.experiment == "sweep" ? run_sweep(c) : run_verify_bounds(c);
  if (!c.out_dir.empty()) write_file(c.out_dir, c.experiment + ".csv", suite_csv(r));
  return emit(c, c.experiment, suite_json(r), r.aggregate.violations == 0 ? 0 : 1);
}

inline int cmd_counterexample(const ExperimentConfig& c) {
  ExponentConfig cfg = c.exponents();
  const CounterexampleReport r = run_counterexample(c.levels, c.delta, cfg);
  if (!c.out_dir.empty()) write_file(c.out_dir, "counterexample.csv", counterexample_csv(r));
  return emit(c, "counterexample", counterexample_json(r), r.violations == 0 ? 0 : 1);
}

inline std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Flag text to JSON: numbers and booleans parse as such, "a,b,c" becomes an
// array, anything else stays a string.
inline nlohmann::json flag_value(const std::string& key, const std::string& text) {
  if (key == "levels") {
    nlohmann::json arr = nlohmann::json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        arr.push_back(std::stoi(item));
      } catch (const std::logic_error&) {
        throw Error("bad value for config key levels: " + text);
      }
    }
    return arr;
  }
  const nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded() && (parsed.is_number() || parsed.is_boolean())) return parsed;
  return text;
}

}  // namespace detail

/// Subcommands: constants, norm, testing, trace, verify-bounds,
/// counterexample, sweep. Exit 0 clean, 1 on violations, 2 on bad input.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"sparsebump: dyadic sparse-operator bump laboratory", "sparsebump"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Command {
    CLI::App* app;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  static const char* names[] = {"constants", "norm", "testing", "trace", "verify-bounds", "counterexample", "sweep"};
  static const char* blurbs[] = {"bump constants of a weight pair",
                                 "lower bound (and exact L2 norm when p = q = 2) of a sparse operator",
                                 "testing constants T and T*",
                                 "machine-checked proof chains as JSON",
                                 "randomized verification suite",
                                 "counterexample weights across leaf levels",
                                 "verification suite repeated over leaf levels"};
  std::vector<Command> commands(std::size(names));
  for (std::size_t i = 0; i < commands.size(); ++i) {
    Command& cmd = commands[i];
    cmd.app = app.add_subcommand(names[i], blurbs[i]);
    cmd.app->add_option("--config", cmd.config_path, "JSON config file")->check(CLI::ExistingFile);
    for (const std::string& key : config_keys()) {
      if (key == "experiment") continue;
      if (key == "dual") {
        cmd.options[key] = cmd.app->add_flag("--dual", "run the dual chain");
        continue;
      }
      cmd.options[key] = cmd.app->add_option(detail::flag_name(key), cmd.values[key]);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      Command& cmd = commands[i];
      if (!cmd.app->parsed()) continue;
      ExperimentConfig cfg;
      if (!cmd.config_path.empty()) cfg = config_from_json(io::read_json_file(cmd.config_path), cfg);
      cfg.experiment = names[i];
      for (const auto& [key, opt] : cmd.options) {
        if (opt->count() == 0) continue;
        if (key == "dual") {
          cfg.dual = true;
          continue;
        }
        apply_setting(cfg, key, detail::flag_value(key, cmd.values[key]));
      }
      cfg.validate();
      const std::string& e = cfg.experiment;
      if (e == "constants") return detail::cmd_constants(cfg);
      if (e == "norm") return detail::cmd_norm(cfg);
      if (e == "testing") return detail::cmd_testing(cfg);
      if (e == "trace") return detail::cmd_trace(cfg);
      if (e == "counterexample") return detail::cmd_counterexample(cfg);
      return detail::cmd_suite(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "sparsebump: " << e.what() << "\n" << app.help();
    return 2;
  }
  return 2;
}

}  // namespace sparsebump::lab
