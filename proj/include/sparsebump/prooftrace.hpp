#pragma once

// Executable proof chains for the testing-constant bounds T <= C E and
// T <= C D. The family below R is stratified by rho(Q; sigma) or <sigma>_Q
// into dyadic bands [2^a, 2^{a+1}); every inequality of the chain is then
// checked numerically with explicit constants 2/(1-lambda) and
// 2 Sigma_eps/(1-lambda).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparsebump/bumps.hpp"
#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/maximal.hpp"
#include "sparsebump/sparse.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump {

/// Relative slack on every checked inequality; absorbs pow/sum rounding only.
inline constexpr double kRoundingSlack = 1e-12;

enum class StrataKey { rho, average };

/// a with x in [2^a, 2^{a+1}), exact for every positive double.
inline int dyadic_band(double x) {
  int e = 0;
  std::frexp(x, &e);
  return e - 1;
}

struct Strata {
  StrataKey key = StrataKey::rho;
  std::vector<std::size_t> members;  // family indices, ascending
  std::vector<double> key_value;     // indexed by family index; NaN outside members
  std::vector<int> bucket_of;        // indexed by family index
  std::vector<std::size_t> top_of;   // maximal cube of the same bucket containing it
  std::map<int, std::vector<std::size_t>> buckets;
  std::map<int, std::vector<std::size_t>> maximal_cubes;
};

namespace detail {

inline Strata stratify_members(const SparseFamily& family, StrataKey key, std::vector<std::size_t> members,
                               const std::vector<double>& key_value) {
  Strata st;
  st.key = key;
  std::sort(members.begin(), members.end());
  st.members = members;
  st.key_value = key_value;
  st.bucket_of.assign(family.size(), 0);
  st.top_of.assign(family.size(), 0);
  std::vector<char> in_set(family.size(), 0);
  for (std::size_t j : members) in_set[j] = 1;
  for (std::size_t j : members) {
    const double v = key_value[j];
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("zero-mass cube in family: " + to_string(family.cube(j)));
    st.bucket_of[j] = dyadic_band(v);
  }
  for (std::size_t j : members) {
    std::size_t top = j;
    for (std::ptrdiff_t cur = family.family_parent(j); cur >= 0 && in_set[static_cast<std::size_t>(cur)];
         cur = family.family_parent(static_cast<std::size_t>(cur))) {
      if (st.bucket_of[static_cast<std::size_t>(cur)] == st.bucket_of[j]) top = static_cast<std::size_t>(cur);
    }
    st.top_of[j] = top;
    st.buckets[st.bucket_of[j]].push_back(j);
    if (top == j) st.maximal_cubes[st.bucket_of[j]].push_back(j);
  }
  return st;
}

inline std::vector<double> member_keys(const SparseFamily& family, const Weight& sigma, StrataKey key,
                                       const CubeField* rho_field) {
  std::vector<double> out(family.size());
  for (std::size_t j = 0; j < family.size(); ++j) {
    const DyadicCube& q = family.cube(j);
    const double m = sigma.mass(q);
    if (!(m > 0.0)) {
      out[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (key == StrataKey::average) {
      out[j] = m / q.volume();
    } else {
      out[j] = rho_field ? (*rho_field)[flat_id(family.grid(), q)] : rho(sigma, q);
    }
  }
  return out;
}

}  // namespace detail

/// Buckets the whole family by floor(log2 key(Q)).
inline Strata stratify(const SparseFamily& family, const Weight& sigma, StrataKey key) {
  if (sigma.grid() != family.grid()) throw Error("weight and family grids differ");
  std::vector<std::size_t> all(family.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return detail::stratify_members(family, key, std::move(all), detail::member_keys(family, sigma, key, nullptr));
}

enum class TraceKind { entropy, direct };

inline std::string_view trace_kind_name(TraceKind k) { return k == TraceKind::entropy ? "entropy" : "direct"; }

struct StratumRecord {
  int a = 0;
  DyadicCube top{};
  std::size_t size = 0;
  double band_eps = 1.0;           // inf of eps over the band
  double inner_lhs = 0.0;
  double inner_bound = 0.0;        // bump^q (2/(1-lambda)) sigma(Q*)^{q/p} / band_eps
  double realized_constant = 0.0;  // inner_lhs / (bump^q sigma(Q*)^{q/p} / band_eps)
  double packing_lhs = 0.0;        // sum over the stratum of sigma(Q)
  double packing_bound = 0.0;      // 2^{a+1} sigma(Q*)/(1-lambda) or 2 sigma(Q*)/(1-lambda)
  bool term_bound_ok = true;
  bool power_step_ok = true;
  bool packing_ok = true;
  bool pass = true;
};

struct TraceFailure {
  std::string stage;
  int a = 0;
  std::optional<DyadicCube> top;
  std::string detail;
};

struct TraceReport {
  TraceKind kind = TraceKind::entropy;
  bool dual = false;
  DyadicCube R{};
  ExponentConfig cfg{};  // as used by the chain; swapped for dual traces
  double lambda = 0.5;
  double bump = 0.0;     // E, D, E*_symmetric or D*
  double eps_tail_sum = 0.0;

  // (i) regrouping identity
  double lhs_total = 0.0;
  double lhs_regrouped = 0.0;
  bool identity_pass = true;

  // (ii) per-stratum inner bounds
  std::vector<StratumRecord> strata;
  bool inner_pass = true;

  // (iii) summation over strata
  double band_eps_sum = 0.0;   // sum over occupied bands of 1/band_eps
  double chain_bound = 0.0;    // (2/(1-lambda)) bump^q sigma(R)^{q/p} band_eps_sum
  double final_bound = 0.0;    // (2 Sigma_eps/(1-lambda)) bump^q sigma(R)^{q/p}
  double certified_constant = 0.0;         // 2 Sigma_eps/(1-lambda)
  double realized_final_constant = 0.0;    // lhs_total / (bump^q sigma(R)^{q/p})
  bool final_pass = true;

  // T_R <= certified_constant^{1/q} bump
  double testing_value = 0.0;
  double certificate_bound = 0.0;
  bool certificate_pass = true;

  std::optional<TraceFailure> failure;

  bool pass() const { return identity_pass && inner_pass && final_pass && certificate_pass; }
};

namespace detail {

inline bool leq(double lhs, double rhs) { return lhs <= rhs * (1.0 + kRoundingSlack) + 1e-300; }

struct TraceInputs {
  TraceKind kind;
  const SparseFamily& family;
  const Weight& sigma;  // the weight inside the averages (w for dual traces)
  const Weight& w;      // the outer weight (sigma for dual traces)
  ExponentConfig cfg;
  const EntropyFunction& eps;
  double bump;
  std::vector<double> key_value;      // per family index
  std::vector<double> w_exceptional;  // w(E_Q) per family index
  bool dual;
};

inline TraceReport run_trace(const TraceInputs& in, std::size_t r_index) {
  const SparseFamily& family = in.family;
  const Weight& sigma = in.sigma;
  const Weight& w = in.w;
  const double p = in.cfg.p;
  const double q = in.cfg.q;
  const double lambda = family.lambda();
  const double c_inner = 2.0 / (1.0 - lambda);

  TraceReport rep;
  rep.kind = in.kind;
  rep.dual = in.dual;
  rep.R = family.cube(r_index);
  rep.cfg = in.cfg;
  rep.lambda = lambda;
  rep.bump = in.bump;
  rep.eps_tail_sum = in.eps.tail_sum();
  const double sigma_r = sigma.mass(rep.R);
  if (!(sigma_r > 0.0)) throw Error("degenerate weight on cube " + to_string(rep.R));

  auto fail = [&](const std::string& stage, int a, std::optional<DyadicCube> top, const std::string& detail) {
    if (!rep.failure) rep.failure = TraceFailure{stage, a, top, detail};
  };

  const Strata st = stratify_members(family, in.kind == TraceKind::entropy ? StrataKey::rho : StrataKey::average,
                                     family.subtree(r_index), in.key_value);
  const double s_over_d = in.cfg.alpha / in.cfg.dimension;
  std::vector<double> term(family.size(), 0.0);
  for (std::size_t j : st.members) {
    const DyadicCube& cube = family.cube(j);
    const double vol = cube.volume();
    term[j] = std::pow(std::pow(vol, s_over_d) * sigma.mass(cube) / vol, q) * w.mass(cube);
  }

  // (i)
  for (std::size_t j : st.members) rep.lhs_total += term[j];
  std::map<std::pair<int, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t j : st.members) groups[{st.bucket_of[j], st.top_of[j]}].push_back(j);
  for (const auto& [key, js] : groups) {
    for (std::size_t j : js) rep.lhs_regrouped += term[j];
  }
  rep.identity_pass = std::abs(rep.lhs_total - rep.lhs_regrouped) <= kRoundingSlack * rep.lhs_total;
  if (!rep.identity_pass) fail("identity", 0, std::nullopt, "regrouped sum differs");

  // (ii)
  const double bump_q = std::pow(in.bump, q);
  const double r_exp = q / p;
  double inner_bound_total = 0.0;
  std::map<int, double> band_eps;
  for (const auto& [key, js] : groups) {
    const auto [a, top_index] = key;
    const DyadicCube& top = family.cube(top_index);
    const double sigma_top = sigma.mass(top);
    StratumRecord s;
    s.a = a;
    s.top = top;
    s.size = js.size();
    s.band_eps = in.eps.band_infimum(a);
    band_eps[a] = s.band_eps;
    // J(Q)^q <= bump^q / (rho eps(rho)) <= bump^q / (2^a eps_a) for entropy;
    // J(Q)^q <= bump^q / eps(<sigma>_Q) <= bump^q / eps_a for direct.
    const double band_scale = in.kind == TraceKind::entropy ? std::ldexp(1.0, a) : 1.0;
    double sum_pow = 0.0;
    double stratum_volume = 0.0;
    for (std::size_t j : js) {
      const double m = sigma.mass(family.cube(j));
      s.inner_lhs += term[j];
      s.packing_lhs += m;
      sum_pow += std::pow(m, r_exp);
      stratum_volume += family.cube(j).volume();
      if (!leq(term[j], bump_q * std::pow(m, r_exp) / (band_scale * s.band_eps))) s.term_bound_ok = false;
    }
    // sigma(Q)^{q/p} <= sigma(Q*)^{q/p - 1} sigma(Q) since q/p >= 1.
    s.power_step_ok = leq(sum_pow, std::pow(sigma_top, r_exp - 1.0) * s.packing_lhs);

    const std::size_t top_family_index = top_index;
    if (in.kind == TraceKind::entropy) {
      const double rho_top = in.key_value[top_family_index];
      double carleson_lhs = 0.0;
      for (std::size_t j : family.subtree(top_family_index)) carleson_lhs += sigma.mass(family.cube(j));
      const double carleson_rhs = rho_top * sigma_top / (1.0 - lambda);
      s.packing_bound = std::ldexp(1.0, a + 1) * sigma_top / (1.0 - lambda);
      s.packing_ok = leq(s.packing_lhs, carleson_lhs) && leq(carleson_lhs, carleson_rhs) &&
                     rho_top < std::ldexp(1.0, a + 1) && leq(s.packing_lhs, s.packing_bound);
    } else {
      double family_volume = 0.0;
      for (std::size_t j : family.subtree(top_family_index)) family_volume += family.cube(j).volume();
      const double band_top = std::ldexp(1.0, a + 1);
      s.packing_bound = 2.0 * sigma_top / (1.0 - lambda);
      s.packing_ok = leq(s.packing_lhs, band_top * stratum_volume) && leq(stratum_volume, family_volume) &&
                     leq(family_volume, top.volume() / (1.0 - lambda)) &&
                     leq(band_top * top.volume(), 2.0 * sigma_top) && leq(s.packing_lhs, s.packing_bound);
    }
    const double unit = bump_q * std::pow(sigma_top, r_exp) / s.band_eps;
    s.inner_bound = c_inner * unit;
    s.realized_constant = unit > 0.0 ? s.inner_lhs / unit : 0.0;
    s.pass = s.term_bound_ok && s.power_step_ok && s.packing_ok && leq(s.inner_lhs, s.inner_bound);
    if (!s.pass) {
      rep.inner_pass = false;
      const char* which = !s.term_bound_ok ? "term bound" : !s.power_step_ok ? "power step"
                                                       : !s.packing_ok    ? "packing"
                                                                          : "inner sum";
      fail("inner", a, top, which);
    }
    inner_bound_total += s.inner_bound;
    rep.strata.push_back(s);
  }

  // (iii)
  bool final_ok = true;
  for (const auto& [a, tops] : st.maximal_cubes) {
    double mass_sum = 0.0;
    double pow_sum = 0.0;
    for (std::size_t t : tops) {
      const double m = sigma.mass(family.cube(t));
      mass_sum += m;
      pow_sum += std::pow(m, r_exp);
    }
    if (!leq(mass_sum, sigma_r) || !leq(pow_sum, std::pow(mass_sum, r_exp))) {
      final_ok = false;
      fail("final", a, std::nullopt, "maximal cubes exceed sigma(R)");
    }
  }
  for (const auto& [a, e] : band_eps) rep.band_eps_sum += 1.0 / e;
  const double scale = bump_q * std::pow(sigma_r, r_exp);
  rep.chain_bound = c_inner * scale * rep.band_eps_sum;
  rep.certified_constant = 2.0 * rep.eps_tail_sum / (1.0 - lambda);
  rep.final_bound = rep.certified_constant * scale;
  rep.realized_final_constant = scale > 0.0 ? rep.lhs_total / scale : 0.0;
  // Occupied bands sum to at most Sigma_eps (entropy) or Sigma_eps + eps(1)^{-1} (direct,
  // where the bands below 1 are charged at their right end).
  const double band_cap = rep.eps_tail_sum + (in.kind == TraceKind::direct ? 1.0 / in.eps(1.0) : 0.0);
  if (!leq(rep.lhs_total, inner_bound_total) || !leq(inner_bound_total, rep.chain_bound) ||
      !leq(rep.band_eps_sum, band_cap)) {
    final_ok = false;
    fail("final", 0, std::nullopt, "summation chain");
  }
  if (!leq(rep.lhs_total, rep.final_bound)) {
    final_ok = false;
    fail("final", 0, std::nullopt, "lhs exceeds certified bound");
  }
  rep.final_pass = final_ok;

  double testing_sum = 0.0;
  for (std::size_t j : st.members) {
    const DyadicCube& cube = family.cube(j);
    const double vol = cube.volume();
    testing_sum += std::pow(std::pow(vol, s_over_d) * sigma.mass(cube) / vol, q) * in.w_exceptional[j];
  }
  rep.testing_value = std::pow(sigma_r, -1.0 / p) * std::pow(testing_sum, 1.0 / q);
  rep.certificate_bound = std::pow(rep.certified_constant, 1.0 / q) * in.bump;
  rep.certificate_pass = leq(rep.testing_value, rep.certificate_bound);
  if (!rep.certificate_pass) fail("certificate", 0, std::nullopt, "T_R exceeds certified bound");
  return rep;
}

inline TraceInputs make_inputs(TraceKind kind, const SparseFamily& family, const Weight& sigma, const Weight& w,
                               const ExponentConfig& cfg, const EntropyFunction& eps, bool dual) {
  if (sigma.grid() != family.grid() || w.grid() != family.grid()) throw Error("weight and family grids differ");
  cfg.validate();
  double bump = 0.0;
  std::vector<double> keys;
  if (kind == TraceKind::entropy) {
    const BumpReport b = entropy_bumps(sigma, w, cfg, eps);
    bump = b.E->value;
    const CubeField rho_field = rho_all(sigma);
    keys = member_keys(family, sigma, StrataKey::rho, &rho_field);
  } else {
    const BumpReport b = direct_bumps(sigma, w, cfg, eps);
    bump = b.D->value;
    keys = member_keys(family, sigma, StrataKey::average, nullptr);
  }
  return TraceInputs{kind, family, sigma, w, cfg, eps, bump, std::move(keys), family.exceptional_masses(w), dual};
}

inline std::size_t require_member(const SparseFamily& family, const DyadicCube& r) {
  const auto idx = family.index_of(r);
  if (!idx) throw Error("cube " + to_string(r) + " is not in the family");
  return *idx;
}

}  // namespace detail

/// Chain for T_R <= (2 Sigma_eps/(1-lambda))^{1/q} E.
inline TraceReport entropy_trace(const SparseFamily& family, const Weight& sigma, const Weight& w,
                                 const ExponentConfig& cfg, const EntropyFunction& eps, const DyadicCube& r) {
  const std::size_t idx = detail::require_member(family, r);
  return detail::run_trace(detail::make_inputs(TraceKind::entropy, family, sigma, w, cfg, eps, false), idx);
}

/// Chain for T_R <= (2 Sigma_eps/(1-lambda))^{1/q} D.
inline TraceReport direct_trace(const SparseFamily& family, const Weight& sigma, const Weight& w,
                                const ExponentConfig& cfg, const EntropyFunction& eps, const DyadicCube& r) {
  const std::size_t idx = detail::require_member(family, r);
  return detail::run_trace(detail::make_inputs(TraceKind::direct, family, sigma, w, cfg, eps, false), idx);
}

/// The dual chain (T*_R against E*_symmetric or D*): the primal chain run on
/// (w, sigma) with exponents (q', p').
inline TraceReport dual_trace(TraceKind kind, const SparseFamily& family, const Weight& sigma, const Weight& w,
                              const ExponentConfig& cfg, const EntropyFunction& eps, const DyadicCube& r) {
  const std::size_t idx = detail::require_member(family, r);
  return detail::run_trace(detail::make_inputs(kind, family, w, sigma, cfg.swapped(), eps, true), idx);
}

/// Runs one chain for every member R with positive mass, sharing the bump
/// and characteristic computations.
inline std::vector<TraceReport> trace_all(TraceKind kind, bool dual, const SparseFamily& family,
                                          const Weight& sigma, const Weight& w, const ExponentConfig& cfg,
                                          const EntropyFunction& eps) {
  const detail::TraceInputs in = dual ? detail::make_inputs(kind, family, w, sigma, cfg.swapped(), eps, true)
                                      : detail::make_inputs(kind, family, sigma, w, cfg, eps, false);
  std::vector<TraceReport> out;
  out.reserve(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) {
    if (in.sigma.mass(family.cube(i)) > 0.0) out.push_back(detail::run_trace(in, i));
  }
  return out;
}

}  // namespace sparsebump
