#pragma once

// The sparse operator f -> T_{alpha,S}(sigma f), its L^2 norm, lower bounds
// for general (p, q), and the L^1-type testing constants T and T*.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "sparsebump/bumps.hpp"
#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/sparse.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump {

/// T_{alpha,S} with its per-cube coefficients |Q|^{alpha/d - 1} precomputed.
class SparseOperator {
 public:
  SparseOperator(const SparseFamily& family, double alpha) : grid_(family.grid()) {
    if (!(alpha >= 0.0 && alpha < grid_.dimension)) throw Error("invalid fractional order");
    ids_.reserve(family.size());
    coeff_.reserve(family.size());
    for (const DyadicCube& q : family.cubes()) {
      const double vol = q.volume();
      ids_.push_back(flat_id(grid_, q));
      coeff_.push_back(std::pow(vol, alpha / grid_.dimension) / vol);
    }
  }

  const GridConfig& grid() const { return grid_; }

  /// Leafwise sum over Q in S containing the leaf of |Q|^{alpha/d} <mu>_Q,
  /// where mu has the given leaf masses.
  std::vector<double> apply_to_masses(const std::vector<double>& leaf_mass) const {
    const CubeField sums = sum_up(grid_, leaf_mass);
    CubeField field(grid_.cube_count(), 0.0);
    for (std::size_t i = 0; i < ids_.size(); ++i) field[ids_[i]] = coeff_[i] * sums[ids_[i]];
    return push_down(grid_, field);
  }

  /// T(weight * |f|).
  std::vector<double> apply(const Weight& weight, const std::vector<double>& f) const {
    if (weight.grid() != grid_) throw Error("weight and family grids differ");
    if (f.size() != grid_.leaf_count()) throw Error("leaf function length does not match grid");
    const double h = grid_.leaf_volume();
    std::vector<double> m(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) m[i] = weight.density()[i] * std::abs(f[i]) * h;
    return apply_to_masses(m);
  }

 private:
  GridConfig grid_;
  std::vector<std::size_t> ids_;
  std::vector<double> coeff_;
};

inline LeafFunction apply_sparse(const SparseFamily& family, const Weight& sigma, const LeafFunction& f,
                                 double alpha) {
  if (f.grid != family.grid() || sigma.grid() != family.grid()) throw Error("grid mismatch in apply_sparse");
  return LeafFunction(family.grid(), SparseOperator(family, alpha).apply(sigma, f.values));
}

namespace detail {

// (sum_i weight_i h |f_i|^r)^{1/r}
inline double weighted_lr_norm(const Weight& weight, const std::vector<double>& f, double r) {
  const double h = weight.grid().leaf_volume();
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = weight.density()[i];
    if (d > 0.0 && f[i] != 0.0) s += d * h * std::pow(std::abs(f[i]), r);
  }
  return std::pow(s, 1.0 / r);
}

inline double weighted_dot(const Weight& weight, const std::vector<double>& a, const std::vector<double>& b) {
  const double h = weight.grid().leaf_volume();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += weight.density()[i] * h * a[i] * b[i];
  return s;
}

inline void require_positive_root(const SparseFamily& family, const Weight& sigma, const Weight& w) {
  if (sigma.grid() != family.grid() || w.grid() != family.grid()) throw Error("weight and family grids differ");
  if (!(sigma.mass(family.root()) > 0.0) || !(w.mass(family.root()) > 0.0)) {
    throw Error("degenerate weight on cube " + to_string(family.root()));
  }
}

}  // namespace detail

struct PowerIterationOptions {
  double tolerance = 1e-11;       // relative residual in the L^2(sigma) inner product
  int max_iterations = 200000;
};

/// ||f -> T(sigma f)||_{L^2(sigma) -> L^2(w)}.
///
/// The map A f = T(w T(sigma f)) is self-adjoint in L^2(sigma) with top
/// eigenvalue equal to the squared norm. Power iteration starts from 1 on the
/// sigma-positive leaves and stops once ||A f - lambda f|| <= tol lambda ||f||.
inline double exact_norm_l2(const SparseFamily& family, const Weight& sigma, const Weight& w, double alpha,
                            PowerIterationOptions opts = {}) {
  detail::require_positive_root(family, sigma, w);
  const SparseOperator op(family, alpha);
  const std::size_t n = family.grid().leaf_count();
  std::vector<double> f(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) f[i] = sigma.density()[i] > 0.0 ? 1.0 : 0.0;
  double norm_f = std::sqrt(detail::weighted_dot(sigma, f, f));
  for (double& x : f) x /= norm_f;

  double previous = 0.0;
  double lambda = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const std::vector<double> u = op.apply(sigma, f);
    std::vector<double> af = op.apply(w, u);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(sigma.density()[i] > 0.0)) af[i] = 0.0;
    }
    previous = lambda;
    lambda = detail::weighted_dot(sigma, af, f);  // ||f||_sigma == 1
    if (!(lambda > 0.0)) return 0.0;
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = af[i] - lambda * f[i];
    const double residual = std::sqrt(detail::weighted_dot(sigma, r, r));
    if (residual <= opts.tolerance * lambda) return std::sqrt(lambda);
    norm_f = std::sqrt(detail::weighted_dot(sigma, af, af));
    for (std::size_t i = 0; i < n; ++i) f[i] = af[i] / norm_f;
  }
  throw ConvergenceError("power iteration did not converge", std::sqrt(previous), std::sqrt(lambda));
}

struct NormLowerBound {
  double value = 0.0;
  std::vector<double> primal_indicator_ratios;  // sigma(R)^{-1/p} ||T(sigma 1_R)||_{L^q(w)}, per member
  std::vector<double> dual_indicator_ratios;    // w(R)^{-1/q'} ||T(w 1_R)||_{L^{p'}(sigma)}, per member
  double constant_ratio = 0.0;
  std::vector<double> best_so_far;              // after each ascent step, across all starts
};

struct AscentOptions {
  int budget = 50;          // ascent steps per start
  int random_starts = 3;
  std::uint64_t seed = 1;
};

/// sup over a candidate set of ||T(sigma f)||_{L^q(w)} / ||f||_{L^p(sigma)}.
///
/// Candidates: indicators of members, the constant function, and the
/// iterates f <- (T(w (T(sigma f))^{q-1}))^{1/(p-1)} from the constant start
/// and from seeded random nonnegative starts. By duality the adjoint
/// indicator ratios are lower bounds for the same norm and are included.
inline NormLowerBound norm_lower_bound_detail(const SparseFamily& family, const Weight& sigma, const Weight& w,
                                              const ExponentConfig& cfg, AscentOptions opts = {}) {
  cfg.validate();
  NormLowerBound out;
  if (sigma.grid() != family.grid() || w.grid() != family.grid()) throw Error("weight and family grids differ");
  if (!(sigma.total_mass() > 0.0)) return out;
  const SparseOperator op(family, cfg.alpha);
  const GridConfig& grid = family.grid();
  const std::size_t n = grid.leaf_count();
  const double p = cfg.p;
  const double q = cfg.q;

  auto ratio = [&](const std::vector<double>& f) {
    const double den = detail::weighted_lr_norm(sigma, f, p);
    if (!(den > 0.0)) return 0.0;
    return detail::weighted_lr_norm(w, op.apply(sigma, f), q) / den;
  };
  auto offer = [&](double v) { out.value = std::max(out.value, v); };

  for (const DyadicCube& r : family.cubes()) {
    std::vector<double> ind(n, 0.0);
    for_each_leaf(grid, r, [&](std::size_t leaf) { ind[leaf] = 1.0; });
    const double pr = ratio(ind);
    out.primal_indicator_ratios.push_back(pr);
    offer(pr);
    const double wr = w.mass(r);
    double dr = 0.0;
    if (wr > 0.0) dr = detail::weighted_lr_norm(sigma, op.apply(w, ind), cfg.p_dual()) / std::pow(wr, 1.0 / cfg.q_dual());
    out.dual_indicator_ratios.push_back(dr);
    offer(dr);
  }
  out.constant_ratio = ratio(std::vector<double>(n, 1.0));
  offer(out.constant_ratio);

  std::mt19937_64 rng(opts.seed);
  for (int start = 0; start <= opts.random_starts; ++start) {
    std::vector<double> f(n, 1.0);
    if (start > 0) {
      for (double& x : f) x = 1.0 - detail::unit_uniform(rng);  // (0, 1]
    }
    for (int step = 0; step < opts.budget; ++step) {
      const std::vector<double> u = op.apply(sigma, f);
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::pow(u[i], q - 1.0);
      const std::vector<double> g = op.apply(w, v);
      for (std::size_t i = 0; i < n; ++i) f[i] = sigma.density()[i] > 0.0 ? std::pow(g[i], 1.0 / (p - 1.0)) : 0.0;
      const double nf = detail::weighted_lr_norm(sigma, f, p);
      if (!(nf > 0.0) || !std::isfinite(nf)) break;
      for (double& x : f) x /= nf;
      offer(ratio(f));
      out.best_so_far.push_back(out.value);
    }
  }
  return out;
}

inline double norm_lower_bound(const SparseFamily& family, const Weight& sigma, const Weight& w,
                               const ExponentConfig& cfg, int budget, std::uint64_t seed = 1) {
  AscentOptions o;
  o.budget = budget;
  o.seed = seed;
  return norm_lower_bound_detail(family, sigma, w, cfg, o).value;
}

struct TestingReport {
  double T = 0.0;
  double T_star = 0.0;
  std::optional<DyadicCube> argmax_R;
  std::optional<DyadicCube> argmax_R_star;
  std::vector<double> per_R;       // NaN where sigma(R) = 0
  std::vector<double> per_R_star;  // NaN where w(R) = 0
  ExponentConfig cfg{};
  bool extended_warning = false;   // computed outside 1 < p < q
};

/// T_R = sigma(R)^{-1/p} [sum_{Q in S, Q ⊆ R} (|Q|^{alpha/d} <sigma>_Q)^q w(E_Q)]^{1/q}
/// T*_R = w(R)^{-1/q'} [sum_{Q in S, Q ⊆ R} (|Q|^{alpha/d - 1} w(Q))^{p'} sigma(E_Q)]^{1/p'}
inline TestingReport testing_constants(const SparseFamily& family, const Weight& sigma, const Weight& w,
                                       const ExponentConfig& cfg) {
  cfg.validate();
  if (sigma.grid() != family.grid() || w.grid() != family.grid()) throw Error("weight and family grids differ");
  TestingReport rep;
  rep.cfg = cfg;
  rep.extended_warning = cfg.mode == TheoremMode::extended;
  const double pd = cfg.p_dual();
  const double qd = cfg.q_dual();
  const double s_over_d = cfg.alpha / cfg.dimension;
  const std::vector<double> w_e = family.exceptional_masses(w);
  const std::vector<double> s_e = family.exceptional_masses(sigma);

  const std::size_t m = family.size();
  std::vector<double> primal_term(m), dual_term(m);
  for (std::size_t i = 0; i < m; ++i) {
    const DyadicCube& q = family.cube(i);
    const double vol = q.volume();
    primal_term[i] = std::pow(std::pow(vol, s_over_d) * sigma.mass(q) / vol, cfg.q) * w_e[i];
    dual_term[i] = std::pow(std::pow(vol, s_over_d - 1.0) * w.mass(q), pd) * s_e[i];
  }
  rep.per_R.assign(m, std::numeric_limits<double>::quiet_NaN());
  rep.per_R_star.assign(m, std::numeric_limits<double>::quiet_NaN());
  BumpValue primal_best, dual_best;  // ties go to the first member in (level, index) order
  for (std::size_t i = 0; i < m; ++i) {
    const DyadicCube& r = family.cube(i);
    double sp = 0.0, sd = 0.0;
    for (std::size_t j : family.subtree(i)) {
      sp += primal_term[j];
      sd += dual_term[j];
    }
    if (sigma.mass(r) > 0.0) {
      const double v = std::pow(sigma.mass(r), -1.0 / cfg.p) * std::pow(sp, 1.0 / cfg.q);
      rep.per_R[i] = v;
      primal_best.offer(v, r);
    }
    if (w.mass(r) > 0.0) {
      const double v = std::pow(w.mass(r), -1.0 / qd) * std::pow(sd, 1.0 / pd);
      rep.per_R_star[i] = v;
      dual_best.offer(v, r);
    }
  }
  rep.T = primal_best.value;
  rep.argmax_R = primal_best.argmax;
  rep.T_star = dual_best.value;
  rep.argmax_R_star = dual_best.argmax;
  return rep;
}

}  // namespace sparsebump
