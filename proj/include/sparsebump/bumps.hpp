#pragma once

// Exponent configurations, admissible epsilon functions and the bump
// functionals A (joint A_{p,q}^alpha), E, E* (entropy) and D, D* (direct).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/maximal.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump {

/// strict: 1 < p < q < inf. extended additionally admits p == q.
enum class TheoremMode { strict, extended };

inline std::string_view mode_name(TheoremMode m) { return m == TheoremMode::strict ? "strict" : "extended"; }

struct ExponentConfig {
  double p = 2.0;
  double q = 3.0;
  double alpha = 0.0;
  int dimension = 1;
  TheoremMode mode = TheoremMode::strict;

  static ExponentConfig make(double p, double q, double alpha, int dimension,
                             TheoremMode mode = TheoremMode::strict) {
    ExponentConfig c{p, q, alpha, dimension, mode};
    c.validate();
    return c;
  }

  void validate() const {
    if (!(p > 1.0) || !std::isfinite(p)) throw Error("exponent p must exceed 1");
    if (!std::isfinite(q)) throw Error("exponent q must be finite");
    if (mode == TheoremMode::strict ? !(p < q) : !(p <= q)) {
      throw Error(mode == TheoremMode::strict ? "strict mode requires p < q" : "extended mode requires p <= q");
    }
    if (dimension != 1 && dimension != 2) throw Error("dimension must be 1 or 2");
    if (!(alpha >= 0.0 && alpha < dimension)) throw Error("invalid fractional order");
  }

  double p_dual() const { return p / (p - 1.0); }
  double q_dual() const { return q / (q - 1.0); }

  /// The pair (q', p') playing the role of (p, q) in the dual estimate.
  ExponentConfig swapped() const { return ExponentConfig{q_dual(), p_dual(), alpha, dimension, mode}; }
};

enum class EpsKind { entropy, direct };

inline std::string_view eps_kind_name(EpsKind k) { return k == EpsKind::entropy ? "entropy" : "direct"; }

/// An admissible epsilon: (1 + log+ t)^{1+delta} (entropy) or
/// (1 + |log t|)^{1+delta} (direct), or a user table of values at t = 2^r
/// interpolated linearly in log2 t, with a declared bound on the untabulated
/// part of the reciprocal sum.
class EntropyFunction {
 public:
  static EntropyFunction entropy(double delta) { return EntropyFunction(EpsKind::entropy, delta); }
  static EntropyFunction direct(double delta) { return EntropyFunction(EpsKind::direct, delta); }

  static EntropyFunction tabulated(EpsKind side, int first_power, std::vector<double> values, double tail_bound) {
    EntropyFunction f;
    f.kind_ = side;
    f.tabulated_ = true;
    f.first_power_ = first_power;
    f.table_ = std::move(values);
    const int last = first_power + static_cast<int>(f.table_.size()) - 1;
    if (f.table_.size() < 2 || !(tail_bound >= 0.0)) throw Error("bad tabulated epsilon");
    if (side == EpsKind::entropy && first_power != 0) throw Error("entropy table must start at t = 1");
    if (side == EpsKind::direct && (first_power > 0 || last < 0)) throw Error("direct table must straddle t = 1");
    for (std::size_t i = 0; i < f.table_.size(); ++i) {
      if (!(f.table_[i] > 0.0) || !std::isfinite(f.table_[i])) throw Error("bad tabulated epsilon");
      if (i == 0) continue;
      const int r = first_power + static_cast<int>(i);
      const bool rising = f.table_[i] >= f.table_[i - 1];
      const bool falling = f.table_[i] <= f.table_[i - 1];
      if (r <= 0 ? !falling : !rising) throw Error("tabulated epsilon violates its monotonicity shape");
    }
    double s = tail_bound;
    for (double v : f.table_) s += 1.0 / v;
    f.tail_sum_ = s;
    return f;
  }

  EpsKind kind() const { return kind_; }
  double delta() const { return delta_; }
  bool is_tabulated() const { return tabulated_; }

  double operator()(double t) const {
    if (!(t > 0.0)) throw Error("epsilon argument must be positive");
    if (tabulated_) {
      const double x = std::log2(t) - first_power_;
      const double last = static_cast<double>(table_.size() - 1);
      if (x < -1e-12 || x > last + 1e-12) throw Error("epsilon argument outside tabulated range");
      const double xc = std::min(std::max(x, 0.0), last);
      const auto i = std::min(static_cast<std::size_t>(xc), table_.size() - 2);
      const double frac = xc - static_cast<double>(i);
      return table_[i] + frac * (table_[i + 1] - table_[i]);
    }
    const double l = std::log(t);
    const double base = kind_ == EpsKind::entropy ? 1.0 + std::max(l, 0.0) : 1.0 + std::abs(l);
    return std::pow(base, 1.0 + delta_);
  }

  /// Infimum of epsilon over the band [2^a, 2^{a+1}): the left end above 1,
  /// the right end below 1 where epsilon decreases.
  double band_infimum(int a) const { return (*this)(std::ldexp(1.0, a >= 0 ? a : a + 1)); }

  /// Upper bound on sum_r epsilon(2^r)^{-1} over r >= 0 (entropy) or all
  /// integers r (direct). Exact partial sum plus a convex-tail integral.
  double tail_sum() const { return tail_sum_; }

 private:
  EntropyFunction() = default;

  EntropyFunction(EpsKind kind, double delta) : kind_(kind), delta_(delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw Error("epsilon exponent delta must be positive");
    // f(r) = (1 + r ln2)^{-(1+delta)} is convex and decreasing, so
    // sum_{r > R} f(r) <= integral_{R+1/2}^inf f (midpoint rule under-counts).
    constexpr int kTerms = 100000;
    const double ln2 = std::numbers::ln2;
    double s = 0.0;
    for (int r = kTerms; r >= 1; --r) s += std::pow(1.0 + r * ln2, -(1.0 + delta));
    const double tail = std::pow(1.0 + (kTerms + 0.5) * ln2, -delta) / (delta * ln2);
    const double one_sided = 1.0 + s + tail;
    tail_sum_ = kind == EpsKind::entropy ? one_sided : 2.0 * one_sided - 1.0;
  }

  EpsKind kind_ = EpsKind::entropy;
  double delta_ = 0.0;
  bool tabulated_ = false;
  int first_power_ = 0;
  std::vector<double> table_;
  double tail_sum_ = 0.0;
};

inline double eps_eval(const EntropyFunction& eps, double t) { return eps(t); }
inline double eps_tail_sum(const EntropyFunction& eps) { return eps.tail_sum(); }

/// w(Q)^{1/q} sigma(Q)^{1/p'} / |Q|^{1 - alpha/d}.
inline double joint_factor(double w_mass, double sigma_mass, double volume, const ExponentConfig& cfg) {
  return std::pow(w_mass, 1.0 / cfg.q) * std::pow(sigma_mass, 1.0 / cfg.p_dual()) /
         std::pow(volume, 1.0 - cfg.alpha / cfg.dimension);
}

/// joint * (rho eps(rho))^exponent.
inline double entropy_expression(double joint, double rho_value, const EntropyFunction& eps, double exponent) {
  if (joint == 0.0) return 0.0;
  return joint * std::pow(rho_value * eps(rho_value), exponent);
}

/// joint * eps(avg)^exponent; zero averages carry a zero joint factor.
inline double direct_expression(double joint, double avg, const EntropyFunction& eps, double exponent) {
  if (joint == 0.0 || avg == 0.0) return 0.0;
  return joint * std::pow(eps(avg), exponent);
}

/// Relative gap below which two candidate values count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// One supremum with its witness. Ties (within kTieTolerance) go to the
/// smallest (level, index); value is always the exact maximum seen.
struct BumpValue {
  double value = 0.0;
  std::optional<DyadicCube> argmax;
  double rho_at_argmax = std::numeric_limits<double>::quiet_NaN();  // entropy constants only
  double average_at_argmax = std::numeric_limits<double>::quiet_NaN();  // direct constants only

  double witness_value = 0.0;

  /// Returns true when q becomes the new witness.
  bool offer(double v, const DyadicCube& q) {
    const bool moved = !argmax || v > witness_value * (1.0 + kTieTolerance);
    if (!argmax || v > value) value = v;
    if (moved) {
      argmax = q;
      witness_value = v;
    }
    return moved;
  }
};

/// Which characteristic the entropy dual constant uses: rho(Q; sigma) as
/// in the original statement, or rho(Q; w) as duality suggests.
enum class DualRho { as_printed, symmetric };

struct BumpReport {
  std::optional<BumpValue> A, E, E_star_printed, E_star_symmetric, D, D_star;
  std::optional<EntropyFunction> eps;
  DualRho dual_rho = DualRho::symmetric;

  const std::optional<BumpValue>& E_star() const {
    return dual_rho == DualRho::symmetric ? E_star_symmetric : E_star_printed;
  }
};

namespace detail {
inline void require_same_grid(const Weight& sigma, const Weight& w, const ExponentConfig& cfg) {
  if (sigma.grid() != w.grid()) throw Error("sigma and w live on different grids");
  if (cfg.dimension != sigma.grid().dimension) throw Error("exponent dimension does not match grid");
  cfg.validate();
}
}  // namespace detail

namespace detail {
// Visits every grid cube in flat order with its joint factor.
template <typename Fn>
void for_each_joint(const Weight& sigma, const Weight& w, const ExponentConfig& cfg, Fn&& fn) {
  const GridConfig& grid = sigma.grid();
  for (int k = 0; k <= grid.leaf_level; ++k) {
    const std::size_t off = grid.level_offset(k);
    const double vol = std::ldexp(1.0, -grid.dimension * k);
    for (std::size_t i = 0; i < grid.cubes_at_level(k); ++i) {
      const std::size_t id = off + i;
      fn(id, cube_at(grid, k, i), joint_factor(w.mass(id), sigma.mass(id), vol, cfg));
    }
  }
}
}  // namespace detail

inline BumpValue joint_apq_constant(const Weight& sigma, const Weight& w, const ExponentConfig& cfg) {
  detail::require_same_grid(sigma, w, cfg);
  BumpValue a;
  detail::for_each_joint(sigma, w, cfg, [&](std::size_t, const DyadicCube& q, double joint) { a.offer(joint, q); });
  return a;
}

/// E, E*_printed and E*_symmetric, plus A.
inline BumpReport entropy_bumps(const Weight& sigma, const Weight& w, const ExponentConfig& cfg,
                                const EntropyFunction& eps, DualRho dual_rho = DualRho::symmetric) {
  detail::require_same_grid(sigma, w, cfg);
  if (eps.kind() != EpsKind::entropy) throw Error("direct ε passed to entropy bump");
  const CubeField rho_sigma = rho_all(sigma);
  const CubeField rho_w = rho_all(w);
  const double inv_q = 1.0 / cfg.q;
  const double inv_pd = 1.0 / cfg.p_dual();
  BumpValue a, e, es_printed, es_sym;
  detail::for_each_joint(sigma, w, cfg, [&](std::size_t id, const DyadicCube& q, double joint) {
    a.offer(joint, q);
    // joint == 0 whenever sigma(Q) == 0 or w(Q) == 0, where rho is undefined.
    const double rs = joint == 0.0 ? 1.0 : rho_sigma[id];
    const double rw = joint == 0.0 ? 1.0 : rho_w[id];
    const double ve = entropy_expression(joint, rs, eps, inv_q);
    const double vp = entropy_expression(joint, rs, eps, inv_pd);
    const double vs = entropy_expression(joint, rw, eps, inv_pd);
    if (e.offer(ve, q)) e.rho_at_argmax = rs;
    if (es_printed.offer(vp, q)) es_printed.rho_at_argmax = rs;
    if (es_sym.offer(vs, q)) es_sym.rho_at_argmax = rw;
  });
  BumpReport r;
  r.A = a;
  r.E = e;
  r.E_star_printed = es_printed;
  r.E_star_symmetric = es_sym;
  r.eps = eps;
  r.dual_rho = dual_rho;
  return r;
}

/// D and D*, plus A.
inline BumpReport direct_bumps(const Weight& sigma, const Weight& w, const ExponentConfig& cfg,
                               const EntropyFunction& eps) {
  detail::require_same_grid(sigma, w, cfg);
  if (eps.kind() != EpsKind::direct) throw Error("entropy ε passed to direct bump");
  const double inv_q = 1.0 / cfg.q;
  const double inv_pd = 1.0 / cfg.p_dual();
  BumpValue a, d, ds;
  detail::for_each_joint(sigma, w, cfg, [&](std::size_t id, const DyadicCube& q, double joint) {
    a.offer(joint, q);
    const double vol = q.volume();
    const double avg_s = sigma.mass(id) / vol;
    const double avg_w = w.mass(id) / vol;
    const double vd = direct_expression(joint, avg_s, eps, inv_q);
    const double vds = direct_expression(joint, avg_w, eps, inv_pd);
    if (d.offer(vd, q)) d.average_at_argmax = avg_s;
    if (ds.offer(vds, q)) ds.average_at_argmax = avg_w;
  });
  BumpReport r;
  r.A = a;
  r.D = d;
  r.D_star = ds;
  r.eps = eps;
  return r;
}

}  // namespace sparsebump
