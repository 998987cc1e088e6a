#pragma once

// Dyadic maximal function, local A-infinity characteristic rho(Q; sigma)
// and the dyadic fractional maximal operator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump {

/// M(sigma 1_Q) on the leaves; leaves outside Q are 0.
///
/// Only cubes inside Q matter: any Q' containing Q has average
/// sigma(Q)/|Q'| <= <sigma>_Q.
inline LeafFunction dyadic_maximal(const Weight& sigma, const DyadicCube& q) {
  const GridConfig& grid = sigma.grid();
  require_on_grid(q, grid);
  std::vector<double> out(grid.leaf_count(), 0.0);
  for_each_leaf(grid, q, [&](std::size_t leaf) {
    double best = 0.0;
    for (int k = q.level; k <= grid.leaf_level; ++k) {
      const std::size_t id = grid.level_offset(k) + leaf_ancestor_index(grid, leaf, k);
      best = std::max(best, std::ldexp(sigma.mass(id), grid.dimension * k));
    }
    out[leaf] = best;
  });
  return LeafFunction(grid, std::move(out));
}

/// rho(Q; sigma) = (1/sigma(Q)) * integral over Q of M(sigma 1_Q).
inline double rho(const Weight& sigma, const DyadicCube& q) {
  const double m = sigma.mass(q);
  if (!(m > 0.0)) throw Error("degenerate weight on cube " + to_string(q));
  const LeafFunction mf = dyadic_maximal(sigma, q);
  double integral = 0.0;
  for_each_leaf(sigma.grid(), q, [&](std::size_t leaf) { integral += mf.values[leaf]; });
  integral *= sigma.grid().leaf_volume();
  // M >= <sigma>_Q on Q, so the exact value is >= 1; clamp rounding below it.
  return std::max(1.0, integral / m);
}

/// rho(Q; sigma) for every grid cube at once, indexed by flat id.
/// Cubes with sigma(Q) = 0 get NaN.
///
/// For a leaf x and the chain of its ancestors Q_0 ⊃ ... ⊃ Q_N, the value of
/// M(sigma 1_{Q_k}) at x is max(<sigma>_{Q_k}, ..., <sigma>_{Q_N}), a suffix
/// maximum of the chain averages.
inline CubeField rho_all(const Weight& sigma) {
  const GridConfig& grid = sigma.grid();
  const int n_levels = grid.leaf_level + 1;
  const double h = grid.leaf_volume();
  CubeField integral(grid.cube_count(), 0.0);
  std::vector<std::size_t> ids(static_cast<std::size_t>(n_levels));
  for (std::size_t leaf = 0; leaf < grid.leaf_count(); ++leaf) {
    for (int k = 0; k < n_levels; ++k) {
      ids[static_cast<std::size_t>(k)] = grid.level_offset(k) + leaf_ancestor_index(grid, leaf, k);
    }
    double suffix = 0.0;
    for (int k = grid.leaf_level; k >= 0; --k) {
      const std::size_t id = ids[static_cast<std::size_t>(k)];
      suffix = std::max(suffix, std::ldexp(sigma.mass(id), grid.dimension * k));
      integral[id] += suffix * h;
    }
  }
  for (std::size_t id = 0; id < integral.size(); ++id) {
    const double m = sigma.mass(id);
    integral[id] = m > 0.0 ? std::max(1.0, integral[id] / m) : std::numeric_limits<double>::quiet_NaN();
  }
  return integral;
}

/// M_alpha g = sup over dyadic Q' containing the leaf of |Q'|^{alpha/d} <|g|>_{Q'}.
inline LeafFunction fractional_maximal(const LeafFunction& g, double alpha, const GridConfig& grid) {
  grid.validate();
  if (!(alpha >= 0.0 && alpha < grid.dimension)) throw Error("invalid fractional order");
  if (g.grid != grid) throw Error("leaf function is on a different grid");
  const double h = grid.leaf_volume();
  std::vector<double> abs_mass(g.values.size());
  for (std::size_t i = 0; i < abs_mass.size(); ++i) abs_mass[i] = std::abs(g.values[i]) * h;
  const CubeField sums = sum_up(grid, abs_mass);

  // |Q|^{alpha/d - 1} per level.
  std::vector<double> scale(static_cast<std::size_t>(grid.leaf_level) + 1);
  for (int k = 0; k <= grid.leaf_level; ++k) {
    const double vol = std::ldexp(1.0, -grid.dimension * k);
    scale[static_cast<std::size_t>(k)] = std::pow(vol, alpha / grid.dimension) / vol;
  }
  std::vector<double> out(grid.leaf_count());
  for (std::size_t leaf = 0; leaf < out.size(); ++leaf) {
    double best = 0.0;
    for (int k = 0; k <= grid.leaf_level; ++k) {
      const std::size_t id = grid.level_offset(k) + leaf_ancestor_index(grid, leaf, k);
      best = std::max(best, scale[static_cast<std::size_t>(k)] * sums[id]);
    }
    out[leaf] = best;
  }
  return LeafFunction(grid, std::move(out));
}

}  // namespace sparsebump
