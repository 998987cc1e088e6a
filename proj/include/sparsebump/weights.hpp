#pragma once

// Piecewise-constant weights on the leaves of a dyadic grid.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"

namespace sparsebump {

enum class WeightKind { density, constant, power, counterexample_sigma, counterexample_w, random_cascade };

inline std::string_view kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::density: return "density";
    case WeightKind::constant: return "constant";
    case WeightKind::power: return "power";
    case WeightKind::counterexample_sigma: return "counterexample_sigma";
    case WeightKind::counterexample_w: return "counterexample_w";
    case WeightKind::random_cascade: return "random_cascade";
  }
  return "density";
}

/// How a weight was produced. `density` means explicit leaf values.
struct WeightGenerator {
  WeightKind kind = WeightKind::density;
  double value = 1.0;        // constant level c, or exponent beta for power
  std::uint64_t seed = 0;    // random_cascade
  double volatility = 0.0;   // random_cascade, in (0,1)

  static WeightGenerator constant(double c) { return {WeightKind::constant, c, 0, 0.0}; }
  static WeightGenerator power(double beta) { return {WeightKind::power, beta, 0, 0.0}; }
  static WeightGenerator counterexample_sigma() { return {WeightKind::counterexample_sigma, 0.0, 0, 0.0}; }
  static WeightGenerator counterexample_w() { return {WeightKind::counterexample_w, 2.0, 0, 0.0}; }
  static WeightGenerator random_cascade(std::uint64_t seed, double v) {
    return {WeightKind::random_cascade, 0.0, seed, v};
  }

  friend bool operator==(const WeightGenerator&, const WeightGenerator&) = default;
};

/// Parses "constant:C", "power:BETA", "ce-sigma", "ce-w", "cascade:SEED:V".
inline WeightGenerator parse_generator(std::string_view text) {
  auto field = [&](std::size_t from) {
    const auto colon = text.find(':', from);
    return std::string(text.substr(from, colon == std::string_view::npos ? text.npos : colon - from));
  };
  try {
    if (text == "ce-sigma" || text == "counterexample_sigma") return WeightGenerator::counterexample_sigma();
    if (text == "ce-w" || text == "counterexample_w") return WeightGenerator::counterexample_w();
    if (text.starts_with("constant:")) return WeightGenerator::constant(std::stod(field(9)));
    if (text.starts_with("power:")) return WeightGenerator::power(std::stod(field(6)));
    if (text.starts_with("cascade:")) {
      const auto second = text.find(':', 8);
      if (second == std::string_view::npos) throw Error("bad generator parameter");
      return WeightGenerator::random_cascade(std::stoull(field(8)), std::stod(field(second + 1)));
    }
  } catch (const std::logic_error&) {
    throw Error("bad generator parameter");
  }
  throw Error("unknown weight generator: " + std::string(text));
}

namespace detail {

// Mass of x^beta over (a, b], 0 <= a < b. Written via log1p/expm1 so that
// thin intervals away from 0 keep full relative precision.
inline double power_interval_mass(double beta, double a, double b) {
  const double e = beta + 1.0;
  if (a == 0.0) return std::pow(b, e) / e;
  return std::pow(a, e) * std::expm1(e * std::log1p((b - a) / a)) / e;
}

// Mass of 1/(x (1 - ln x)^2) over (a, b] in (0, 1]; antiderivative 1/(1 - ln x).
inline double counterexample_interval_mass(double a, double b) {
  if (a == 0.0) return 1.0 / (1.0 - std::log(b));
  const double dlog = std::log1p((b - a) / a);
  return dlog / ((1.0 - std::log(a)) * (1.0 - std::log(b)));
}

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

class Weight {
 public:
  Weight() = default;

  /// Weight with the given leaf densities (mass per unit volume).
  static Weight from_density(const GridConfig& grid, std::vector<double> density,
                             WeightGenerator origin = {}) {
    grid.validate();
    if (density.size() != grid.leaf_count()) throw Error("leaf density length does not match grid");
    const double h = grid.leaf_volume();
    std::vector<double> leaf_mass(density.size());
    for (std::size_t i = 0; i < density.size(); ++i) {
      if (!(density[i] >= 0.0) || !std::isfinite(density[i])) throw Error("weight densities must be finite and >= 0");
      leaf_mass[i] = density[i] * h;
    }
    Weight w;
    w.grid_ = grid;
    w.origin_ = origin;
    w.density_ = std::move(density);
    w.mass_ = sum_up(grid, leaf_mass);
    if (!(w.mass_[0] > 0.0)) throw Error("weight has zero total mass");
    return w;
  }

  static Weight from_leaf_masses(const GridConfig& grid, const std::vector<double>& leaf_mass,
                                 WeightGenerator origin = {}) {
    const double inv_h = std::ldexp(1.0, grid.dimension * grid.leaf_level);
    std::vector<double> density(leaf_mass.size());
    for (std::size_t i = 0; i < leaf_mass.size(); ++i) density[i] = leaf_mass[i] * inv_h;
    return from_density(grid, std::move(density), origin);
  }

  const GridConfig& grid() const { return grid_; }
  const WeightGenerator& origin() const { return origin_; }
  const std::vector<double>& density() const { return density_; }
  const CubeField& masses() const { return mass_; }

  double mass(const DyadicCube& q) const { return mass_[flat_id(grid_, q)]; }
  double mass(std::size_t flat) const { return mass_[flat]; }
  double average(const DyadicCube& q) const { return mass(q) / q.volume(); }
  double total_mass() const { return mass_[0]; }

  /// c * sigma; keeps the generator tag only for constant weights.
  Weight scaled(double c) const {
    if (!(c > 0.0)) throw Error("scale factor must be positive");
    std::vector<double> d(density_);
    for (double& x : d) x *= c;
    WeightGenerator o{};
    if (origin_.kind == WeightKind::constant) o = WeightGenerator::constant(origin_.value * c);
    return from_density(grid_, std::move(d), o);
  }

 private:
  GridConfig grid_{};
  WeightGenerator origin_{};
  std::vector<double> density_;
  CubeField mass_;
};

/// Samples a weight from one of the generator families.
inline Weight generate_weight(const GridConfig& grid, const WeightGenerator& gen) {
  grid.validate();
  const std::size_t n = grid.leaf_count();
  const bool one_d = grid.dimension == 1;
  switch (gen.kind) {
    case WeightKind::constant: {
      if (!(gen.value > 0.0) || !std::isfinite(gen.value)) throw Error("bad generator parameter");
      return Weight::from_density(grid, std::vector<double>(n, gen.value), gen);
    }
    case WeightKind::power:
    case WeightKind::counterexample_w:
    case WeightKind::counterexample_sigma: {
      if (!one_d) throw Error("bad generator parameter");
      if (gen.kind != WeightKind::counterexample_sigma && !(gen.value > -1.0)) {
        throw Error("bad generator parameter");
      }
      std::vector<double> leaf_mass(n);
      for (std::size_t i = 0; i < n; ++i) {
        const DyadicCube leaf = leaf_cube(grid, i);
        const double a = leaf.lower(0);
        const double b = leaf.upper(0);
        leaf_mass[i] = gen.kind == WeightKind::counterexample_sigma
                           ? detail::counterexample_interval_mass(a, b)
                           : detail::power_interval_mass(gen.value, a, b);
      }
      return Weight::from_leaf_masses(grid, leaf_mass, gen);
    }
    case WeightKind::random_cascade: {
      if (!(gen.volatility > 0.0 && gen.volatility < 1.0)) throw Error("bad generator parameter");
      std::mt19937_64 rng(gen.seed);
      const std::size_t kids = grid.children_per_cube();
      std::vector<double> level_mass{1.0};
      for (int k = 0; k < grid.leaf_level; ++k) {
        std::vector<double> next(level_mass.size() * kids);
        for (std::size_t i = 0; i < level_mass.size(); ++i) {
          double share[4];
          double total = 0.0;
          if (kids == 2) {
            const double u = 2.0 * detail::unit_uniform(rng) - 1.0;
            share[0] = 0.5 * (1.0 + gen.volatility * u);
            share[1] = 0.5 * (1.0 - gen.volatility * u);
            total = 1.0;
          } else {
            for (std::size_t c = 0; c < 4; ++c) {
              share[c] = 1.0 + gen.volatility * (2.0 * detail::unit_uniform(rng) - 1.0);
              total += share[c];
            }
          }
          const DyadicCube q = cube_at(grid, k, i);
          std::size_t c = 0;
          for (const DyadicCube& child : children(q, grid)) {
            next[child.linear_index()] = level_mass[i] * share[c++] / total;
          }
        }
        level_mass = std::move(next);
      }
      return Weight::from_leaf_masses(grid, level_mass, gen);
    }
    case WeightKind::density:
      break;
  }
  throw Error("bad generator parameter");
}

/// Discrete sum of sigma log(e + sigma) over the leaves.
inline double llogl_integral(const Weight& sigma) {
  const double h = sigma.grid().leaf_volume();
  double total = 0.0;
  for (double s : sigma.density()) {
    if (s > 0.0) total += s * std::log(std::numbers::e + s) * h;
  }
  return total;
}

/// Signed leaf values of a test function.
struct LeafFunction {
  GridConfig grid{};
  std::vector<double> values;

  LeafFunction() = default;
  LeafFunction(const GridConfig& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.leaf_count()) throw Error("leaf function length does not match grid");
  }
  static LeafFunction constant(const GridConfig& g, double c) {
    return LeafFunction(g, std::vector<double>(g.leaf_count(), c));
  }
};

}  // namespace sparsebump
