#pragma once

// Dyadic tree over the unit cube [0,1)^d.
//
// Cubes are half-open products prod_i [j_i 2^-k, (j_i+1) 2^-k). Every cube of
// levels 0..N has a flat id: cubes are laid out level by level, and within a
// level by row-major index (j1 * 2^k + j2 for d = 2). Leaves use the same
// row-major order at level N, so leaf i of the grid is cube
// flat_id = level_offset(N) + i.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparsebump/error.hpp"

namespace sparsebump {

struct GridConfig {
  int dimension = 1;
  int leaf_level = 0;

  static constexpr int kMaxLevel1d = 24;
  static constexpr int kMaxLevel2d = 12;

  void validate() const {
    if (dimension != 1 && dimension != 2) throw Error("grid dimension must be 1 or 2");
    const int cap = dimension == 1 ? kMaxLevel1d : kMaxLevel2d;
    if (leaf_level < 1 || leaf_level > cap) {
      throw Error("leaf_level out of range for dimension " + std::to_string(dimension));
    }
  }

  /// Number of cubes at level k, 2^{dk}.
  std::size_t cubes_at_level(int k) const { return std::size_t{1} << (dimension * k); }

  /// Flat id of the first cube at level k: sum_{i<k} 2^{di}.
  std::size_t level_offset(int k) const {
    return ((std::size_t{1} << (dimension * k)) - 1) / ((std::size_t{1} << dimension) - 1);
  }

  std::size_t leaf_count() const { return cubes_at_level(leaf_level); }
  std::size_t cube_count() const { return level_offset(leaf_level + 1); }
  std::size_t children_per_cube() const { return std::size_t{1} << dimension; }

  double leaf_volume() const { return std::ldexp(1.0, -dimension * leaf_level); }

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct DyadicCube {
  int level = 0;
  std::array<std::uint32_t, 2> index{0, 0};
  int dimension = 1;

  friend auto operator<=>(const DyadicCube&, const DyadicCube&) = default;
  friend bool operator==(const DyadicCube&, const DyadicCube&) = default;

  /// Exact volume 2^{-dk}.
  double volume() const { return std::ldexp(1.0, -dimension * level); }

  /// Row-major index within the level.
  std::size_t linear_index() const {
    if (dimension == 1) return index[0];
    return (std::size_t{index[0]} << level) | index[1];
  }

  /// Left endpoint of coordinate i.
  double lower(int i) const { return std::ldexp(static_cast<double>(index[i]), -level); }
  double upper(int i) const { return std::ldexp(static_cast<double>(index[i]) + 1.0, -level); }
};

inline DyadicCube root_cube(const GridConfig& grid) { return DyadicCube{0, {0, 0}, grid.dimension}; }

inline DyadicCube make_cube(int dimension, int level, std::uint32_t j1, std::uint32_t j2 = 0) {
  return DyadicCube{level, {j1, dimension == 2 ? j2 : 0u}, dimension};
}

inline bool on_grid(const DyadicCube& q, const GridConfig& grid) {
  if (q.dimension != grid.dimension || q.level < 0 || q.level > grid.leaf_level) return false;
  const std::uint64_t side = std::uint64_t{1} << q.level;
  if (q.index[0] >= side) return false;
  return grid.dimension == 1 ? q.index[1] == 0 : q.index[1] < side;
}

inline void require_on_grid(const DyadicCube& q, const GridConfig& grid) {
  if (!on_grid(q, grid)) throw Error("cube is not on the grid");
}

inline std::size_t flat_id(const GridConfig& grid, const DyadicCube& q) {
  return grid.level_offset(q.level) + q.linear_index();
}

inline DyadicCube cube_at(const GridConfig& grid, int level, std::size_t linear) {
  if (grid.dimension == 1) return make_cube(1, level, static_cast<std::uint32_t>(linear));
  const std::size_t mask = (std::size_t{1} << level) - 1;
  return make_cube(2, level, static_cast<std::uint32_t>(linear >> level),
                   static_cast<std::uint32_t>(linear & mask));
}

inline DyadicCube leaf_cube(const GridConfig& grid, std::size_t leaf) {
  return cube_at(grid, grid.leaf_level, leaf);
}

/// The ancestor of q at level k <= q.level.
inline DyadicCube ancestor(const DyadicCube& q, int k) {
  const int shift = q.level - k;
  DyadicCube a = q;
  a.level = k;
  a.index[0] >>= shift;
  a.index[1] >>= shift;
  return a;
}

inline DyadicCube parent(const DyadicCube& q) {
  if (q.level == 0) throw Error("root has no parent");
  return ancestor(q, q.level - 1);
}

/// True iff inner is a subset of outer. Reflexive.
inline bool contains(const DyadicCube& outer, const DyadicCube& inner) {
  if (outer.dimension != inner.dimension || inner.level < outer.level) return false;
  const int shift = inner.level - outer.level;
  return (inner.index[0] >> shift) == outer.index[0] && (inner.index[1] >> shift) == outer.index[1];
}

inline std::vector<DyadicCube> children(const DyadicCube& q, const GridConfig& grid) {
  require_on_grid(q, grid);
  if (q.level >= grid.leaf_level) throw Error("no children");
  std::vector<DyadicCube> out;
  out.reserve(grid.children_per_cube());
  if (grid.dimension == 1) {
    for (std::uint32_t b = 0; b < 2; ++b) out.push_back(make_cube(1, q.level + 1, 2 * q.index[0] + b));
  } else {
    for (std::uint32_t b0 = 0; b0 < 2; ++b0)
      for (std::uint32_t b1 = 0; b1 < 2; ++b1)
        out.push_back(make_cube(2, q.level + 1, 2 * q.index[0] + b0, 2 * q.index[1] + b1));
  }
  return out;
}

/// Every cube of levels 0..N once, in (level, index) order; position == flat_id.
inline std::vector<DyadicCube> enumerate_cubes(const GridConfig& grid) {
  grid.validate();
  std::vector<DyadicCube> out;
  out.reserve(grid.cube_count());
  for (int k = 0; k <= grid.leaf_level; ++k) {
    const std::size_t n = grid.cubes_at_level(k);
    for (std::size_t i = 0; i < n; ++i) out.push_back(cube_at(grid, k, i));
  }
  return out;
}

/// Calls fn(leaf_index) for every leaf inside q, in increasing leaf order.
template <typename Fn>
void for_each_leaf(const GridConfig& grid, const DyadicCube& q, Fn&& fn) {
  const int shift = grid.leaf_level - q.level;
  const std::size_t side = std::size_t{1} << shift;
  if (grid.dimension == 1) {
    const std::size_t first = std::size_t{q.index[0]} << shift;
    for (std::size_t i = 0; i < side; ++i) fn(first + i);
    return;
  }
  const std::size_t row0 = std::size_t{q.index[0]} << shift;
  const std::size_t col0 = std::size_t{q.index[1]} << shift;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) fn(((row0 + r) << grid.leaf_level) | (col0 + c));
}

/// Linear index at level k of the ancestor of leaf `leaf`.
inline std::size_t leaf_ancestor_index(const GridConfig& grid, std::size_t leaf, int k) {
  const int shift = grid.leaf_level - k;
  if (grid.dimension == 1) return leaf >> shift;
  const std::size_t mask = (std::size_t{1} << grid.leaf_level) - 1;
  const std::size_t row = (leaf >> grid.leaf_level) >> shift;
  const std::size_t col = (leaf & mask) >> shift;
  return (row << k) | col;
}

/// Per-cube values indexed by flat_id.
using CubeField = std::vector<double>;

/// Sums leaf values up the tree: result[Q] = sum of leaf values inside Q.
/// Children are added in index order, so the result is bitwise reproducible
/// and every parent equals the floating sum of its children.
inline CubeField sum_up(const GridConfig& grid, const std::vector<double>& leaf_values) {
  if (leaf_values.size() != grid.leaf_count()) throw Error("leaf vector length does not match grid");
  CubeField field(grid.cube_count(), 0.0);
  const std::size_t leaf_off = grid.level_offset(grid.leaf_level);
  std::copy(leaf_values.begin(), leaf_values.end(), field.begin() + static_cast<std::ptrdiff_t>(leaf_off));
  for (int k = grid.leaf_level - 1; k >= 0; --k) {
    const std::size_t off = grid.level_offset(k);
    const std::size_t child_off = grid.level_offset(k + 1);
    const std::size_t n = grid.cubes_at_level(k);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      if (grid.dimension == 1) {
        s = field[child_off + 2 * i] + field[child_off + 2 * i + 1];
      } else {
        const std::size_t side = std::size_t{1} << (k + 1);
        const std::size_t r = 2 * (i >> k);
        const std::size_t c = 2 * (i & ((std::size_t{1} << k) - 1));
        s = field[child_off + r * side + c] + field[child_off + r * side + c + 1] +
            field[child_off + (r + 1) * side + c] + field[child_off + (r + 1) * side + c + 1];
      }
      field[off + i] = s;
    }
  }
  return field;
}

/// Adjoint of sum_up: leaf i receives the sum of field over all cubes containing it.
inline std::vector<double> push_down(const GridConfig& grid, const CubeField& field) {
  if (field.size() != grid.cube_count()) throw Error("cube field length does not match grid");
  std::vector<double> acc(field.begin(), field.begin() + 1);
  for (int k = 1; k <= grid.leaf_level; ++k) {
    const std::size_t off = grid.level_offset(k);
    const std::size_t n = grid.cubes_at_level(k);
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t parent_linear;
      if (grid.dimension == 1) {
        parent_linear = i >> 1;
      } else {
        const std::size_t row = (i >> k) >> 1;
        const std::size_t col = (i & ((std::size_t{1} << k) - 1)) >> 1;
        parent_linear = (row << (k - 1)) | col;
      }
      next[i] = acc[parent_linear] + field[off + i];
    }
    acc = std::move(next);
  }
  return acc;
}

/// Report form: "k:j" for d = 1, "k:(j1,j2)" for d = 2.
inline std::string to_string(const DyadicCube& q) {
  std::string s = std::to_string(q.level) + ":";
  if (q.dimension == 1) return s + std::to_string(q.index[0]);
  return s + "(" + std::to_string(q.index[0]) + "," + std::to_string(q.index[1]) + ")";
}

namespace detail {
inline std::uint32_t parse_uint(std::string_view s, std::string_view whole) {
  if (s.empty()) throw Error("malformed cube: " + std::string(whole));
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw Error("malformed cube: " + std::string(whole));
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (v > 0xffffffffULL) throw Error("malformed cube: " + std::string(whole));
  }
  return static_cast<std::uint32_t>(v);
}
}  // namespace detail

/// Inverse of to_string. The dimension is inferred from the index form.
inline DyadicCube parse_cube(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error("malformed cube: " + std::string(text));
  const int level = static_cast<int>(detail::parse_uint(text.substr(0, colon), text));
  std::string_view rest = text.substr(colon + 1);
  DyadicCube q;
  if (!rest.empty() && rest.front() == '(') {
    if (rest.back() != ')') throw Error("malformed cube: " + std::string(text));
    rest = rest.substr(1, rest.size() - 2);
    const auto comma = rest.find(',');
    if (comma == std::string_view::npos) throw Error("malformed cube: " + std::string(text));
    q = make_cube(2, level, detail::parse_uint(rest.substr(0, comma), text),
                  detail::parse_uint(rest.substr(comma + 1), text));
  } else {
    q = make_cube(1, level, detail::parse_uint(rest, text));
  }
  if (level > 31 || (q.index[0] >> level) != 0 || (q.index[1] >> level) != 0) {
    throw Error("cube index out of range: " + std::string(text));
  }
  return q;
}

}  // namespace sparsebump
