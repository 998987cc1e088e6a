#pragma once

// lambda-sparse families of dyadic cubes.
//
// A family S is lambda-sparse when, for every Q0 in S, the maximal members of
// S strictly inside Q0 cover at most lambda |Q0|. E_Q is Q minus those
// maximal members; the E_Q are pairwise disjoint.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/maximal.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump {

struct SparseCheck {
  bool ok = true;
  double worst_ratio = 0.0;
  std::optional<DyadicCube> witness;
};

namespace detail {

// Containment forest over a sorted, duplicate-free set of cubes.
struct CubeForest {
  std::vector<DyadicCube> cubes;
  std::vector<std::ptrdiff_t> parent;          // nearest strict ancestor in the set, or -1
  std::vector<std::vector<std::size_t>> kids;  // maximal strict subcubes in the set
  std::unordered_map<std::size_t, std::size_t> position;  // flat id -> index

  CubeForest(const GridConfig& grid, std::vector<DyadicCube> in) {
    std::sort(in.begin(), in.end());
    in.erase(std::unique(in.begin(), in.end()), in.end());
    cubes = std::move(in);
    parent.assign(cubes.size(), -1);
    kids.resize(cubes.size());
    position.reserve(cubes.size() * 2);
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      require_on_grid(cubes[i], grid);
      position.emplace(flat_id(grid, cubes[i]), i);
    }
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      for (int k = cubes[i].level - 1; k >= 0; --k) {
        const auto it = position.find(flat_id(grid, ancestor(cubes[i], k)));
        if (it != position.end()) {
          parent[i] = static_cast<std::ptrdiff_t>(it->second);
          kids[it->second].push_back(i);
          break;
        }
      }
    }
  }

  SparseCheck check(double lambda) const {
    SparseCheck out;
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      double covered = 0.0;
      for (std::size_t c : kids[i]) covered += cubes[c].volume();
      const double ratio = covered / cubes[i].volume();
      if (ratio > out.worst_ratio) {
        out.worst_ratio = ratio;
        out.witness = cubes[i];
      }
    }
    out.ok = out.worst_ratio <= lambda;
    return out;
  }
};

}  // namespace detail

/// Checks the lambda-sparseness inequality for every member.
inline SparseCheck verify_sparse(const GridConfig& grid, const std::vector<DyadicCube>& cubes, double lambda) {
  if (cubes.empty()) throw Error("empty cube family");
  return detail::CubeForest(grid, cubes).check(lambda);
}

class SparseFamily {
 public:
  /// Validates containment in `root` and lambda-sparseness.
  SparseFamily(const GridConfig& grid, const DyadicCube& root, double lambda, std::vector<DyadicCube> cubes)
      : grid_(grid), root_(root), lambda_(lambda), forest_(grid, std::move(cubes)) {
    grid.validate();
    require_on_grid(root, grid);
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error("lambda must lie in (0,1)");
    if (forest_.cubes.empty()) throw Error("empty cube family");
    for (const DyadicCube& q : forest_.cubes) {
      if (!contains(root, q)) throw Error("cube " + to_string(q) + " lies outside the family root");
    }
    const SparseCheck c = forest_.check(lambda);
    if (!c.ok) {
      throw Error("family is not " + std::to_string(lambda) + "-sparse at " + to_string(*c.witness));
    }
    paint_exceptional_sets();
  }

  const GridConfig& grid() const { return grid_; }
  const DyadicCube& root() const { return root_; }
  double lambda() const { return lambda_; }
  const std::vector<DyadicCube>& cubes() const { return forest_.cubes; }
  std::size_t size() const { return forest_.cubes.size(); }
  const DyadicCube& cube(std::size_t i) const { return forest_.cubes[i]; }

  std::optional<std::size_t> index_of(const DyadicCube& q) const {
    if (!on_grid(q, grid_)) return std::nullopt;
    const auto it = forest_.position.find(flat_id(grid_, q));
    if (it == forest_.position.end()) return std::nullopt;
    return it->second;
  }

  std::ptrdiff_t family_parent(std::size_t i) const { return forest_.parent[i]; }
  const std::vector<std::size_t>& maximal_subcubes(std::size_t i) const { return forest_.kids[i]; }

  /// Members contained in member i (including i), in preorder.
  std::vector<std::size_t> subtree(std::size_t i) const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      const std::size_t j = stack.back();
      stack.pop_back();
      out.push_back(j);
      const auto& k = forest_.kids[j];
      for (auto it = k.rbegin(); it != k.rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  /// Member index owning each leaf through E_Q, or -1 if no member contains it.
  const std::vector<std::int32_t>& leaf_owner() const { return owner_; }

  /// Mass of E_Q for every member under the given weight.
  std::vector<double> exceptional_masses(const Weight& w) const {
    if (w.grid() != grid_) throw Error("weight and family grids differ");
    std::vector<double> out(size(), 0.0);
    const double h = grid_.leaf_volume();
    for (std::size_t leaf = 0; leaf < owner_.size(); ++leaf) {
      if (owner_[leaf] >= 0) out[static_cast<std::size_t>(owner_[leaf])] += w.density()[leaf] * h;
    }
    return out;
  }

 private:
  void paint_exceptional_sets() {
    owner_.assign(grid_.leaf_count(), -1);
    // Sorted by level, so deeper members overwrite their ancestors.
    for (std::size_t i = 0; i < size(); ++i) {
      for_each_leaf(grid_, forest_.cubes[i], [&](std::size_t leaf) { owner_[leaf] = static_cast<std::int32_t>(i); });
    }
  }

  GridConfig grid_;
  DyadicCube root_;
  double lambda_;
  detail::CubeForest forest_;
  std::vector<std::int32_t> owner_;
};

/// E_Q as explicit leaf lists, aligned with family.cubes().
inline std::vector<std::vector<std::size_t>> exceptional_sets(const SparseFamily& family) {
  std::vector<std::vector<std::size_t>> out(family.size());
  const auto& owner = family.leaf_owner();
  for (std::size_t leaf = 0; leaf < owner.size(); ++leaf) {
    if (owner[leaf] >= 0) out[static_cast<std::size_t>(owner[leaf])].push_back(leaf);
  }
  return out;
}

/// Corona decomposition: the stopping children of a selected Q are the
/// maximal Q' inside Q with <sigma>_{Q'} > threshold * <sigma>_Q.
/// The result is (1/threshold)-sparse.
inline SparseFamily stopping_family(const Weight& sigma, double threshold, const DyadicCube& root) {
  const GridConfig& grid = sigma.grid();
  require_on_grid(root, grid);
  if (!(threshold > 1.0)) throw Error("stopping threshold must exceed 1");
  if (!(sigma.mass(root) > 0.0)) throw Error("degenerate weight on cube " + to_string(root));

  std::vector<DyadicCube> selected{root};
  std::vector<DyadicCube> queue{root};
  while (!queue.empty()) {
    const DyadicCube top = queue.back();
    queue.pop_back();
    if (top.level == grid.leaf_level) continue;
    const double bar = threshold * sigma.average(top);
    std::vector<DyadicCube> stack = children(top, grid);
    while (!stack.empty()) {
      const DyadicCube q = stack.back();
      stack.pop_back();
      if (sigma.average(q) > bar) {
        selected.push_back(q);
        queue.push_back(q);
      } else if (q.level < grid.leaf_level) {
        for (const DyadicCube& c : children(q, grid)) stack.push_back(c);
      }
    }
  }
  return SparseFamily(grid, root, 1.0 / threshold, std::move(selected));
}

/// Greedy random family: candidates are drawn in a seeded random order and
/// kept iff the accepted set stays lambda-sparse. Rejections are final.
inline SparseFamily random_sparse(const GridConfig& grid, double lambda, std::uint64_t seed,
                                  std::size_t target_size) {
  grid.validate();
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error("lambda must lie in (0,1)");
  if (target_size == 0) throw Error("target_size must be positive");

  struct Node {
    std::vector<std::size_t> kids;  // flat ids of maximal members inside
    double kid_volume = 0.0;        // exact: sums of powers of two
  };
  const DyadicCube root = root_cube(grid);
  std::unordered_map<std::size_t, Node> family;
  family.emplace(0, Node{});
  std::vector<DyadicCube> accepted{root};

  std::vector<std::size_t> pool(grid.cube_count() - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);

  auto cube_of = [&](std::size_t id) {
    int k = 0;
    while (grid.level_offset(k + 1) <= id) ++k;
    return cube_at(grid, k, id - grid.level_offset(k));
  };

  for (std::size_t id : pool) {
    if (accepted.size() >= target_size) break;
    const DyadicCube c = cube_of(id);
    std::size_t parent_id = 0;
    for (int k = c.level - 1; k >= 0; --k) {
      const std::size_t a = flat_id(grid, ancestor(c, k));
      if (family.count(a) != 0) {
        parent_id = a;
        break;
      }
    }
    Node& p = family[parent_id];
    const DyadicCube pc = cube_of(parent_id);
    std::vector<std::size_t> inside;
    std::vector<std::size_t> outside;
    double inside_volume = 0.0;
    for (std::size_t kid : p.kids) {
      const DyadicCube kc = cube_of(kid);
      if (contains(c, kc)) {
        inside.push_back(kid);
        inside_volume += kc.volume();
      } else {
        outside.push_back(kid);
      }
    }
    const double parent_cover = p.kid_volume - inside_volume + c.volume();
    if (parent_cover > lambda * pc.volume() || inside_volume > lambda * c.volume()) continue;
    outside.push_back(id);
    p.kids = std::move(outside);
    p.kid_volume = parent_cover;
    family.emplace(id, Node{std::move(inside), inside_volume});
    accepted.push_back(c);
  }
  return SparseFamily(grid, root, lambda, std::move(accepted));
}

struct CarlesonResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

/// sum_{Q in S, Q ⊆ Q0} sigma(Q) against rho(Q0; sigma) sigma(Q0) / (1 - lambda).
inline CarlesonResult carleson_check(const SparseFamily& family, const Weight& sigma, const DyadicCube& q0) {
  if (sigma.grid() != family.grid()) throw Error("weight and family grids differ");
  const auto idx = family.index_of(q0);
  if (!idx) throw Error("cube " + to_string(q0) + " is not in the family");
  CarlesonResult r;
  for (std::size_t j : family.subtree(*idx)) r.lhs += sigma.mass(family.cube(j));
  r.rhs = rho(sigma, q0) * sigma.mass(q0) / (1.0 - family.lambda());
  r.ratio = r.lhs / r.rhs;
  return r;
}

}  // namespace sparsebump
