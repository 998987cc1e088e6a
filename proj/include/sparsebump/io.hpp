#pragma once

// JSON forms of weights, families and reports.

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsebump/bumps.hpp"
#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/operators.hpp"
#include "sparsebump/prooftrace.hpp"
#include "sparsebump/sparse.hpp"
#include "sparsebump/weights.hpp"

namespace sparsebump::io {

using nlohmann::json;

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline json cube_json(const std::optional<DyadicCube>& q) { return q ? json(to_string(*q)) : json(nullptr); }

// NaN and inf have no JSON literal; they become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---- weights ---------------------------------------------------------------

inline json generator_parameters(const WeightGenerator& g) {
  switch (g.kind) {
    case WeightKind::constant: return {{"c", g.value}};
    case WeightKind::power: return {{"beta", g.value}};
    case WeightKind::counterexample_w: return {{"beta", 2.0}};
    case WeightKind::random_cascade: return {{"seed", g.seed}, {"volatility", g.volatility}};
    default: return json::object();
  }
}

/// {dimension, leaf_level, kind, parameters, leaf_density}. Densities are
/// written in shortest round-trip form, so reading them back is exact.
inline json weight_to_json(const Weight& w) {
  return {{"dimension", w.grid().dimension},
          {"leaf_level", w.grid().leaf_level},
          {"kind", std::string(kind_name(w.origin().kind))},
          {"parameters", generator_parameters(w.origin())},
          {"leaf_density", w.density()}};
}

inline WeightGenerator generator_from_json(const json& j) {
  const std::string kind = j.value("kind", "density");
  const json params = j.value("parameters", json::object());
  if (kind == "density") return {};
  if (kind == "constant") return WeightGenerator::constant(params.value("c", 1.0));
  if (kind == "power") return WeightGenerator::power(params.at("beta").get<double>());
  if (kind == "counterexample_sigma") return WeightGenerator::counterexample_sigma();
  if (kind == "counterexample_w") return WeightGenerator::counterexample_w();
  if (kind == "random_cascade") {
    return WeightGenerator::random_cascade(params.at("seed").get<std::uint64_t>(),
                                           params.at("volatility").get<double>());
  }
  throw Error("unknown weight kind: " + kind);
}

/// Explicit leaf_density wins; otherwise the generator is re-run.
inline Weight weight_from_json(const json& j) {
  try {
    const GridConfig grid{j.at("dimension").get<int>(), j.at("leaf_level").get<int>()};
    grid.validate();
    const WeightGenerator gen = generator_from_json(j);
    if (j.contains("leaf_density")) {
      return Weight::from_density(grid, j.at("leaf_density").get<std::vector<double>>(), gen);
    }
    if (gen.kind == WeightKind::density) throw Error("density weight without leaf_density");
    return generate_weight(grid, gen);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed weight record: ") + e.what());
  }
}

// ---- families --------------------------------------------------------------

/// {lambda, root, cubes}; grid fields are included so the file stands alone.
inline json family_to_json(const SparseFamily& s) {
  json cubes = json::array();
  for (const DyadicCube& q : s.cubes()) cubes.push_back(to_string(q));
  return {{"lambda", s.lambda()},
          {"root", to_string(s.root())},
          {"cubes", cubes},
          {"dimension", s.grid().dimension},
          {"leaf_level", s.grid().leaf_level}};
}

/// `grid` supplies the leaf level when the record omits it.
inline SparseFamily family_from_json(const json& j, std::optional<GridConfig> grid = std::nullopt) {
  try {
    GridConfig g{};
    if (j.contains("leaf_level")) {
      g = GridConfig{j.value("dimension", 1), j.at("leaf_level").get<int>()};
      if (grid && *grid != g) throw Error("family grid does not match weight grid");
    } else if (grid) {
      g = *grid;
    } else {
      throw Error("family record has no leaf_level and no grid was supplied");
    }
    std::vector<DyadicCube> cubes;
    for (const auto& c : j.at("cubes")) cubes.push_back(parse_cube(c.get<std::string>()));
    const DyadicCube root = j.contains("root") ? parse_cube(j.at("root").get<std::string>()) : root_cube(g);
    return SparseFamily(g, root, j.at("lambda").get<double>(), std::move(cubes));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed family record: ") + e.what());
  }
}

// ---- reports ---------------------------------------------------------------

inline json eps_json(const EntropyFunction& e) {
  return {{"kind", std::string(eps_kind_name(e.kind()))},
          {"delta", e.is_tabulated() ? json(nullptr) : json(e.delta())},
          {"tail_sum", e.tail_sum()}};
}

/// Parses "entropy:DELTA" or "direct:DELTA".
inline EntropyFunction parse_eps(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error("epsilon must look like entropy:DELTA or direct:DELTA");
  const std::string kind = text.substr(0, colon);
  double delta = 0.0;
  try {
    delta = std::stod(text.substr(colon + 1));
  } catch (const std::logic_error&) {
    throw Error("bad epsilon delta in " + text);
  }
  if (kind == "entropy") return EntropyFunction::entropy(delta);
  if (kind == "direct") return EntropyFunction::direct(delta);
  throw Error("unknown epsilon kind: " + kind);
}

inline json bump_value_json(const std::optional<BumpValue>& b) {
  if (!b) return nullptr;
  json j{{"value", b->value}, {"argmax", cube_json(b->argmax)}};
  if (!std::isnan(b->rho_at_argmax)) j["rho"] = b->rho_at_argmax;
  if (!std::isnan(b->average_at_argmax)) j["average"] = b->average_at_argmax;
  return j;
}

/// {A, E, E_star_printed, E_star_symmetric, D, D_star, argmax, eps}; absent
/// constants are null.
inline json bump_report_json(const BumpReport& r) {
  auto val = [](const std::optional<BumpValue>& b) { return b ? json(b->value) : json(nullptr); };
  json argmax = json::object();
  const std::pair<const char*, const std::optional<BumpValue>*> all[] = {
      {"A", &r.A}, {"E", &r.E}, {"E_star_printed", &r.E_star_printed}, {"E_star_symmetric", &r.E_star_symmetric},
      {"D", &r.D}, {"D_star", &r.D_star}};
  for (const auto& [name, b] : all) {
    if (*b) argmax[name] = bump_value_json(*b);
  }
  return {{"A", val(r.A)},
          {"E", val(r.E)},
          {"E_star_printed", val(r.E_star_printed)},
          {"E_star_symmetric", val(r.E_star_symmetric)},
          {"D", val(r.D)},
          {"D_star", val(r.D_star)},
          {"dual_rho", r.dual_rho == DualRho::symmetric ? "symmetric" : "as_printed"},
          {"argmax", argmax},
          {"eps", r.eps ? eps_json(*r.eps) : json(nullptr)}};
}

/// {p, q, alpha, T, T_star, argmax_R, argmax_R_star, mode}.
inline json testing_report_json(const TestingReport& r) {
  return {{"p", r.cfg.p},
          {"q", r.cfg.q},
          {"alpha", r.cfg.alpha},
          {"T", r.T},
          {"T_star", r.T_star},
          {"argmax_R", cube_json(r.argmax_R)},
          {"argmax_R_star", cube_json(r.argmax_R_star)},
          {"mode", std::string(mode_name(r.cfg.mode))},
          {"extended_warning", r.extended_warning}};
}

inline json trace_report_json(const TraceReport& r) {
  json strata = json::array();
  for (const StratumRecord& s : r.strata) {
    strata.push_back({{"a", s.a},
                      {"top", to_string(s.top)},
                      {"size", s.size},
                      {"band_eps", s.band_eps},
                      {"inner_lhs", s.inner_lhs},
                      {"inner_bound", s.inner_bound},
                      {"realized_constant", s.realized_constant},
                      {"packing_lhs", s.packing_lhs},
                      {"packing_bound", s.packing_bound},
                      {"term_bound_ok", s.term_bound_ok},
                      {"power_step_ok", s.power_step_ok},
                      {"packing_ok", s.packing_ok},
                      {"pass", s.pass}});
  }
  json failure = nullptr;
  if (r.failure) {
    failure = {{"stage", r.failure->stage},
               {"a", r.failure->a},
               {"top", cube_json(r.failure->top)},
               {"detail", r.failure->detail}};
  }
  return {{"schema", "trace/v1"},
          {"kind", std::string(trace_kind_name(r.kind))},
          {"dual", r.dual},
          {"R", to_string(r.R)},
          {"p", r.cfg.p},
          {"q", r.cfg.q},
          {"alpha", r.cfg.alpha},
          {"lambda", r.lambda},
          {"bump", r.bump},
          {"eps_tail_sum", r.eps_tail_sum},
          {"stages",
           {{"identity", {{"lhs_total", r.lhs_total}, {"lhs_regrouped", r.lhs_regrouped}, {"pass", r.identity_pass}}},
            {"inner", {{"strata", strata}, {"pass", r.inner_pass}}},
            {"final",
             {{"band_eps_sum", r.band_eps_sum},
              {"chain_bound", r.chain_bound},
              {"final_bound", r.final_bound},
              {"certified_constant", r.certified_constant},
              {"realized_final_constant", r.realized_final_constant},
              {"pass", r.final_pass}}},
            {"certificate",
             {{"testing_value", r.testing_value},
              {"bound", r.certificate_bound},
              {"pass", r.certificate_pass}}}}},
          {"failure", failure},
          {"pass", r.pass()}};
}

}  // namespace sparsebump::io
