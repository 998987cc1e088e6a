#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace sparsebump;

namespace {

SparseFamily chain_family() { return SparseFamily(GridConfig{1, 4}, make_cube(1, 0, 0), 0.5, oracle::chain(4)); }

Weight spike() { return Weight::from_density(GridConfig{1, 2}, {4, 0, 0, 0}); }

// sum_{Q in S, Q ⊆ R} |Q|^{q alpha/d} <sigma>_Q^q w(Q)
double brute_lhs(const SparseFamily& f, const std::vector<double>& s, const std::vector<double>& w,
                 const DyadicCube& r, double q, double alpha) {
  const GridConfig& g = f.grid();
  double sum = 0.0;
  for (const auto& c : f.cubes()) {
    if (!contains(r, c)) continue;
    sum += std::pow(std::pow(c.volume(), alpha / g.dimension) * oracle::average(s, g, c), q) * oracle::mass(w, g, c);
  }
  return sum;
}

void expect_consistent(const TraceReport& t) {
  EXPECT_TRUE(t.pass()) << (t.failure ? t.failure->stage + ": " + t.failure->detail : "");
  EXPECT_FALSE(t.failure.has_value());
  double regrouped = 0.0;
  for (const auto& s : t.strata) {
    regrouped += s.inner_lhs;
    EXPECT_LE(s.realized_constant, 2.0 / (1.0 - t.lambda) * (1 + 1e-12));
    EXPECT_LE(s.inner_lhs, s.inner_bound * (1 + 1e-12));
    EXPECT_LE(s.packing_lhs, s.packing_bound * (1 + 1e-12));
  }
  EXPECT_NEAR(regrouped, t.lhs_total, 1e-12 * t.lhs_total);
  EXPECT_NEAR(t.lhs_regrouped, t.lhs_total, 1e-12 * t.lhs_total);
  EXPECT_LE(t.lhs_total, t.final_bound * (1 + 1e-12));
  // bands below 1 are charged at their right end, which costs one extra 1/eps(1) = 1
  const double band_cap = t.eps_tail_sum + (t.kind == TraceKind::direct ? 1.0 : 0.0);
  EXPECT_LE(t.band_eps_sum, band_cap * (1 + 1e-12));
  EXPECT_NEAR(t.chain_bound / t.final_bound, t.band_eps_sum / t.eps_tail_sum, 1e-12);
  EXPECT_NEAR(t.certified_constant, 2.0 * t.eps_tail_sum / (1.0 - t.lambda), 1e-12 * t.certified_constant);
  EXPECT_LE(t.testing_value, t.certificate_bound * (1 + 1e-12));
}

}  // namespace

TEST(ProofTrace, DyadicBand) {
  EXPECT_EQ(dyadic_band(1.0), 0);
  EXPECT_EQ(dyadic_band(1.999999), 0);
  EXPECT_EQ(dyadic_band(2.0), 1);
  EXPECT_EQ(dyadic_band(0.5), -1);
  EXPECT_EQ(dyadic_band(0.75), -1);
  EXPECT_EQ(dyadic_band(std::ldexp(1.0, -40)), -40);
  EXPECT_EQ(dyadic_band(std::nextafter(8.0, 0.0)), 2);
  for (double x : {1e-300, 3.7, 1e10, 0.3}) {
    const int a = dyadic_band(x);
    EXPECT_LE(std::ldexp(1.0, a), x);
    EXPECT_LT(x, std::ldexp(1.0, a + 1));
  }
}

TEST(ProofTrace, StratifyChain) {
  const SparseFamily f = chain_family();
  const Weight c = generate_weight(f.grid(), WeightGenerator::constant(1.0));
  for (StrataKey key : {StrataKey::rho, StrataKey::average}) {
    const Strata st = stratify(f, c, key);
    ASSERT_EQ(st.buckets.size(), 1u);
    EXPECT_EQ(st.buckets.begin()->first, 0);
    EXPECT_EQ(st.buckets.at(0).size(), 5u);
    EXPECT_EQ(st.maximal_cubes.at(0), (std::vector<std::size_t>{0}));
  }
}

TEST(ProofTrace, StratifySpike) {
  const SparseFamily f = stopping_family(spike(), 1.5, make_cube(1, 0, 0));
  const Strata avg = stratify(f, spike(), StrataKey::average);
  EXPECT_EQ(avg.buckets.size(), 3u);
  for (int a = 0; a <= 2; ++a) {
    EXPECT_EQ(avg.buckets.at(a), (std::vector<std::size_t>{static_cast<std::size_t>(a)}));
    EXPECT_EQ(avg.maximal_cubes.at(a), (std::vector<std::size_t>{static_cast<std::size_t>(a)}));
  }
  // rho: root 2, [0,1/2) 3/2, [0,1/4) 1
  const Strata r = stratify(f, spike(), StrataKey::rho);
  EXPECT_EQ(r.buckets.at(1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(r.buckets.at(0), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.maximal_cubes.at(0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(r.top_of[2], 1u);
}

TEST(ProofTrace, StratifyPartitionProperty) {
  for (int d = 1; d <= 2; ++d) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GridConfig g{d, d == 1 ? 8 : 4};
      const Weight s = generate_weight(g, WeightGenerator::random_cascade(seed + 1, 0.8));
      const SparseFamily f = random_sparse(g, 0.5, seed, 30);
      for (StrataKey key : {StrataKey::rho, StrataKey::average}) {
        const Strata st = stratify(f, s, key);
        std::size_t total = 0;
        for (const auto& [a, members] : st.buckets) {
          total += members.size();
          if (key == StrataKey::rho) {
            EXPECT_GE(a, 0);
          }
          for (std::size_t j : members) {
            const double v = key == StrataKey::rho ? oracle::rho(s.density(), g, f.cube(j)) : s.average(f.cube(j));
            EXPECT_LE(std::ldexp(1.0, a), v * (1 + 1e-12));
            EXPECT_LT(v, std::ldexp(1.0, a + 1) * (1 + 1e-12));
            int tops = 0;
            for (std::size_t t : st.maximal_cubes.at(a)) tops += contains(f.cube(t), f.cube(j));
            EXPECT_EQ(tops, 1);
            EXPECT_TRUE(contains(f.cube(st.top_of[j]), f.cube(j)));
          }
        }
        EXPECT_EQ(total, f.size());
      }
    }
  }
}

TEST(ProofTrace, StratifyZeroMassCube) {
  const GridConfig g{1, 2};
  const Weight left = Weight::from_density(g, {1, 1, 0, 0});
  const SparseFamily f(g, root_cube(g), 0.5, {root_cube(g), make_cube(1, 1, 1)});
  try {
    stratify(f, left, StrataKey::average);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "zero-mass cube in family: " + to_string(make_cube(1, 1, 1)));
  }
}

TEST(ProofTrace, FixtureTracesPass) {
  const ExponentConfig cfg = ExponentConfig::make(2, 4, 0, 1);
  const GridConfig g{1, 4};
  const Weight c = generate_weight(g, WeightGenerator::constant(1.0));
  const SparseFamily single(g, root_cube(g), 0.5, {root_cube(g)});
  const SparseFamily chain = chain_family();
  for (const SparseFamily* f : {&single, &chain}) {
    for (const auto& r : f->cubes()) {
      const TraceReport e = entropy_trace(*f, c, c, cfg, EntropyFunction::entropy(1), r);
      const TraceReport d = direct_trace(*f, c, c, cfg, EntropyFunction::direct(1), r);
      for (const TraceReport* t : {&e, &d}) {
        expect_consistent(*t);
        EXPECT_EQ(t->lhs_total, t->lhs_regrouped);
        EXPECT_DOUBLE_EQ(t->lhs_total, brute_lhs(*f, c.density(), c.density(), r, 4.0, 0.0));
        EXPECT_EQ(t->bump, 2.0);
        EXPECT_EQ(t->strata.size(), 1u);
      }
    }
  }
  const TraceReport s = entropy_trace(single, c, c, cfg, EntropyFunction::entropy(1), root_cube(g));
  EXPECT_EQ(s.lhs_total, 1.0);
  EXPECT_EQ(s.testing_value, 1.0);
}

TEST(ProofTrace, NonMemberThrows) {
  const SparseFamily f = chain_family();
  const Weight c = generate_weight(f.grid(), WeightGenerator::constant(1.0));
  const ExponentConfig cfg = ExponentConfig::make(2, 3, 0, 1);
  EXPECT_THROW(entropy_trace(f, c, c, cfg, EntropyFunction::entropy(1), make_cube(1, 1, 1)), Error);
  EXPECT_THROW(direct_trace(f, c, c, cfg, EntropyFunction::direct(1), make_cube(1, 2, 1)), Error);
  EXPECT_THROW(dual_trace(TraceKind::entropy, f, c, c, cfg, EntropyFunction::entropy(1), make_cube(1, 3, 2)), Error);
}

TEST(ProofTrace, RandomSuitesPassAndMatchTesting) {
  int traces = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const int d = seed % 4 == 3 ? 2 : 1;
    const GridConfig g{d, d == 1 ? 7 : 4};
    const Weight s = generate_weight(g, WeightGenerator::random_cascade(2 * seed + 11, 0.7));
    const Weight w = generate_weight(g, WeightGenerator::random_cascade(2 * seed + 12, 0.7));
    const SparseFamily f = seed % 2 ? random_sparse(g, 0.5, seed, 25) : stopping_family(s, 2.0, root_cube(g));
    const ExponentConfig cfg = ExponentConfig::make(2, 3, d == 1 ? 0.0 : 0.5, d);
    const TestingReport tr = testing_constants(f, s, w, cfg);
    const EntropyFunction ent = EntropyFunction::entropy(1), dir = EntropyFunction::direct(1);
    const auto e = trace_all(TraceKind::entropy, false, f, s, w, cfg, ent);
    const auto di = trace_all(TraceKind::direct, false, f, s, w, cfg, dir);
    const auto es = trace_all(TraceKind::entropy, true, f, s, w, cfg, ent);
    const auto ds = trace_all(TraceKind::direct, true, f, s, w, cfg, dir);
    ASSERT_EQ(e.size(), f.size());
    ASSERT_EQ(es.size(), f.size());
    const BumpReport eb = entropy_bumps(s, w, cfg, ent);
    const BumpReport db = direct_bumps(s, w, cfg, dir);
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (const TraceReport* t : {&e[i], &di[i], &es[i], &ds[i]}) {
        expect_consistent(*t);
        EXPECT_EQ(t->R, f.cube(i));
        ++traces;
      }
      const double lhs = brute_lhs(f, s.density(), w.density(), f.cube(i), 3.0, cfg.alpha);
      EXPECT_NEAR(e[i].lhs_total, lhs, 1e-12 * lhs);
      EXPECT_NEAR(e[i].testing_value, tr.per_R[i], 1e-12 * tr.per_R[i]);
      EXPECT_NEAR(es[i].testing_value, tr.per_R_star[i], 1e-12 * tr.per_R_star[i]);
      EXPECT_NEAR(ds[i].testing_value, tr.per_R_star[i], 1e-12 * tr.per_R_star[i]);
      EXPECT_EQ(e[i].bump, eb.E->value);
      EXPECT_EQ(di[i].bump, db.D->value);
      EXPECT_EQ(es[i].bump, eb.E_star_symmetric->value);
      EXPECT_EQ(ds[i].bump, db.D_star->value);
      EXPECT_TRUE(es[i].dual);
      EXPECT_EQ(es[i].cfg.p, cfg.q_dual());
    }
    // single-R entry points agree with the batched ones
    const std::size_t last = f.size() - 1;
    EXPECT_EQ(entropy_trace(f, s, w, cfg, ent, f.cube(last)).lhs_total, e[last].lhs_total);
    EXPECT_EQ(dual_trace(TraceKind::direct, f, s, w, cfg, dir, f.cube(last)).testing_value, ds[last].testing_value);
  }
  EXPECT_GT(traces, 1000);
}

TEST(ProofTrace, RealizedFinalConstantIsBelowCertified) {
  const GridConfig g{1, 8};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Weight s = generate_weight(g, WeightGenerator::random_cascade(seed + 500, 0.9));
    const SparseFamily f = stopping_family(s, 2.0, root_cube(g));
    const auto t = trace_all(TraceKind::direct, false, f, s, s, ExponentConfig::make(1.5, 2.5, 0.2, 1),
                             EntropyFunction::direct(0.5));
    for (const auto& r : t) {
      expect_consistent(r);
      EXPECT_LE(r.realized_final_constant, r.certified_constant * (1 + 1e-12));
    }
  }
}
