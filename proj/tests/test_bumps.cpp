#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"

using namespace sparsebump;

namespace {

// sum_{r>=0} (1 + r ln 2)^{-(1+delta)} = ln2^{-(1+delta)} zeta(1+delta, 1/ln2), 30 digits.
constexpr double kSumDelta1 = 2.0495743600189551;
constexpr double kSumDeltaHalf = 3.46712279478009045;
constexpr double kSumDelta9 = 1.00534698618173847;

// FIX-CE(N) with p = q = 2, alpha = 0, delta = 1/2, from an independent
// mpmath evaluation of the closed-form masses and brute-force rho.
struct CeReference {
  int n;
  double A, E, D;
};
constexpr CeReference kCe[] = {
    {4, 0.95428001297623173, 0.95428001297623173, 0.97598839493876927},
    {8, 0.99707491557845224, 1.0640292389180711, 0.99853274403983235},
};

Weight constant_weight(int n, double c = 1.0) { return generate_weight(GridConfig{1, n}, WeightGenerator::constant(c)); }

double brute_joint(const std::vector<double>& s, const std::vector<double>& w, const GridConfig& g,
                   const DyadicCube& q, const ExponentConfig& cfg) {
  return std::pow(oracle::mass(w, g, q), 1.0 / cfg.q) * std::pow(oracle::mass(s, g, q), 1.0 / cfg.p_dual()) /
         std::pow(q.volume(), 1.0 - cfg.alpha / g.dimension);
}

}  // namespace

TEST(Bumps, ExponentConfig) {
  const ExponentConfig c = ExponentConfig::make(3.0, 5.0, 0.5, 1);
  EXPECT_NEAR(1.0 / c.p + 1.0 / c.p_dual(), 1.0, 1e-14);
  EXPECT_NEAR(1.0 / c.q + 1.0 / c.q_dual(), 1.0, 1e-14);
  const ExponentConfig s = c.swapped();
  EXPECT_DOUBLE_EQ(s.p, c.q_dual());
  EXPECT_DOUBLE_EQ(s.q, c.p_dual());
  EXPECT_LT(s.p, s.q);
  auto error_of = [](auto&& fn) -> std::string {
    try {
      fn();
    } catch (const Error& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_EQ(error_of([] { ExponentConfig::make(2, 2, 0, 1); }), "strict mode requires p < q");
  EXPECT_EQ(error_of([] { ExponentConfig::make(3, 2, 0, 1, TheoremMode::extended); }), "extended mode requires p <= q");
  EXPECT_NO_THROW(ExponentConfig::make(2, 2, 0, 1, TheoremMode::extended));
  EXPECT_EQ(error_of([] { ExponentConfig::make(1, 2, 0, 1); }), "exponent p must exceed 1");
  EXPECT_EQ(error_of([] { ExponentConfig::make(2, 3, 1, 1); }), "invalid fractional order");
  EXPECT_EQ(error_of([] { ExponentConfig::make(2, 3, 0, 3); }), "dimension must be 1 or 2");
  EXPECT_NO_THROW(ExponentConfig::make(2, 3, 1.5, 2));
}

TEST(Bumps, EpsilonValues) {
  for (double d : {0.5, 1.0, 9.0}) {
    EXPECT_EQ(eps_eval(EntropyFunction::entropy(d), 1.0), 1.0);
    EXPECT_EQ(eps_eval(EntropyFunction::direct(d), 1.0), 1.0);
  }
  EXPECT_NEAR(eps_eval(EntropyFunction::entropy(1), std::numbers::e), 4.0, 1e-14);
  EXPECT_NEAR(eps_eval(EntropyFunction::direct(1), 1.0 / std::numbers::e), 4.0, 1e-14);
  EXPECT_EQ(eps_eval(EntropyFunction::entropy(1), 0.25), 1.0);
  EXPECT_THROW(eps_eval(EntropyFunction::entropy(1), 0.0), Error);
  EXPECT_THROW(eps_eval(EntropyFunction::direct(1), -1.0), Error);
  EXPECT_THROW(EntropyFunction::entropy(0.0), Error);
}

TEST(Bumps, EpsilonShape) {
  const EntropyFunction e = EntropyFunction::entropy(0.7);
  const EntropyFunction d = EntropyFunction::direct(0.7);
  for (int r = -30; r < 30; ++r) {
    const double t = std::ldexp(1.0, r), u = std::ldexp(1.0, r + 1);
    if (r >= 0) {
      EXPECT_LT(e(t), e(u));
      EXPECT_LT(d(t), d(u));
    } else {
      EXPECT_GT(d(t), d(u));
    }
    EXPECT_GE(e(t), 1.0);
    EXPECT_GE(d(t), 1.0);
    // band infimum is a lower bound over the band
    for (double x : {t, 1.3 * t, 1.9 * t}) {
      EXPECT_LE(e.band_infimum(r), e(x) * (1 + 1e-15));
      EXPECT_LE(d.band_infimum(r), d(x) * (1 + 1e-15));
    }
  }
}

TEST(Bumps, TailSums) {
  const double s1 = eps_tail_sum(EntropyFunction::entropy(1));
  const double sh = eps_tail_sum(EntropyFunction::entropy(0.5));
  const double s9 = eps_tail_sum(EntropyFunction::entropy(9));
  // upper bounds, tight to 1e-6
  for (auto [got, ref] : {std::pair{s1, kSumDelta1}, {sh, kSumDeltaHalf}, {s9, kSumDelta9}}) {
    EXPECT_GE(got, ref * (1 - 1e-14));
    EXPECT_LE(got - ref, 1e-6);
  }
  EXPECT_LT(s9, s1);
  EXPECT_NEAR(eps_tail_sum(EntropyFunction::direct(1)), 2 * kSumDelta1 - 1, 1e-6);
  EXPECT_NEAR(eps_tail_sum(EntropyFunction::direct(0.5)), 2 * kSumDeltaHalf - 1, 1e-6);
  // brute partial sums never exceed the bound
  double partial = 0.0;
  for (int r = 0; r < 2000; ++r) partial += 1.0 / EntropyFunction::entropy(1)(std::ldexp(1.0, r));
  EXPECT_LT(partial, s1);
}

TEST(Bumps, TabulatedEpsilon) {
  const EntropyFunction t = EntropyFunction::tabulated(EpsKind::entropy, 0, {1, 2, 4, 8}, 0.125);
  EXPECT_EQ(t(1.0), 1.0);
  EXPECT_EQ(t(4.0), 4.0);
  EXPECT_NEAR(t(std::sqrt(2.0)), 1.5, 1e-12);
  EXPECT_EQ(t.tail_sum(), 1 + 0.5 + 0.25 + 0.125 + 0.125);
  EXPECT_THROW(t(32.0), Error);
  EXPECT_THROW(EntropyFunction::tabulated(EpsKind::entropy, 0, {1, 0.5}, 0), Error);
  EXPECT_THROW(EntropyFunction::tabulated(EpsKind::entropy, 1, {1, 2}, 0), Error);
  EXPECT_THROW(EntropyFunction::tabulated(EpsKind::direct, 1, {1, 2}, 0), Error);
  const EntropyFunction d = EntropyFunction::tabulated(EpsKind::direct, -2, {4, 2, 1, 2, 4}, 0.5);
  EXPECT_EQ(d(0.25), 4.0);
  EXPECT_EQ(d(1.0), 1.0);
  EXPECT_EQ(d.band_infimum(-1), 1.0);
}

TEST(Bumps, JointConstantExamples) {
  const Weight c = constant_weight(4);
  const BumpValue a22 = joint_apq_constant(c, c, ExponentConfig::make(2, 2, 0, 1, TheoremMode::extended));
  EXPECT_NEAR(a22.value, 1.0, 1e-15);
  EXPECT_EQ(*a22.argmax, make_cube(1, 0, 0));
  const BumpValue a24 = joint_apq_constant(c, c, ExponentConfig::make(2, 4, 0, 1));
  EXPECT_NEAR(a24.value, 2.0, 1e-14);
  EXPECT_EQ(a24.argmax->level, 4);
  EXPECT_EQ(*a24.argmax, make_cube(1, 4, 0));  // ties go to the smallest index
}

TEST(Bumps, ConstantWeightsCollapse) {
  const Weight c = constant_weight(4);
  const ExponentConfig cfg = ExponentConfig::make(2, 4, 0, 1);
  const BumpReport e = entropy_bumps(c, c, cfg, EntropyFunction::entropy(1));
  const BumpReport d = direct_bumps(c, c, cfg, EntropyFunction::direct(1));
  EXPECT_NEAR(e.E->value, 2.0, 1e-14);
  EXPECT_NEAR(d.D->value, 2.0, 1e-14);
  EXPECT_EQ(e.A->value, e.E->value);
  EXPECT_EQ(d.A->value, d.D->value);
  EXPECT_EQ(e.E_star_printed->value, e.E_star_symmetric->value);
  EXPECT_FALSE(e.D.has_value());
  EXPECT_FALSE(d.E.has_value());
}

TEST(Bumps, WrongEpsilonKind) {
  const Weight c = constant_weight(3);
  const ExponentConfig cfg = ExponentConfig::make(2, 3, 0, 1);
  try {
    entropy_bumps(c, c, cfg, EntropyFunction::direct(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "direct ε passed to entropy bump");
  }
  EXPECT_THROW(direct_bumps(c, c, cfg, EntropyFunction::entropy(1)), Error);
  EXPECT_THROW(entropy_bumps(c, constant_weight(4), cfg, EntropyFunction::entropy(1)), Error);
}

TEST(Bumps, CounterexampleReference) {
  const ExponentConfig cfg = ExponentConfig::make(2, 2, 0, 1, TheoremMode::extended);
  for (const auto& ref : kCe) {
    const GridConfig g{1, ref.n};
    const Weight s = generate_weight(g, WeightGenerator::counterexample_sigma());
    const Weight w = generate_weight(g, WeightGenerator::counterexample_w());
    const BumpReport e = entropy_bumps(s, w, cfg, EntropyFunction::entropy(0.5));
    const BumpReport d = direct_bumps(s, w, cfg, EntropyFunction::direct(0.5));
    EXPECT_NEAR(e.A->value, ref.A, 1e-13);
    EXPECT_NEAR(e.E->value, ref.E, 1e-13);
    EXPECT_NEAR(d.D->value, ref.D, 1e-13);
  }
  const auto at = [&](int n) {
    const GridConfig g{1, n};
    return entropy_bumps(generate_weight(g, WeightGenerator::counterexample_sigma()),
                         generate_weight(g, WeightGenerator::counterexample_w()), cfg, EntropyFunction::entropy(0.5))
        .E->value;
  };
  EXPECT_GT(at(16), at(8));
  const auto d_at = [&](int n) {
    const GridConfig g{1, n};
    return direct_bumps(generate_weight(g, WeightGenerator::counterexample_sigma()),
                        generate_weight(g, WeightGenerator::counterexample_w()), cfg, EntropyFunction::direct(0.5))
        .D->value;
  };
  const double ratio = d_at(16) / d_at(12);
  EXPECT_GE(ratio, 0.95);
  EXPECT_LE(ratio, 1.05);
}

TEST(Bumps, MatchBruteForceAndWitnesses) {
  for (int d = 1; d <= 2; ++d) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const GridConfig g{d, d == 1 ? 6 : 3};
      auto sd = oracle::random_density(g, 100 + seed, 0.0, 6.0);
      auto wd = oracle::random_density(g, 200 + seed, 0.0, 6.0);
      if (seed % 2) {
        for (std::size_t i = 0; i < sd.size(); i += 4) sd[i] = 0.0;
        for (std::size_t i = 1; i < wd.size(); i += 5) wd[i] = 0.0;
      }
      const Weight s = Weight::from_density(g, sd);
      const Weight w = Weight::from_density(g, wd);
      const ExponentConfig cfg = ExponentConfig::make(1.5, 2.5 + seed * 0.1, d == 1 ? 0.3 : 1.1, d);
      const EntropyFunction ee = EntropyFunction::entropy(0.8);
      const EntropyFunction ed = EntropyFunction::direct(0.8);
      const BumpReport e = entropy_bumps(s, w, cfg, ee);
      const BumpReport dr = direct_bumps(s, w, cfg, ed);

      double A = 0, E = 0, Ep = 0, Es = 0, D = 0, Ds = 0;
      for (const auto& q : enumerate_cubes(g)) {
        const double j = brute_joint(sd, wd, g, q, cfg);
        A = std::max(A, j);
        if (j == 0.0) continue;
        const double rs = oracle::rho(sd, g, q), rw = oracle::rho(wd, g, q);
        E = std::max(E, j * std::pow(rs * ee(rs), 1.0 / cfg.q));
        Ep = std::max(Ep, j * std::pow(rs * ee(rs), 1.0 / cfg.p_dual()));
        Es = std::max(Es, j * std::pow(rw * ee(rw), 1.0 / cfg.p_dual()));
        D = std::max(D, j * std::pow(ed(oracle::average(sd, g, q)), 1.0 / cfg.q));
        Ds = std::max(Ds, j * std::pow(ed(oracle::average(wd, g, q)), 1.0 / cfg.p_dual()));
      }
      EXPECT_NEAR(e.A->value, A, 1e-12 * A);
      EXPECT_NEAR(e.E->value, E, 1e-12 * E);
      EXPECT_NEAR(e.E_star_printed->value, Ep, 1e-12 * Ep);
      EXPECT_NEAR(e.E_star_symmetric->value, Es, 1e-12 * Es);
      EXPECT_NEAR(dr.D->value, D, 1e-12 * D);
      EXPECT_NEAR(dr.D_star->value, Ds, 1e-12 * Ds);
      EXPECT_GE(e.E->value, e.A->value);
      EXPECT_GE(dr.D->value, dr.A->value);

      // re-evaluate at the reported witnesses
      const DyadicCube qe = *e.E->argmax;
      const std::size_t id = flat_id(g, qe);
      const double je = joint_factor(w.mass(id), s.mass(id), qe.volume(), cfg);
      EXPECT_EQ(entropy_expression(je, e.E->rho_at_argmax, ee, 1.0 / cfg.q), e.E->value);
      const DyadicCube qd = *dr.D->argmax;
      const std::size_t idd = flat_id(g, qd);
      const double jd = joint_factor(w.mass(idd), s.mass(idd), qd.volume(), cfg);
      EXPECT_EQ(direct_expression(jd, s.average(qd), ed, 1.0 / cfg.q), dr.D->value);
    }
  }
}

TEST(Bumps, DualRhoVariantsAgreeWhenWeightsCoincide) {
  const GridConfig g{1, 7};
  const Weight s = generate_weight(g, WeightGenerator::random_cascade(5, 0.7));
  const BumpReport e = entropy_bumps(s, s, ExponentConfig::make(2, 3, 0, 1), EntropyFunction::entropy(1));
  EXPECT_EQ(e.E_star_printed->value, e.E_star_symmetric->value);
  const BumpReport p =
      entropy_bumps(s, s, ExponentConfig::make(2, 3, 0, 1), EntropyFunction::entropy(1), DualRho::as_printed);
  EXPECT_EQ(&p.E_star(), &p.E_star_printed);
  EXPECT_EQ(&e.E_star(), &e.E_star_symmetric);
}

TEST(Bumps, ScaleCovarianceOfA) {
  const GridConfig g{1, 6};
  const Weight s = generate_weight(g, WeightGenerator::random_cascade(12, 0.5));
  const Weight w = generate_weight(g, WeightGenerator::random_cascade(13, 0.5));
  const ExponentConfig cfg = ExponentConfig::make(2.5, 4, 0.25, 1);
  const double a = joint_apq_constant(s, w, cfg).value;
  const double b = joint_apq_constant(s.scaled(7.0), w, cfg).value;
  EXPECT_NEAR(b, a * std::pow(7.0, 1.0 / cfg.p_dual()), 1e-12 * b);
}
