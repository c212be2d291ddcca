// Seeded randomized checks of structural invariants.

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stabcert/catalog.hpp"
#include "stabcert/lyapunov.hpp"
#include "stabcert/properties.hpp"

using namespace stabcert;

namespace {

ScalarGain random_gain(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coeff(0.2, 4.0);
  std::uniform_real_distribution<double> expo(0.5, 3.0);
  switch (rng() % 4) {
    case 0:
      return ScalarGain::linear(coeff(rng));
    case 1:
      return ScalarGain::power(coeff(rng), expo(rng));
    case 2: {
      std::vector<double> r{0.0};
      std::vector<double> v{0.0};
      for (int i = 0; i < 5; ++i) {
        r.push_back(r.back() + coeff(rng));
        v.push_back(v.back() + coeff(rng));
      }
      return ScalarGain::table(r, v, TailRule::linear);
    }
    default:
      return compose_max({ScalarGain::linear(coeff(rng)), ScalarGain::power(coeff(rng), expo(rng))});
  }
}

Ensemble random_ensemble(const SystemPtr& sys, std::uint64_t seed, std::size_t count, double horizon) {
  SimulationSettings s;
  s.horizon = horizon;
  s.dt = 1e-2;
  s.seed = seed;
  return simulate_ensemble(sys, annulus_sample(sys->dim, 0.1, 3.0, count, seed), s);
}

}  // namespace

TEST(GainInvariants, ComposeMaxIsPointwiseMax) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> probe(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_gain(rng);
    const auto b = random_gain(rng);
    const auto m = compose_max({a, b});
    for (int k = 0; k < 20; ++k) {
      const double r = probe(rng);
      EXPECT_EQ(m(r), std::max(a(r), b(r)));
    }
  }
}

TEST(GainInvariants, InverseRoundTrips) {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> probe(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_gain(rng);
    for (int k = 0; k < 10; ++k) {
      const double r = probe(rng);
      EXPECT_NEAR(g.inverse(g(r)), r, 1e-8 * std::max(1.0, r));
    }
  }
}

TEST(GainInvariants, SitGainDominatesMesGain) {
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 30; ++trial) {
    const auto gamma = random_gain(rng);
    const auto rho = build_sit_gain_from_mes(gamma);
    for (double r : {0.01, 0.5, 1.0, 7.0}) {
      EXPECT_GT(rho(r), gamma(r));
      EXPECT_NEAR(gamma(rho.inverse(rho(r))), gamma(r), 1e-8 * std::max(1.0, gamma(r)));
    }
  }
}

TEST(GainInvariants, SettleTimeMonotone) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> a(0.0, 3.0);
  std::uniform_real_distribution<double> b(0.2, 3.0);
  std::uniform_real_distribution<double> r(0.1, 5.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto beta = KLEnvelope::exponential(random_gain(rng), a(rng), b(rng));
    const double r1 = r(rng);
    const double r2 = r1 + r(rng);
    const double eps = 0.01;
    EXPECT_LE(settle_time(beta, r1, eps), settle_time(beta, r2, eps));
    EXPECT_GE(settle_time(beta, r1, eps), settle_time(beta, r1, 2 * eps));
  }
}

TEST(GainInvariants, FactorizationVerifiesOnRandomGrids) {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> a(0.0, 7.0);
  std::uniform_real_distribution<double> b(0.3, 3.0);
  std::uniform_real_distribution<double> lam(0.5, 4.0);
  std::uniform_real_distribution<double> node(0.0, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto beta = KLEnvelope::exponential(ScalarGain::linear(b(rng)), a(rng), b(rng));
    const double lambda = lam(rng);
    const auto f = kl_factorize(beta, lambda);
    std::vector<double> s{0.0};
    std::vector<double> t{0.0};
    for (int k = 0; k < 15; ++k) {
      s.push_back(node(rng));
      t.push_back(node(rng));
    }
    std::sort(s.begin(), s.end());
    std::sort(t.begin(), t.end());
    EXPECT_EQ(verify_factorization(beta, f.outer, f.initial, lambda, product_grid(s, t)).verdict(), Verdict::pass);
  }
}

TEST(CheckerInvariants, GainRegionMatchesSitOnCatalogEnsembles) {
  std::uint64_t seed = 1;
  for (const auto& e : catalog::entries()) {
    if (!e.make) continue;
    const auto ens = random_ensemble(e.make(), seed++, 12, 3.0);
    for (const auto& rho : {ScalarGain::identity(), ScalarGain::linear(0.5), ScalarGain::power(1.0, 2.0)}) {
      const auto beta = KLEnvelope::exponential(ScalarGain::identity(), 0.5, 1.0);
      const auto sit = check_sit(ens, beta, rho, 1.0);
      const auto res = check_res(ens, beta, RegionPredicate::from_gain(rho), 1.0);
      EXPECT_TRUE(same_records(sit, res)) << e.name;
      EXPECT_EQ(sit.checked_points, res.checked_points) << e.name;
    }
  }
}

TEST(CheckerInvariants, RebNeverFailsWhereRmebPasses) {
  std::mt19937_64 rng(606);
  const std::vector<SystemPtr> systems{catalog::example_5_5(), catalog::disturbed_contraction(0.5),
                                       catalog::spiral_projection(), catalog::scalar_contraction_blind()};
  std::size_t passing = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto& sys = systems[trial % systems.size()];
    const auto ens = random_ensemble(sys, 700 + trial, 6, 2.0);
    const auto rho1 = random_gain(rng);
    const auto s1 = random_gain(rng);
    const auto s2 = random_gain(rng);
    if (!check_rmeb(ens, rho1, s1, s2, 1.0).passed()) continue;
    ++passing;
    const auto d = reb_gains_from_rmeb(rho1, s1, s2);
    EXPECT_TRUE(check_reb(ens, d.rho2, d.sigma, 1.0).passed()) << "trial " << trial;
  }
  EXPECT_GT(passing, 5u);
}

TEST(CheckerInvariants, MesImpliesSitWithFittedEnvelope) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto ens = random_ensemble(catalog::disturbed_contraction(0.5), seed, 20, 4.0);
    const auto gamma = ScalarGain::identity();
    ASSERT_TRUE(check_mes(ens, KLEnvelope::exponential(ScalarGain::identity(), 0.0, 1.0), gamma).passed());
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& tr : ens.trajectories) {
      lo = std::min(lo, tr.omega[0]);
      hi = std::max(hi, tr.omega[0]);
    }
    const auto fit = fit_kl_envelope(ens, envelope_s_grid(lo, hi, 12), linspace(0.0, 4.0, 21));
    const auto rho = build_sit_gain_from_mes(gamma);
    EXPECT_TRUE(check_sit(ens, fit.envelope, rho, 1.0).passed()) << seed;
  }
}

TEST(TrajectoryInvariants, HittingTimeMonotoneUnderShrinkage) {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> c(0.2, 3.0);
  const auto sys = catalog::example_5_5();
  for (int trial = 0; trial < 20; ++trial) {
    const auto tr = integrate(sys, {c(rng), c(rng)}, DisturbanceSignal::constant(State(sys->disturbances.dim(), 0.0)), 3.0, 1e-3);
    const double k = c(rng);
    const double wide = hitting_time(tr, RegionPredicate::from_gain(ScalarGain::linear(k * 2))).time;
    const double narrow = hitting_time(tr, RegionPredicate::from_gain(ScalarGain::linear(k))).time;
    EXPECT_LE(wide, narrow);
  }
}

TEST(LyapunovInvariants, ValueMonotoneInBudget) {
  const auto sys = catalog::disturbed_contraction(0.5);
  const auto alpha = ScalarGain::power(1.0, 2.0);
  std::vector<double> prev;
  for (std::size_t budget : {1u, 4u, 16u}) {
    ValueFunctionSettings s;
    s.budget = budget;
    s.horizon_cap = 3.0;
    s.dt = 1e-2;
    s.seed = 9;
    const auto table = build_value_function(sys, RegionPredicate::ball(0.05), {linspace(-2.0, 2.0, 9)}, alpha, s);
    if (!prev.empty()) {
      for (std::size_t i = 0; i < table.points.size(); ++i) EXPECT_GE(table.points[i].value, prev[i]);
    }
    prev.clear();
    for (const auto& p : table.points) prev.push_back(p.value);
  }
}

TEST(LyapunovInvariants, BudgetOneMatchesBruteForce) {
  const auto sys = catalog::scalar_contraction();
  const auto alpha = ScalarGain::power(1.0, 2.0);
  ValueFunctionSettings s;
  s.horizon_cap = 2.0;
  const auto table = build_value_function(sys, RegionPredicate::origin(), {{0.5, 1.5}}, alpha, s);
  for (const auto& pt : table.points) {
    const auto tr = integrate(sys, pt.state, DisturbanceSignal::constant({0.0}), 2.0, s.dt);
    double best = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) best = std::max(best, alpha(tr.error_norm[k]) * std::exp(tr.time(k)));
    EXPECT_NEAR(pt.value, best, 1e-12 * best);
  }
}

TEST(ComparisonInvariants, PerturbedGapsShrink) {
  const auto alpha = ScalarGain::identity();
  const auto base = solve_comparison_ode(alpha, 1.0, 5.0, 1e-3);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {10u, 100u, 1000u}) {
    const auto pert = solve_comparison_ode(alpha, 1.0, 5.0, 1e-3, n);
    double gap = 0.0;
    for (std::size_t k = 0; k < base.values.size(); ++k) gap = std::max(gap, std::abs(pert.values[k] - base.values[k]));
    EXPECT_LT(gap, prev);
    EXPECT_NEAR(gap, (1.0 - std::exp(-5.0)) / static_cast<double>(n), 1e-6);
    prev = gap;
  }
}

TEST(ComparisonInvariants, FlowEnvelopeIsKL) {
  for (const auto& alpha : {ScalarGain::identity(), ScalarGain::power(1.0, 2.0), ScalarGain::linear(3.0)}) {
    const auto s = linspace(0.0, 4.0, 9);
    const auto t = linspace(0.0, 5.0, 11);
    const auto beta = comparison_flow_envelope(alpha, s, t);
    for (double si : s) {
      for (std::size_t j = 1; j < t.size(); ++j) EXPECT_LE(beta(si, t[j]), beta(si, t[j - 1]));
    }
    EXPECT_EQ(beta(0.0, 1.0), 0.0);
  }
}
