#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "stabcert/catalog.hpp"
#include "stabcert/properties.hpp"

using namespace stabcert;

namespace {

const double two_pi = 2.0 * std::numbers::pi;

Ensemble run(const SystemPtr& sys, std::vector<State> xs, double horizon, double dt = 1e-3) {
  SimulationSettings s;
  s.horizon = horizon;
  s.dt = dt;
  s.seed = 5;
  return simulate_ensemble(sys, xs, s);
}

KLEnvelope exp_kl(double a, double b = 1.0) { return KLEnvelope::exponential(ScalarGain::identity(), a, b); }

const ScalarGain id = ScalarGain::identity();

}  // namespace

TEST(CheckMes, ContractionPasses) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}, {-2.0}, {0.3}}, 3.0);
  EXPECT_EQ(check_mes(ens, exp_kl(0.0), id).verdict(), Verdict::pass);
}

TEST(CheckMes, SpiralFailsNearTheEnd) {
  const auto ens = run(catalog::example_5_5(), {{1.0, 0.0}}, 10.0);
  const auto r = check_mes(ens, exp_kl(two_pi), id);
  ASSERT_EQ(r.verdict(), Verdict::violated);
  double last = 0.0;
  for (const auto& v : r.violations) last = std::max(last, v.time);
  EXPECT_GT(last, 9.0);
  EXPECT_GT(r.violations.back().lhs, 1000.0);
}

TEST(CheckMes, ZeroStatePassesWithZeroMargin) {
  const auto ens = run(catalog::scalar_contraction(), {{0.0}}, 1.0);
  const auto r = check_mes(ens, exp_kl(0.0), id);
  EXPECT_EQ(r.verdict(), Verdict::pass);
  EXPECT_EQ(r.worst_margin, 0.0);
}

TEST(SitIntervals, SpiralExcursions) {
  const auto ens = run(catalog::example_5_5(), {{2.0, 0.0}}, 2.5);
  const auto ivs = sit_intervals(ens.trajectories[0], id);
  ASSERT_GE(ivs.size(), 2u);
  EXPECT_EQ(ivs[0].begin, 0.0);
  EXPECT_NEAR(ivs[0].end, 1.453673666461, 1e-5);
  EXPECT_NEAR(ivs[1].begin, 1.665487036867, 1e-5);
  EXPECT_LT(ivs[0].end, ivs[1].begin);
}

TEST(SitIntervals, EqualOutputsNeverExcurse) {
  const auto ens = run(catalog::scalar_contraction(), {{1.5}}, 2.0);
  EXPECT_TRUE(sit_intervals(ens.trajectories[0], id).empty());
}

TEST(SitIntervals, BlindMeasurementGivesWholeHorizon) {
  const auto ens = run(catalog::scalar_contraction_blind(), {{1.5}}, 2.0);
  const auto ivs = sit_intervals(ens.trajectories[0], ScalarGain::linear(7.0));
  ASSERT_EQ(ivs.size(), 1u);
  EXPECT_TRUE(ivs[0].reaches_horizon);
  EXPECT_EQ(ivs[0].begin, 0.0);
  EXPECT_DOUBLE_EQ(ivs[0].end, 2.0);
}

TEST(CheckSit, SpiralPassesWithWideEnvelope) {
  const auto ens = run(catalog::example_5_5(), {{2.0, 0.0}, {0.0, 3.0}, {-5.0, 1.0}}, two_pi);
  EXPECT_EQ(check_sit(ens, exp_kl(two_pi), id, 1.0).verdict(), Verdict::pass);
}

TEST(CheckSit, SpiralViolatesTightEnvelopeAtHalfSecond) {
  const auto ens = run(catalog::example_5_5(), {{2.0, 0.0}}, 1.0);
  const auto r = check_sit(ens, exp_kl(0.0), id, 1.0);
  ASSERT_EQ(r.verdict(), Verdict::violated);
  bool found = false;
  for (const auto& v : r.violations) {
    if (std::abs(v.time - 0.5) < 1e-9) {
      found = true;
      EXPECT_NEAR(v.lhs, 2.893778073168, 1e-8);
      EXPECT_NEAR(v.rhs, 1.213061319425, 1e-9);
    }
  }
  EXPECT_TRUE(found);
}

TEST(CheckSit, VacuousWhenNeverAbove) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}, {-1.0}}, 1.0);
  EXPECT_EQ(check_sit(ens, exp_kl(0.0), ScalarGain::linear(2.0)).verdict(), Verdict::vacuous);
}

TEST(CheckRes, GainRegionReproducesSit) {
  const auto ens = run(catalog::example_5_5(), {{2.0, 0.0}, {0.5, 0.5}, {-3.0, 2.0}}, 3.0);
  const auto sit = check_sit(ens, exp_kl(0.0), id, 1.0);
  const auto res = check_res(ens, exp_kl(0.0), RegionPredicate::from_gain(id), 1.0);
  EXPECT_TRUE(same_records(sit, res));
  EXPECT_EQ(sit.verdict(), res.verdict());
}

TEST(CheckRes, WholeSpaceIsVacuous) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}}, 1.0);
  EXPECT_EQ(check_res(ens, exp_kl(0.0), RegionPredicate::everything()).verdict(), Verdict::vacuous);
}

TEST(CheckRes, ContractionToOriginPasses) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}, {-0.4}}, 3.0);
  EXPECT_EQ(check_res(ens, exp_kl(0.0), RegionPredicate::origin()).verdict(), Verdict::pass);
}

TEST(CheckRmeb, ReferenceCases) {
  const auto spiral = run(catalog::example_5_5(), {{2.0, 0.0}}, 1.0);
  const auto r = check_rmeb(spiral, id, id, id, 1.0);
  ASSERT_EQ(r.verdict(), Verdict::violated);
  for (const auto& v : r.violations) {
    if (std::abs(v.time - 0.5) < 1e-9) {
      EXPECT_NEAR(v.lhs, 2.893778073168, 1e-8);
      EXPECT_DOUBLE_EQ(v.rhs, 2.0);
    }
  }
  const auto con = run(catalog::scalar_contraction(), {{1.0}}, 1.0);
  EXPECT_EQ(check_rmeb(con, id, id, id).verdict(), Verdict::vacuous);
  const auto huge = ScalarGain::linear(1e6);
  EXPECT_EQ(check_rmeb(spiral, id, huge, huge).verdict(), Verdict::pass);
}

TEST(CheckReb, ReferenceCases) {
  const auto spiral = run(catalog::example_5_5(), {{2.0, 0.0}}, 1.0);
  EXPECT_EQ(check_reb(spiral, id, id, 1.0).verdict(), Verdict::violated);
  EXPECT_EQ(check_reb(spiral, ScalarGain::linear(1e6), id).verdict(), Verdict::vacuous);

  const auto huge = ScalarGain::linear(1e6);
  ASSERT_EQ(check_rmeb(spiral, id, huge, huge, 1.0).verdict(), Verdict::pass);
  const auto derived = reb_gains_from_rmeb(id, huge, huge);
  EXPECT_DOUBLE_EQ(derived.rho2(2.0), 2e6);
  EXPECT_DOUBLE_EQ(derived.sigma(2.0), 2e6);
  EXPECT_TRUE(check_reb(spiral, derived.rho2, derived.sigma, 1.0).passed());
}

TEST(TwoRegimeSplit, ContractionStartsInside) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}}, 2.0);
  const auto two = ScalarGain::linear(2.0);
  const auto rep = two_regime_split(ens.trajectories[0], two, id, id, two, exp_kl(0.0));
  EXPECT_EQ(rep.split_time, 0.0);
  EXPECT_EQ(rep.regime_one.checked_points, 0u);
  EXPECT_TRUE(rep.regime_two_passed());
  EXPECT_GT(rep.case_two.checked_points, 0u);
  EXPECT_DOUBLE_EQ(rep.gamma(1.0), 2.0);
}

TEST(TwoRegimeSplit, NeverEnteringChecksOnlyRegimeOne) {
  const auto ens = run(catalog::scalar_contraction_blind(), {{1.0}}, 2.0);
  const auto rep = two_regime_split(ens.trajectories[0], id, id, id, id, exp_kl(0.0));
  EXPECT_TRUE(std::isinf(rep.split_time));
  EXPECT_EQ(rep.case_two.checked_points + rep.case_three.checked_points, 0u);
  EXPECT_TRUE(rep.passed());
}

TEST(TwoRegimeSplit, SpiralFailsSecondRegime) {
  const auto ens = run(catalog::example_5_5(), {{2.0, 0.0}}, 10.0);
  const auto rep = two_regime_split(ens.trajectories[0], id, id, id, id, exp_kl(two_pi), 1.0);
  EXPECT_NEAR(rep.split_time, 1.453673666461, 1e-5);
  EXPECT_TRUE(rep.regime_one_passed());
  EXPECT_FALSE(rep.regime_two_passed());
  EXPECT_GT(rep.case_three.violation_count, 0u);
}

TEST(FitEnvelope, ContractionStaysBelowTheClosedForm) {
  std::vector<State> xs;
  for (double x = 0.25; x <= 4.0; x += 0.25) xs.push_back({x});
  const auto ens = run(catalog::scalar_contraction(), xs, 3.0);
  const auto s = envelope_s_grid(0.25, 4.0, 16);
  const auto t = linspace(0.0, 3.0, 31);
  const auto fit = fit_kl_envelope(ens, s, t);
  const auto& vals = fit.envelope.table_values();
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) {
      EXPECT_LE(fit.raw[i * t.size() + j], s[i] * std::exp(-t[j]) * (1 + 1e-9));
      // one-cell dilation: node (s_i, t_j) answers for s_{i+1} and t_{j-1}
      const double s_up = s[std::min(i + 1, s.size() - 1)];
      const double t_down = t[j == 0 ? 0 : j - 1];
      EXPECT_LE(vals[i * t.size() + j], s_up * std::exp(-t_down) * (1 + 1e-9) + fit.floor * s[i]);
      EXPECT_GE(vals[i * t.size() + j], fit.raw[i * t.size() + j]);
    }
  }
  EXPECT_FALSE(fit.no_decay);
  // bilinear interpolation dominates every sample
  for (const auto& tr : ens.trajectories) {
    for (std::size_t k = 0; k < tr.size(); k += 10) {
      EXPECT_LE(tr.error_norm[k], fit.envelope(tr.omega[0], tr.time(k)) + 1e-12);
    }
  }
}

TEST(FitEnvelope, ZeroTrajectoryGivesFloorOnly) {
  const auto ens = run(catalog::zero_field(1), {{0.0}}, 1.0);
  const auto fit = fit_kl_envelope(ens, {0.0, 1.0}, {0.0, 1.0});
  EXPECT_EQ(fit.envelope(1.0, 0.0), fit.floor);
  EXPECT_EQ(fit.envelope(0.0, 0.0), 0.0);
  EXPECT_FALSE(fit.notes.empty());
}

TEST(FitEnvelope, RegularizationDominatesRaw) {
  const std::vector<double> raw{0, 0, 0, 3, 1, 2, 2, 5, 0};
  const auto env = monotone_envelope(raw, 3, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_GE(env[i], raw[i]);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j + 1 < 3; ++j) EXPECT_GE(env[i * 3 + j], env[i * 3 + j + 1]);
  for (std::size_t i = 0; i + 1 < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(env[i * 3 + j], env[(i + 1) * 3 + j]);
}

TEST(SmallGain, ContractionHoldsAndFitsEnvelope) {
  std::vector<State> xs;
  for (double x = 0.5; x <= 3.0; x += 0.5) xs.push_back({x});
  const auto ens = run(catalog::scalar_contraction(), xs, 3.0, 1e-2);
  const auto rep = small_gain_check(ens, exp_kl(0.0), ScalarGain::linear(0.5), 1.02, 10);
  EXPECT_TRUE(rep.hypothesis.passed());
  ASSERT_TRUE(rep.fit.has_value());
  EXPECT_TRUE(rep.envelope_check.passed());
  EXPECT_FALSE(rep.fit->no_decay);
}

TEST(SmallGain, ExpandingGainIsAPreconditionError) {
  const auto ens = run(catalog::scalar_contraction(), {{1.0}}, 1.0, 1e-2);
  EXPECT_THROW((void)small_gain_check(ens, exp_kl(0.0), ScalarGain::linear(2.0)), std::invalid_argument);
}

TEST(SmallGain, SpiralViolatesHypothesis) {
  const auto ens = run(catalog::example_5_5(), {{1.0, 0.0}}, 8.0, 1e-2);
  const auto rep = small_gain_check(ens, exp_kl(two_pi), ScalarGain::linear(0.5), 1.02, 50);
  EXPECT_FALSE(rep.hypothesis.passed());
  EXPECT_FALSE(rep.passed());
}
