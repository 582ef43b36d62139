#include <gtest/gtest.h>

#include <cmath>

#include "adamsep/instrument.hpp"
#include "adamsep/lowerbound.hpp"

using namespace adamsep;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

/// gamma^2 sum_{r=0}^{T - floor(T/2) - 1} (1 - gamma)^{2r}, summed term by term.
double response_oracle(double gamma, std::size_t T) {
  double s = 0;
  for (std::size_t r = 0; r + T / 2 < T; ++r) s += std::pow(1 - gamma, 2.0 * r);
  return gamma * gamma * s;
}

/// Energy after x_1 = 0 and a unit shock at s, by running the noise-free recursion.
std::pair<double, double> simulated_response(const std::vector<double>& eta, std::size_t s) {
  double x = 0, r = 0, q = 0;
  for (std::size_t t = 1; t <= eta.size(); ++t) {
    if (t > s) {
      r += x * x;
      q += eta[t - 1] * x * x;
    }
    x = x - eta[t - 1] * (x + (t == s ? 1.0 : 0.0));
  }
  return {r, q};
}

}  // namespace

TEST(ConstInstance, ResponseFactorHandValue) {
  const auto c = ConstStepInstance::unchecked(0.5, 10, 1e-3, 0.0);
  EXPECT_EQ(c.R, 0.3330078125);
  for (double g : {0.1, 0.5, 0.9})
    for (std::size_t T : {10u, 11u, 100u}) EXPECT_LE(rel(ConstStepInstance::unchecked(g, T, 1e-3, 0).R, response_oracle(g, T)), 1e-13);
}

TEST(ConstInstance, AmplitudeAndProbability) {
  const auto c = ConstStepInstance::unchecked(0.5, 100, 0.01, 0.0);
  EXPECT_DOUBLE_EQ(c.A2, 625.0);
  EXPECT_DOUBLE_EQ(c.A, 25.0);
  EXPECT_DOUBLE_EQ(c.p, 0.0016);
  EXPECT_EQ(c.m, 50u);
}

TEST(ConstInstance, LargeStepThresholdIsOneOver64) {
  for (std::size_t T : {10u, 100u, 1000u})
    EXPECT_EQ(ConstStepInstance::unchecked(2.0, T, 1e-3, 0.0).delta_threshold, 1.0 / 64.0);
}

TEST(ConstInstance, ThresholdFormula) {
  const auto c = ConstStepInstance::unchecked(0.5, 10, 1e-3, 0.0);
  const double R = response_oracle(0.5, 10);
  const double want = std::min({1.0 / 64, std::exp(-1 / (32 * R * std::sqrt(10.0))),
                                std::exp(-1 / std::sqrt(32 * 0.5 * 10 * R))});
  EXPECT_DOUBLE_EQ(c.delta_threshold, want);
  EXPECT_EQ(c.delta_threshold, 0.015625);
}

TEST(ConstInstance, InvalidDeltaNamesClause) {
  try {
    build_const_instance(0.5, 10, 0.02, 0.0);
    FAIL();
  } catch (const InstanceInvalidError& e) {
    EXPECT_EQ(std::string(e.clause()), "delta < 1/64");
  }
  // gamma small: the exponential clause binds before 1/64.
  const auto c = ConstStepInstance::unchecked(0.01, 10, 1e-3, 0.0);
  ASSERT_LT(c.delta_threshold, 1.0 / 64);
  try {
    build_const_instance(0.01, 10, 0.5 * (c.delta_threshold + 1.0 / 64), 0.0);
    FAIL();
  } catch (const InstanceInvalidError& e) {
    EXPECT_EQ(std::string(e.clause()).rfind("delta < exp(", 0), 0u) << e.clause();
  }
  EXPECT_THROW(build_const_instance(0.5, 9, 1e-3, 0.0), ConfigError);
}

TEST(SignChoice, Examples) {
  EXPECT_EQ(sign_choice(0.0, 1.0), 1);
  EXPECT_EQ(sign_choice(3.0, 2.0), -1);
  EXPECT_EQ(sign_choice(-4.0, 1.0), 1);
  for (double a : {-5.0, -0.1, 0.0, 0.2, 7.0})
    for (double b : {0.0, 0.5, 3.0}) EXPECT_GE(std::abs(a - sign_choice(a, b) * b), b);
}

TEST(EventProb, HandValue) {
  const auto c = build_const_instance(0.5, 10, 1e-3, 0.0);
  const double want = 5 * 0.0008 * std::pow(0.9984, 8);
  const double p = one_shock_prob_exact(c, ShockCase::signed_shock);
  EXPECT_LE(rel(p, want), 1e-12);
  EXPECT_LE(rel(p, 3.9490858043286616e-3), 1e-12);
  EXPECT_GT(p, 1e-3);
}

TEST(EventProb, UnsignedDoublesSigned) {
  // p and m depend only on (T, delta), so the two regimes share them.
  const auto small = ConstStepInstance::unchecked(0.5, 40, 1e-3, 0.0);
  const auto large = ConstStepInstance::unchecked(2.0, 40, 1e-3, 0.0);
  EXPECT_DOUBLE_EQ(one_shock_prob_exact(large, ShockCase::unsigned_shock),
                   2 * one_shock_prob_exact(small, ShockCase::signed_shock));
  EXPECT_THROW(one_shock_prob_exact(small, ShockCase::unsigned_shock), std::exception);
}

TEST(EventProb, SmallDeltaLimit) {
  for (std::size_t T : {10u, 11u, 50u}) {
    const auto c = ConstStepInstance::unchecked(0.5, T, 1e-9, 0.0);
    const double ratio = one_shock_prob_exact(c, ShockCase::signed_shock) / 1e-9;
    EXPECT_NEAR(ratio, c.m * 8.0 / T, 1e-6);
    EXPECT_GT(ratio, 1.0);
  }
}

TEST(ShockedPath, HandCase) {
  const auto c = build_const_instance(0.5, 10, 1e-3, 0.0);
  ASSERT_EQ(shock_sign(c, 5), 1);
  const auto p = shocked_trajectory(c, 5, 1);
  EXPECT_EQ(p.x[5], -12.5);
  EXPECT_EQ(p.sum_sq, 208.1298828125);
  EXPECT_EQ(c.A2 * c.R, 208.1298828125);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(p.x[t], 0.0);
}

TEST(ShockedPath, PreShockSegmentIsNoiseFree) {
  const auto c = ConstStepInstance::unchecked(0.3, 20, 1e-3, 2.0);
  const auto p = shocked_trajectory(c, 7, shock_sign(c, 7));
  double x = 2.0;
  for (std::size_t t = 1; t <= 7; ++t, x = x - 0.3 * x) EXPECT_EQ(p.x[t - 1], x);
  EXPECT_NEAR(p.x[0], 2.0, 0);
}

TEST(ShockedPath, LargeStepPairEnergy) {
  const auto c = ConstStepInstance::unchecked(2.0, 20, 1e-3, 0.0);
  for (int sigma : {1, -1}) {
    const auto p = shocked_trajectory(c, 4, sigma);
    EXPECT_EQ(p.x[3], 0.0);
    EXPECT_DOUBLE_EQ(p.x[4] * p.x[4], 4.0 * c.A2);
    EXPECT_GE(p.x[3] * p.x[3] + p.x[4] * p.x[4], 0.5 * c.A2);
  }
}

TEST(ShockedPath, ResponseBoundForRandomStarts) {
  RngStream s(4, 0, "starts");
  for (int k = 0; k < 50; ++k) {
    const double x0 = -10 + 20 * s.uniform01();
    const auto c = ConstStepInstance::unchecked(0.1 + 0.8 * s.uniform01(), 30, 1e-3, x0);
    for (std::size_t j = 1; j <= c.m; ++j)
      EXPECT_GE(shocked_trajectory(c, j, shock_sign(c, j)).sum_sq, c.A2 * c.R * (1 - 1e-12));
  }
}

TEST(ShockedPath, TrajectoryRecordsRealSgd) {
  const auto c = build_const_instance(0.5, 100, 1e-3, 0.0);
  const auto p = shocked_trajectory(c, 10, 1);
  const auto& tr = *p.trajectory;
  EXPECT_EQ(tr.steps(), 99u);
  EXPECT_EQ(tr.g(10)[0] - tr.grad(10)[0], c.A);
  EXPECT_EQ(tr.x(11)[0], p.x[10]);
  // f-bar jumps right after the shock.
  EXPECT_EQ(stopping_time(tr, 2.0), std::optional<std::size_t>(11));
}

TEST(Verify, HandCaseUnweighted) {
  const auto c = build_const_instance(0.5, 100, 1e-3, 0.0);
  const auto r = verify_const_instance(c, LBMetric::avg);
  EXPECT_TRUE(r.all_true());
  EXPECT_GE(r.conditional_energy, c.R / (16 * 1e-3) * (1 - 1e-12));
  EXPECT_NEAR(r.conditional_energy, 20.83, 0.01);
  EXPECT_NEAR(r.metric_threshold, 1 / (512 * 1e-3 * 10 * std::log(1000.0)), 1e-15);
  EXPECT_NEAR(r.metric_threshold, 0.02827, 1e-5);
}

TEST(Verify, LargeStepClosedForm) {
  const auto c = build_const_instance(2.0, 100, 1e-3, 0.0);
  const auto r = verify_const_instance(c, LBMetric::avg);
  EXPECT_TRUE(r.all_true());
  EXPECT_GE(r.conditional_energy, c.A2 / (2.0 * 100) * (1 - 1e-12));
}

TEST(Verify, GridCombinations) {
  for (double delta : {1e-2, 1e-3, 1e-4})
    for (std::size_t T : {10u, 100u, 1000u})
      for (double gamma : {0.1, 0.5, 2.0}) {
        const auto c = ConstStepInstance::unchecked(gamma, T, delta, 0.0);
        if (!(delta < c.delta_threshold)) {
          EXPECT_THROW(build_const_instance(gamma, T, delta, 0.0), InstanceInvalidError);
          continue;
        }
        for (auto m : {LBMetric::avg, LBMetric::weighted})
          EXPECT_TRUE(verify_const_instance(build_const_instance(gamma, T, delta, 0.0), m).all_true())
              << gamma << " " << T << " " << delta;
      }
}

TEST(Enumeration, MatchesExactProbabilities) {
  for (std::size_t T : {4u, 5u, 6u}) {
    const auto c = ConstStepInstance::unchecked(0.5, T, 0.01, 0.0);
    const auto e = enumerate_const_instance(c, LBMetric::avg, 0.0);
    EXPECT_EQ(e.patterns, static_cast<std::size_t>(std::pow(3, T - 1)));
    EXPECT_LE(std::abs(e.total - 1.0), 1e-12);
    EXPECT_LE(rel(e.signed_shock, one_shock_prob_exact(c, ShockCase::signed_shock)), 1e-12);
    EXPECT_LE(rel(e.one_shock, 2 * one_shock_prob_exact(c, ShockCase::signed_shock)), 1e-12);
    const auto big = ConstStepInstance::unchecked(2.0, T, 0.01, 0.0);
    const auto eb = enumerate_const_instance(big, LBMetric::avg, 0.0);
    EXPECT_LE(rel(eb.one_shock, one_shock_prob_exact(big, ShockCase::unsigned_shock)), 1e-12);
  }
}

TEST(Enumeration, MonteCarloAgrees) {
  const auto c = ConstStepInstance::unchecked(0.5, 6, 0.05, 0.0);
  const double thr = 0.5 * c.A2 * c.R / 6.0;
  const auto e = enumerate_const_instance(c, LBMetric::avg, thr);
  const auto mc = mc_const_instance(c, LBMetric::avg, thr, 50000, 8, 1);
  EXPECT_LE(std::abs(mc.signed_shock.estimate - e.signed_shock), 4 * mc.signed_shock.se);
  EXPECT_LE(std::abs(mc.one_shock.estimate - e.one_shock), 4 * mc.one_shock.se);
  EXPECT_LE(std::abs(mc.exceed.estimate - e.exceed), 4 * mc.exceed.se);
}

TEST(MonteCarlo, RejectsSmallN) {
  const auto c = build_const_instance(0.5, 10, 1e-3, 0.0);
  EXPECT_THROW(mc_const_instance(c, LBMetric::avg, 1.0, 999, 1), ConfigError);
}

TEST(MonteCarlo, WorkerInvariant) {
  const auto c = build_const_instance(0.5, 10, 1e-2 / 2, 0.0);
  const auto a = mc_const_instance(c, LBMetric::avg, 1.0, 4000, 3, 1);
  const auto b = mc_const_instance(c, LBMetric::avg, 1.0, 4000, 3, 4);
  EXPECT_EQ(a.exceed.hits, b.exceed.hits);
  EXPECT_EQ(a.one_shock.hits, b.one_shock.hits);
}

TEST(TimeVarying, ConstantScheduleMatchesConstStep) {
  const auto [R, Q] = tv_response_factors(std::vector<double>(10, 0.5));
  EXPECT_LE(rel(R, 0.3330078125), 1e-12);
  EXPECT_LE(rel(Q, 0.5 * 0.3330078125), 1e-12);
}

TEST(TimeVarying, ArgminAtLastAdmissibleShock) {
  const auto inst = build_tv_instance(std::vector<double>(20, 0.5), 20, 0.1);
  EXPECT_EQ(inst.m, 10u);
  EXPECT_EQ(inst.argmin_R, 10u);
  EXPECT_LE(rel(inst.R_T, response_oracle(0.5, 20)), 1e-12);
}

TEST(TimeVarying, EventProbability) {
  const auto inst = build_tv_instance(std::vector<double>(20, 0.5), 20, 0.1);
  EXPECT_DOUBLE_EQ(inst.p, 1.25e-3);
  const double want = 10 * 1.25e-3 * std::pow(1 - 1.25e-3, 19);
  EXPECT_LE(rel(tv_event_prob_exact(inst), want), 1e-12);
  EXPECT_NEAR(tv_event_prob_exact(inst), 0.012206, 5e-7);
  const auto r = verify_tv_instance(inst, LBMetric::avg);
  EXPECT_TRUE(r.all_true());
  EXPECT_GT(r.exact_event_prob, 0.1 / 16);
}

TEST(TimeVarying, ResponseSumsMatchSimulation) {
  RngStream s(6, 0, "schedule");
  for (int k = 0; k < 20; ++k) {
    std::vector<double> eta(30);
    for (auto& e : eta) e = 1.5 * s.uniform01();
    for (std::size_t sh = 1; sh <= 15; ++sh) {
      const auto [r, q] = tv_response_sums(eta, sh);
      const auto [rs, qs] = simulated_response(eta, sh);
      EXPECT_NEAR(eta[sh - 1] * eta[sh - 1] * r, rs, 1e-12 * (1 + rs));
      EXPECT_NEAR(eta[sh - 1] * eta[sh - 1] * q, qs, 1e-12 * (1 + qs));
    }
  }
}

TEST(TimeVarying, ZeroStepsOnShockWindow) {
  std::vector<double> eta(20, 0.3);
  for (std::size_t s = 0; s < 10; ++s) eta[s] = 0.0;
  const auto inst = build_tv_instance(eta, 20, 0.1);
  EXPECT_EQ(inst.R_T, 0.0);
  EXPECT_EQ(inst.Q_T, 0.0);
  EXPECT_THROW(verify_tv_corollary(eta, 20, 1e-3, LBMetric::avg), InstanceInvalidError);
}

TEST(TimeVarying, SingleShockFromZero) {
  std::vector<double> eta(16);
  for (std::size_t t = 0; t < 16; ++t) eta[t] = 0.1 + 0.05 * t;
  const auto inst = build_tv_instance(eta, 16, 0.2);
  for (std::size_t s = 1; s <= inst.m; ++s) {
    const auto p = tv_shocked_trajectory(inst, s, 1);
    EXPECT_EQ(p.x[s], -eta[s - 1] * inst.A);
  }
}

TEST(TimeVarying, InputValidation) {
  EXPECT_THROW(build_tv_instance(std::vector<double>(10, 0.5), 10, 0.1), ConfigError);
  EXPECT_THROW(build_tv_instance(std::vector<double>(11, 0.5), 12, 0.1), InputError);
  std::vector<double> bad(12, 0.5);
  bad[3] = -0.1;
  EXPECT_THROW(build_tv_instance(bad, 12, 0.1), InputError);
}

TEST(TimeVarying, CorollaryWhereValid) {
  const std::vector<double> eta(100, 0.2);
  for (auto m : {LBMetric::avg, LBMetric::weighted}) {
    const auto inst = build_tv_instance(eta, 100, 16 * 1e-4);
    const double bound = tv_corollary_delta_bound(inst, m);
    ASSERT_GT(bound, 1e-4);
    const auto r = verify_tv_corollary(eta, 100, 1e-4, m);
    EXPECT_TRUE(r.all_true());
    const double L = std::log(1e4);
    const double thr = m == LBMetric::avg ? 1 / (32 * 1e-4 * 10 * L) : 1 / (32 * 1e-4 * L);
    EXPECT_DOUBLE_EQ(r.metric_threshold, thr);
  }
  EXPECT_THROW(verify_tv_corollary(eta, 100, 0.07, LBMetric::avg), InstanceInvalidError);
}

TEST(TimeVarying, MonteCarloMatchesExact) {
  const auto inst = build_tv_instance(std::vector<double>(20, 0.5), 20, 0.1);
  const auto mc = mc_tv_instance(inst, LBMetric::avg, 1e300, 200000, 12, 1);
  // p is the total shock probability here, so the exact value already covers both signs.
  EXPECT_LE(std::abs(mc.one_shock.estimate - tv_event_prob_exact(inst)), 4 * mc.one_shock.se);
}
