#include <gtest/gtest.h>

#include <cmath>

#include "adamsep/problems.hpp"

using namespace adamsep;

TEST(Objective, HalfSquareAtMinimizer) {
  const auto f = Objective::half_square();
  const RealVec x{0.0};
  EXPECT_EQ(f.value(x), 0.0);
  EXPECT_EQ(f.gradient(x)[0], 0.0);
}

TEST(Objective, HalfSquareAtOne) {
  const auto f = Objective::half_square();
  const RealVec x{1.0};
  EXPECT_EQ(f.value(x), 0.5);
  EXPECT_EQ(f.gradient(x)[0], 1.0);
}

TEST(Objective, DiagMatchesHandSum) {
  const auto f = Objective::quadratic_diag({2.0, 0.5, 3.0});
  const RealVec x{1.0, -2.0, 0.5};
  EXPECT_DOUBLE_EQ(f.value(x), 0.5 * (2.0 * 1.0 + 0.5 * 4.0 + 3.0 * 0.25));
  const auto g = f.gradient(x);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], -1.0);
  EXPECT_DOUBLE_EQ(g[2], 1.5);
  EXPECT_EQ(f.smoothness(), 3.0);
}

TEST(Objective, CosineAtOrigin) {
  const auto f = Objective::quadratic_cosine(1);
  const RealVec x{0.0};
  EXPECT_EQ(f.value(x), 0.0);
  EXPECT_EQ(f.gradient(x)[0], 0.0);
}

TEST(Objective, CosineMatchesDirectFormula) {
  const auto f = Objective::quadratic_cosine(2);
  const RealVec x{0.7, -2.3};
  double want = 0.0;
  for (double xi : x) want += xi * xi + std::cos(xi) - 1.0;
  EXPECT_NEAR(f.value(x), want, 1e-14);
  EXPECT_NEAR(f.gradient(x)[1], 2 * -2.3 - std::sin(-2.3), 1e-15);
}

TEST(Objective, CosineGradientMatchesFiniteDifference) {
  const auto f = Objective::quadratic_cosine(1);
  for (double x0 : {-3.0, -0.4, 0.9, 5.0}) {
    const double h = 1e-6;
    const double fd = (f.value(RealVec{x0 + h}) - f.value(RealVec{x0 - h})) / (2 * h);
    EXPECT_NEAR(f.gradient(RealVec{x0})[0], fd, 1e-7);
  }
}

TEST(Objective, ShiftedValueAtLeastOne) {
  const auto f = Objective::quadratic_cosine(3);
  EXPECT_EQ(f.shifted_value(RealVec(3, 0.0)), 1.0);
  EXPECT_GT(f.shifted_value(RealVec(3, 0.2)), 1.0);
}

TEST(Objective, RejectsBadInputs) {
  EXPECT_THROW(Objective::quadratic_diag({}), ConfigError);
  EXPECT_THROW(Objective::quadratic_diag({1.0, -1.0}), ConfigError);
  EXPECT_THROW(Objective::quadratic_cosine(0), ConfigError);
  EXPECT_THROW(Objective::half_square().value(RealVec{1.0, 2.0}), InputError);
}

TEST(Oracle, ZeroNoiseReturnsExactGradient) {
  const Oracle o(Objective::quadratic_diag({1.5, 2.0}), ZeroNoise{});
  RngStream s(1, 0, "noise");
  const RealVec x{2.0, -1.0};
  const auto g = o.sample(x, s);
  EXPECT_EQ(g[0], 3.0);
  EXPECT_EQ(g[1], -2.0);
  EXPECT_EQ(s.counter(), 0u);
  EXPECT_TRUE(o.deterministic());
}

TEST(Oracle, DrawAccounting) {
  const Oracle gauss(Objective::quadratic_cosine(4), GaussianNoise{1.0});
  RngStream s(1, 0, "noise");
  gauss.sample(RealVec(4, 0.0), s);
  EXPECT_EQ(s.counter(), 4u);
  const Oracle tp(Objective::half_square(), ThreePointNoise{3.0});
  RngStream s2(1, 0, "noise");
  tp.sample(RealVec{0.0}, s2);
  EXPECT_EQ(s2.counter(), 1u);
}

TEST(Oracle, VarianceBound) {
  EXPECT_EQ(Oracle(Objective::quadratic_cosine(3), GaussianNoise{2.0}).variance_bound(), 12.0);
  EXPECT_EQ(Oracle(Objective::half_square(), ThreePointNoise{7.0}).variance_bound(), 1.0);
  EXPECT_EQ(Oracle(Objective::half_square(), ZeroNoise{}).variance_bound(), 0.0);
}

TEST(Oracle, ThreePointValidation) {
  EXPECT_THROW(Oracle(Objective::quadratic_cosine(2), ThreePointNoise{2.0}), ConfigError);
  EXPECT_THROW(Oracle(Objective::half_square(), ThreePointNoise{0.5}), ConfigError);
  EXPECT_THROW(Oracle(Objective::half_square(), GaussianNoise{-1.0}), ConfigError);
}

TEST(ThreePoint, UniformMapping) {
  // A = 2: p = 1/4, so [0, 1/8) -> +2, [1/8, 1/4) -> -2, else 0.
  EXPECT_EQ(three_point_from_uniform(0.0, 2.0), 2.0);
  EXPECT_EQ(three_point_from_uniform(0.124, 2.0), 2.0);
  EXPECT_EQ(three_point_from_uniform(0.125, 2.0), -2.0);
  EXPECT_EQ(three_point_from_uniform(0.2499, 2.0), -2.0);
  EXPECT_EQ(three_point_from_uniform(0.25, 2.0), 0.0);
  EXPECT_EQ(three_point_from_uniform(1.0 - 1e-16, 2.0), 0.0);
  // A = 1: every draw is a shock.
  EXPECT_EQ(std::abs(three_point_from_uniform(0.9, 1.0)), 1.0);
}

TEST(ThreePoint, PlusShockFrequencyA25) {
  const Oracle o(Objective::half_square(), ThreePointNoise{25.0});
  RngStream s(2024, 0, "noise");
  const RealVec x{0.0};
  const int n = 1'000'000;
  int hits = 0;
  for (int k = 0; k < n; ++k) hits += o.sample(x, s)[0] == 25.0;
  const double p = 1.0 / 1250.0, se = std::sqrt(p * (1 - p) / n);
  EXPECT_LT(std::abs(hits / double(n) - p), 4 * se);
}

TEST(ThreePoint, UnitSecondMomentA2) {
  const Oracle o(Objective::half_square(), ThreePointNoise{2.0});
  RngStream s(77, 0, "noise");
  const RealVec x{0.0};
  RunningStats m1, m2;
  for (int k = 0; k < 1'000'000; ++k) {
    const double xi = o.sample(x, s)[0];
    m1.add(xi);
    m2.add(xi * xi);
  }
  EXPECT_LT(std::abs(m1.summary().mean), 4 * m1.summary().se);
  EXPECT_LT(std::abs(m2.summary().mean - 1.0), 4 * m2.summary().se);
}
