#include "gpbolus/ars_cost.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gpbolus;

namespace {

pg::PredictedTrajectory flat(const cost::Trajectory& means, double var) {
  pg::PredictedTrajectory t;
  t.means = means;
  t.variances.fill(var);
  return t;
}

// Light-tailed exponents, where the delta-method error is meaningful.
cost::Trajectory near_target(const cost::CostConfig& cfg) {
  cost::Trajectory m = cfg.target;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += i % 2 ? 4.0 : -3.0;
  return m;
}

}  // namespace

TEST(QMinus, Examples) {
  const cost::GammaQuad quad;  // [1, 10, 5, 1]
  EXPECT_NEAR(cost::q_minus_weight(0.01, 10.0, quad), 0.035, 1e-15);
  // frozen from an independent evaluation of the schedule
  EXPECT_NEAR(cost::q_minus_weight(0.01, 0.0, quad), 0.01000226989343512, 1e-16);
  EXPECT_NEAR(cost::q_minus_weight(0.01, 30.0, quad), 0.05999999989694232, 1e-16);
  EXPECT_NEAR(cost::q_minus_weight(0.01, 1e6, quad), 0.06, 1e-15);
}

TEST(QMinus, BoundedAndIncreasing) {
  const cost::GammaQuad quad;
  double previous = 0.0;
  for (double dev = 0.0; dev <= 500.0; dev += 0.1) {
    const double ratio = cost::q_minus_weight(0.02, dev, quad) / 0.02;
    EXPECT_GT(ratio, 1.0);
    EXPECT_LE(ratio, 6.0);
    if (dev < 40.0) EXPECT_GT(ratio, previous);
    EXPECT_GE(ratio, previous);
    previous = ratio;
  }
}

TEST(Exponent, Examples) {
  const cost::CostConfig cfg;
  EXPECT_EQ(cost::sample_exponent(cfg.target, cfg), 0.0);

  cost::Trajectory above = cfg.target;
  for (auto& g : above) g += 15.0;
  double expect = 0.0;
  for (double q : cfg.q_plus) expect += q * 225.0;
  EXPECT_NEAR(cost::sample_exponent(above, cfg), expect, 1e-12);

  cost::Trajectory below = cfg.target;
  for (auto& g : below) g -= 20.0;
  EXPECT_NEAR(cost::sample_exponent(below, cfg), 239.9909204262595, 1e-9);
}

TEST(Mc, DegenerateVarianceCollapses) {
  const cost::CostConfig cfg;
  Rng rng(1);
  EXPECT_NEAR(cost::estimate_ars_cost(flat(cfg.target, 0.0), cfg, rng).value, 0.0, 1e-12);
  cost::Trajectory m{150, 90, 200, 140, 170, 110, 60, 300};
  const auto e = cost::estimate_ars_cost(flat(m, 0.0), cfg, rng);
  EXPECT_NEAR(e.value, cost::sample_exponent(m, cfg), 1e-9 * cost::sample_exponent(m, cfg));
  EXPECT_EQ(e.mc_std_error, 0.0);
}

TEST(Mc, SymmetricCaseMatchesClosedForm) {
  Rng cfg_rng(99);
  std::uniform_real_distribution<double> q_dist(0.005, 0.02), dev_dist(-40.0, 40.0), frac(0.2, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    cost::Trajectory q{}, r{}, m{};
    pg::PredictedTrajectory t;
    double closed = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      q[i] = q_dist(cfg_rng);
      r[i] = 140.0;
      m[i] = r[i] + dev_dist(cfg_rng);
      t.means[i] = m[i];
      t.variances[i] = frac(cfg_rng) * 0.05 / q[i];  // 2 c q s^2 <= 0.1 with c = 1
      closed += oracle::log_quad_exp(q[i], m[i], std::sqrt(t.variances[i]), r[i]);
    }
    Rng rng(static_cast<std::uint64_t>(trial + 1));
    const auto est = cost::estimate_risk_sensitive(
        t, -2.0, 200000,
        [&](const cost::Trajectory& g) {
          double s = 0.0;
          for (std::size_t i = 0; i < 8; ++i) s += q[i] * (g[i] - r[i]) * (g[i] - r[i]);
          return s;
        },
        rng);
    EXPECT_NEAR(est.value, closed, 3.0 * est.mc_std_error) << "trial " << trial;
  }
}

TEST(Mc, RiskSensitiveInVariance) {
  const cost::CostConfig cfg;
  cost::Trajectory m{110, 130, 150, 170, 150, 140, 130, 120};
  double previous = -1e300;
  for (double var : {0.0, 4.0, 16.0, 64.0, 256.0}) {
    Rng rng(5);
    const double v = cost::estimate_ars_cost(flat(m, var), cfg, rng).value;
    EXPECT_GT(v, previous);
    previous = v;
  }
}

TEST(Mc, SeedsAgreeWithinErrors) {
  cost::CostConfig cfg;
  cfg.mc_samples = 200000;
  const auto m = near_target(cfg);
  Rng a(1), b(2);
  const auto ea = cost::estimate_ars_cost(flat(m, 1.0), cfg, a);
  const auto eb = cost::estimate_ars_cost(flat(m, 1.0), cfg, b);
  EXPECT_LT(std::abs(ea.value - eb.value), 5.0 * std::hypot(ea.mc_std_error, eb.mc_std_error));
}

TEST(Mc, StandardErrorShrinksWithSamples) {
  cost::CostConfig cfg;
  const auto m = near_target(cfg);
  cfg.mc_samples = 1000;
  Rng a(3);
  const double se1 = cost::estimate_ars_cost(flat(m, 1.0), cfg, a).mc_std_error;
  cfg.mc_samples = 100000;
  Rng b(3);
  const double se2 = cost::estimate_ars_cost(flat(m, 1.0), cfg, b).mc_std_error;
  EXPECT_NEAR(se1 / se2, 10.0, 3.0);
}

TEST(Mc, StableAtLargeDeviations) {
  const cost::CostConfig cfg;
  cost::Trajectory m = cfg.target;
  for (auto& g : m) g += 400.0;
  Rng rng(1);
  const auto e = cost::estimate_ars_cost(flat(m, 400.0), cfg, rng);
  EXPECT_TRUE(std::isfinite(e.value));
  // naive exponentiation of the same exponents overflows
  EXPECT_TRUE(std::isinf(std::exp(cost::sample_exponent(m, cfg))));
  cost::Trajectory low = cfg.target;
  for (auto& g : low) g -= 90.0;  // 400 mg/dL would leave the physical range; still overflows naively
  const auto e2 = cost::estimate_ars_cost(flat(low, 400.0), cfg, rng);
  EXPECT_TRUE(std::isfinite(e2.value));
}

TEST(Mc, DeterministicGivenSeed) {
  const cost::CostConfig cfg;
  cost::Trajectory m{110, 130, 150, 170, 150, 140, 130, 120};
  Rng a(42), b(42);
  EXPECT_EQ(cost::estimate_ars_cost(flat(m, 25.0), cfg, a).value,
            cost::estimate_ars_cost(flat(m, 25.0), cfg, b).value);
}

TEST(Total, InputPenalty) {
  const cost::CostConfig cfg;
  const auto t = flat(cfg.target, 0.0);
  Rng a(1), b(1), c(1);
  EXPECT_NEAR(cost::total_cost(t, 0.0, cfg, a), 0.0, 1e-12);
  EXPECT_NEAR(cost::total_cost(t, 5.0, cfg, b), 100.0, 1e-12);
  EXPECT_THROW(cost::total_cost(t, 15.5, cfg, c), std::invalid_argument);
  EXPECT_THROW(cost::total_cost(t, -0.1, cfg, c), std::invalid_argument);
}

TEST(Config, Validation) {
  cost::CostConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.q_plus[3] = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.mc_samples = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
