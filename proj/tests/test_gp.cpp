#include "gpbolus/gp.hpp"
#include "gpbolus/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace gpbolus;
using gp::Dataset;
using gp::KernelParams;

namespace {

KernelParams iso(Eigen::Index d, double sf2, double ell, double noise) {
  KernelParams p;
  p.signal_variance = sf2;
  p.length_scales = Eigen::VectorXd::Constant(d, ell);
  p.noise_variance = noise;
  return p;
}

}  // namespace

TEST(SeKernel, ZeroDistanceAddsNoise) {
  Eigen::VectorXd x(2);
  x << 0.3, -1.2;
  EXPECT_DOUBLE_EQ(gp::se_kernel(x, x, iso(2, 1.0, 1.0, 0.1), true), 1.1);
  EXPECT_DOUBLE_EQ(gp::se_kernel(x, x, iso(2, 1.0, 1.0, 0.1), false), 1.0);
}

TEST(SeKernel, UnitDistance) {
  Eigen::VectorXd a(1), b(1);
  a << 0.0;
  b << 1.0;
  EXPECT_NEAR(gp::se_kernel(a, b, iso(1, 1.0, 1.0, 0.0), false), 0.6065306597126334, 1e-15);
  // the noise term needs elementwise equality, not just a kernel call with the flag
  EXPECT_NEAR(gp::se_kernel(a, b, iso(1, 1.0, 1.0, 0.5), true), 0.6065306597126334, 1e-15);
}

TEST(SeKernel, FarApartDecaysToZero) {
  Eigen::VectorXd a(1), b(1);
  a << 0.0;
  b << 1e3;
  EXPECT_EQ(gp::se_kernel(a, b, iso(1, 2.0, 1.0, 0.0), false), 0.0);
}

TEST(SeKernel, RejectsMismatchAndNonFinite) {
  Eigen::VectorXd a(1), b(2), c(1);
  a << 0.0;
  b << 0.0, 1.0;
  c << std::nan("");
  EXPECT_THROW(gp::se_kernel(a, b, iso(1, 1.0, 1.0, 0.0), false), std::invalid_argument);
  EXPECT_THROW(gp::se_kernel(a, c, iso(1, 1.0, 1.0, 0.0), false), std::invalid_argument);
}

TEST(Nlml, SinglePointClosedForm) {
  Dataset d;
  d.inputs = Eigen::MatrixXd::Constant(1, 1, 0.4);
  d.targets = Eigen::VectorXd::Constant(1, 1.7);
  const auto p = iso(1, 2.0, 1.0, 0.3);
  const double s = 2.3;
  const double expected = 0.5 * (1.7 * 1.7 / s + std::log(s) + std::log(2.0 * std::numbers::pi));
  EXPECT_NEAR(gp::nlml(d, p, gp::LinearMean::zero()), expected, 1e-9);
}

TEST(Nlml, ZeroTargetsLeaveOnlyLogDet) {
  Rng rng(3);
  const Dataset d0 = oracle::random_dataset(rng, 6, 2);
  Dataset d = d0;
  d.targets.setZero();
  const auto p = iso(2, 1.3, 0.8, 0.05);
  const gp::TrainedGp g(p, gp::LinearMean::zero(), d);
  const Eigen::MatrixXd c = oracle::gram(d.inputs, p) +
                            g.jitter() * Eigen::MatrixXd::Identity(6, 6);
  const double half_log_det = 0.5 * std::log(c.determinant());
  EXPECT_NEAR(gp::nlml(d, p, gp::LinearMean::zero()), half_log_det + 3.0 * std::log(2.0 * std::numbers::pi),
              1e-9);
}

TEST(Posterior, MatchesExplicitInverseOracle) {
  Rng rng(11);
  std::uniform_int_distribution<int> n_dist(1, 10), d_dist(1, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_dist(rng), dim = d_dist(rng);
    const Dataset d = oracle::random_dataset(rng, n, dim);
    const KernelParams p = oracle::random_params(rng, dim);
    gp::LinearMean mean;
    if (trial % 2 == 1) {
      mean.mode = gp::MeanMode::linear;
      mean.slope = Eigen::VectorXd::Random(dim);
      mean.intercept = 0.7;
    }
    const gp::TrainedGp g(p, mean, d);
    for (int q = 0; q < 5; ++q) {
      const Eigen::VectorXd x = oracle::random_point(rng, dim);
      const auto got = g.predict(x);
      const auto want = oracle::explicit_predict(d, p, mean, g.jitter(), x);
      EXPECT_NEAR(got.mean, want.mean, 1e-8 * std::max(1.0, std::abs(want.mean))) << "trial " << trial;
      EXPECT_NEAR(got.variance, want.variance, 1e-8 * (p.signal_variance + p.noise_variance));
    }
  }
}

TEST(Posterior, EstimatedMeanAddsCoefficientVariance) {
  Rng rng(5);
  const Dataset d = oracle::random_dataset(rng, 9, 3);
  const KernelParams p = oracle::random_params(rng, 3);
  gp::FitOptions opts;
  opts.slope_prior_sd = Eigen::Vector3d(0.5, 2.0, 0.0);
  opts.mean_uncertainty = true;
  const auto mean = gp::profile_linear_mean(d, p, opts);
  ASSERT_TRUE(mean.estimated());
  const gp::TrainedGp g(p, mean, d);
  for (int q = 0; q < 10; ++q) {
    const Eigen::VectorXd x = oracle::random_point(rng, 3);
    const auto got = g.predict(x);
    const auto want = oracle::explicit_predict_with_basis(d, p, mean.prior_sd, g.jitter(), x);
    EXPECT_NEAR(got.mean, want.mean, 1e-8 * std::max(1.0, std::abs(want.mean)));
    EXPECT_NEAR(got.variance, want.variance, 1e-8 * std::max(1.0, want.variance));
  }
}

TEST(Posterior, InterpolatesWithoutNoise) {
  Rng rng(21);
  const Dataset d = oracle::random_dataset(rng, 7, 2);
  const gp::TrainedGp g(iso(2, 1.0, 0.9, 0.0), gp::LinearMean::zero(), d);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto pr = g.predict(d.inputs.row(i).transpose());
    EXPECT_NEAR(pr.mean, d.targets[i], 1e-6 * std::max(1.0, std::abs(d.targets[i])));
    EXPECT_NEAR(pr.variance, 0.0, 1e-6);
  }
}

TEST(Posterior, RevertsToPriorFarAway) {
  Rng rng(8);
  const Dataset d = oracle::random_dataset(rng, 5, 2);
  gp::LinearMean mean;
  mean.mode = gp::MeanMode::linear;
  mean.slope = Eigen::Vector2d(0.5, -0.25);
  mean.intercept = 2.0;
  const auto p = iso(2, 1.5, 0.5, 0.01);
  const gp::TrainedGp g(p, mean, d);
  const Eigen::Vector2d far(1e3, -1e3);
  const auto pr = g.predict(far);
  EXPECT_NEAR(pr.mean, mean(far), 1e-9);
  EXPECT_NEAR(pr.variance, 1.51, 1e-9);
}

TEST(Posterior, VarianceNeverExceedsPrior) {
  Rng rng(4);
  const Dataset d = oracle::random_dataset(rng, 10, 3);
  const auto p = iso(3, 2.0, 0.7, 0.02);
  const gp::TrainedGp g(p, gp::LinearMean::zero(), d);
  for (int q = 0; q < 200; ++q) EXPECT_LE(g.predict(oracle::random_point(rng, 3)).variance, 2.02 + 1e-12);
}

TEST(Posterior, PermutationInvariant) {
  Rng rng(9);
  const Dataset d = oracle::random_dataset(rng, 8, 2);
  Dataset shuffled = d;
  std::vector<int> perm{3, 7, 0, 5, 1, 6, 2, 4};
  for (int i = 0; i < 8; ++i) {
    shuffled.inputs.row(i) = d.inputs.row(perm[static_cast<std::size_t>(i)]);
    shuffled.targets[i] = d.targets[perm[static_cast<std::size_t>(i)]];
  }
  const auto p = iso(2, 1.0, 0.6, 0.05);
  const gp::TrainedGp a(p, gp::LinearMean::zero(), d), b(p, gp::LinearMean::zero(), shuffled);
  for (int q = 0; q < 20; ++q) {
    const Eigen::VectorXd x = oracle::random_point(rng, 2);
    EXPECT_NEAR(a.predict(x).mean, b.predict(x).mean, 1e-10);
    EXPECT_NEAR(a.predict(x).variance, b.predict(x).variance, 1e-10);
  }
}

TEST(Posterior, CholeskyReconstructsGram) {
  Rng rng(13);
  const Dataset d = oracle::random_dataset(rng, 6, 2);
  const auto p = iso(2, 1.0, 0.6, 0.05);
  const gp::TrainedGp g(p, gp::LinearMean::zero(), d);
  const Eigen::MatrixXd c = oracle::gram(d.inputs, p) + g.jitter() * Eigen::MatrixXd::Identity(6, 6);
  EXPECT_LT((g.chol_factor() * g.chol_factor().transpose() - c).norm(), 1e-12);
  EXPECT_LT((c * g.alpha() - d.targets).norm(), 1e-9);
}

TEST(Posterior, RejectsDimensionMismatch) {
  Rng rng(1);
  const Dataset d = oracle::random_dataset(rng, 3, 2);
  const gp::TrainedGp g(iso(2, 1.0, 1.0, 0.1), gp::LinearMean::zero(), d);
  EXPECT_THROW(g.predict(Eigen::VectorXd::Zero(3)), std::invalid_argument);
  EXPECT_THROW(gp::TrainedGp(iso(3, 1.0, 1.0, 0.1), gp::LinearMean::zero(), d), std::invalid_argument);
}

TEST(Fit, NeverWorseThanInitialAndMonotone) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset d = oracle::random_dataset(rng, 8, 2);
    const auto init = iso(2, 1.0, 1.0, 0.1);
    for (auto mode : {gp::MeanMode::zero, gp::MeanMode::linear}) {
      const auto r = gp::fit_hyperparams_detailed(d, init, mode);
      EXPECT_LE(r.report.final_objective, r.report.initial_objective + 1e-12);
      for (std::size_t i = 1; i < r.report.best_history.size(); ++i)
        EXPECT_LE(r.report.best_history[i], r.report.best_history[i - 1]);
      if (mode == gp::MeanMode::zero) EXPECT_NEAR(r.gp.nlml(), r.report.final_objective, 1e-9);
    }
  }
}

TEST(Fit, RecoversNoiseFromGenerativeDraw) {
  int recovered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto truth = iso(1, 1.0, 1.5, 1e-4);
    const Dataset d = oracle::sample_gp(rng, truth, 40, 0.0, 10.0);
    const auto g = gp::fit_hyperparams(d, iso(1, 0.5, 1.0, 1e-2), gp::MeanMode::zero);
    const double ratio = g.params().noise_variance / truth.noise_variance;
    if (ratio > 0.1 && ratio < 10.0) ++recovered;
  }
  EXPECT_GE(recovered, 9);
}

TEST(Fit, ConstantTargetsShrinkSignalVariance) {
  Dataset d;
  d.inputs = Eigen::VectorXd::LinSpaced(10, 0.0, 9.0);
  d.targets = Eigen::VectorXd::Constant(10, 0.1);
  const auto init = iso(1, 100.0, 1.0, 0.01);
  const auto g = gp::fit_hyperparams(d, init, gp::MeanMode::zero);
  EXPECT_LT(g.params().signal_variance, init.signal_variance);
  EXPECT_LT(g.nlml(), gp::nlml(d, init, gp::LinearMean::zero()));
}

TEST(Fit, SinglePointInterpolates) {
  Dataset d;
  d.inputs = Eigen::MatrixXd::Constant(1, 2, 0.3);
  d.targets = Eigen::VectorXd::Constant(1, -0.8);
  const auto g = gp::fit_hyperparams(d, iso(2, 1.0, 1.0, 1e-8), gp::MeanMode::zero);
  EXPECT_NEAR(g.predict(d.inputs.row(0).transpose()).mean, -0.8, 1e-3);
}

TEST(Fit, DeterministicAndLinearMeanFitted) {
  Rng rng(23);
  Dataset d = oracle::random_dataset(rng, 10, 2);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.targets[i] += 3.0 * d.inputs(i, 0) - 2.0;
  const auto a = gp::fit_hyperparams(d, iso(2, 1.0, 1.0, 0.1), gp::MeanMode::linear);
  const auto b = gp::fit_hyperparams(d, iso(2, 1.0, 1.0, 0.1), gp::MeanMode::linear);
  EXPECT_EQ(a.params().signal_variance, b.params().signal_variance);
  EXPECT_EQ(a.mean().slope, b.mean().slope);
  EXPECT_EQ(a.mean().mode, gp::MeanMode::linear);
  EXPECT_TRUE(a.mean().slope.allFinite());
}

TEST(Fit, NoiseFloorRespected) {
  Rng rng(2);
  const Dataset d = oracle::random_dataset(rng, 8, 1);
  gp::FitOptions o;
  o.min_noise_variance = 0.5;
  const auto g = gp::fit_hyperparams(d, iso(1, 1.0, 1.0, 0.01), gp::MeanMode::zero, o);
  EXPECT_GE(g.params().noise_variance, 0.5 * (1 - 1e-12));
}

TEST(Validation, RejectsBadInputs) {
  Dataset d;
  d.inputs = Eigen::MatrixXd::Zero(2, 1);
  d.targets = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(d.validate(), std::invalid_argument);
  EXPECT_THROW(iso(1, -1.0, 1.0, 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(iso(1, 1.0, 0.0, 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(iso(1, 1.0, 1.0, -1.0).validate(), std::invalid_argument);
}
