#pragma once

#include "gpbolus/pg_model.hpp"
#include "gpbolus/rng.hpp"

#include <array>
#include <functional>

namespace gpbolus::cost {

using Trajectory = std::array<double, pg::kHorizon>;

/// Shape of the below-target weight schedule: alpha (rate), beta (midpoint
/// deviation in mg/dL), c1 (span), c2 (floor).
struct GammaQuad {
  double alpha = 1.0;
  double beta = 10.0;
  double c1 = 5.0;
  double c2 = 1.0;
};

struct CostConfig {
  double gamma = -2.0;
  Trajectory q_plus{0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.02, 0.02};
  GammaQuad quad;
  Trajectory target{100.0, 120.0, 140.0, 160.0, 160.0, 150.0, 140.0, 140.0};
  double input_weight = 4.0;
  double u_max = 15.0;
  int mc_samples = 1000;

  void validate() const;
};

struct CostEstimate {
  double value = 0.0;
  double mc_std_error = 0.0;
  int n_samples = 0;
};

double q_minus_weight(double q_plus_i, double deviation, const GammaQuad& quad);

/// Quadratic exponent S(g): constant weights above target, deviation-scheduled
/// weights below it.
double sample_exponent(const Trajectory& g, const CostConfig& config);

using ExponentFn = std::function<double(const Trajectory&)>;

/// -(2/gamma) log E[exp(-(gamma/2) S(G))] with G_i ~ N(m_i, var_i) independent,
/// estimated by Monte Carlo with log-sum-exp stabilization. The standard
/// error is the delta-method error of the log-mean.
CostEstimate estimate_risk_sensitive(const pg::PredictedTrajectory& traj, double gamma,
                                     int n_samples, const ExponentFn& exponent, Rng& rng);

CostEstimate estimate_ars_cost(const pg::PredictedTrajectory& traj, const CostConfig& config,
                               Rng& rng);

/// Risk-sensitive cost plus the quadratic input penalty R*u^2.
double total_cost(const pg::PredictedTrajectory& traj, double u, const CostConfig& config, Rng& rng);

}  // namespace gpbolus::cost
