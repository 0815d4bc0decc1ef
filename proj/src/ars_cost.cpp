#include "gpbolus/ars_cost.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpbolus::cost {

void CostConfig::validate() const {
  if (!(gamma < 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("gamma must be negative (risk-averse)");
  for (double q : q_plus)
    if (!(q > 0.0) || !std::isfinite(q)) throw std::invalid_argument("q_plus entries must be > 0");
  if (!(quad.alpha > 0.0) || !(quad.c1 > 0.0) || !(quad.c2 > 0.0) || !std::isfinite(quad.beta))
    throw std::invalid_argument("gamma_quad requires alpha, c1, c2 > 0 and finite beta");
  for (double t : target)
    if (!std::isfinite(t)) throw std::invalid_argument("target entries must be finite");
  if (!(input_weight >= 0.0) || !std::isfinite(input_weight))
    throw std::invalid_argument("input_weight must be >= 0");
  if (!(u_max > 0.0) || !std::isfinite(u_max)) throw std::invalid_argument("u_max must be > 0");
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
}

double q_minus_weight(double q_plus_i, double deviation, const GammaQuad& quad) {
  return q_plus_i * (quad.c1 / (1.0 + std::exp(quad.alpha * (quad.beta - deviation))) + quad.c2);
}

double sample_exponent(const Trajectory& g, const CostConfig& config) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = g[i] - config.target[i];
    const double e2 = e * e;
    if (e >= 0.0)
      s += config.q_plus[i] * e2;
    else
      s += q_minus_weight(config.q_plus[i], -e, config.quad) * e2;
  }
  return s;
}

CostEstimate estimate_risk_sensitive(const pg::PredictedTrajectory& traj, double gamma,
                                     int n_samples, const ExponentFn& exponent, Rng& rng) {
  if (!(gamma < 0.0)) throw std::invalid_argument("gamma must be negative");
  if (n_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  Trajectory sd{};
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (!(traj.variances[i] >= 0.0) || !std::isfinite(traj.means[i]))
      throw std::invalid_argument("trajectory must have finite means and nonnegative variances");
    sd[i] = std::sqrt(traj.variances[i]);
  }

  // Streaming log-sum-exp of c*S_j with c = -gamma/2 > 0; sum1/sum2 hold
  // first and second moments of exp(c*S_j - shift).
  const double c = -0.5 * gamma;
  std::normal_distribution<double> normal(0.0, 1.0);
  double shift = -std::numeric_limits<double>::infinity();
  double sum1 = 0.0, sum2 = 0.0;
  Trajectory g{};
  for (int j = 0; j < n_samples; ++j) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = traj.means[i] + sd[i] * normal(rng);
    const double a = c * exponent(g);
    if (!std::isfinite(a)) throw std::runtime_error("non-finite risk exponent");
    if (a > shift) {
      const double r = std::exp(shift - a);
      sum1 *= r;
      sum2 *= r * r;
      shift = a;
    }
    const double w = std::exp(a - shift);
    sum1 += w;
    sum2 += w * w;
  }

  const double n = static_cast<double>(n_samples);
  const double mean_w = sum1 / n;
  const double var_w = n > 1.0 ? std::max(sum2 / n - mean_w * mean_w, 0.0) * n / (n - 1.0) : 0.0;
  CostEstimate out;
  out.n_samples = n_samples;
  out.value = (shift + std::log(mean_w)) / c;
  out.mc_std_error = std::sqrt(var_w / n) / mean_w / c;
  if (!std::isfinite(out.value) || !std::isfinite(out.mc_std_error))
    throw std::runtime_error("risk-sensitive cost is non-finite after stabilization");
  return out;
}

CostEstimate estimate_ars_cost(const pg::PredictedTrajectory& traj, const CostConfig& config,
                               Rng& rng) {
  config.validate();
  return estimate_risk_sensitive(
      traj, config.gamma, config.mc_samples,
      [&config](const Trajectory& g) { return sample_exponent(g, config); }, rng);
}

double total_cost(const pg::PredictedTrajectory& traj, double u, const CostConfig& config,
                  Rng& rng) {
  if (!std::isfinite(u) || u < 0.0 || u > config.u_max)
    throw std::invalid_argument("bolus outside [0, u_max]");
  return estimate_ars_cost(traj, config, rng).value + config.input_weight * u * u;
}

}  // namespace gpbolus::cost
