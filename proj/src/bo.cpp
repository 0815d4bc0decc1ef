#include "gpbolus/bo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpbolus::bo {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double grid_point(int index, int grid_size) {
  return grid_size == 1 ? 0.0 : static_cast<double>(index) / static_cast<double>(grid_size - 1);
}

}  // namespace

void BoState::append(const Observation& obs) {
  observations.push_back(obs);
  if (obs.cost < best.cost) best = obs;
}

std::vector<double> init_design(double lower, double upper, int n) {
  if (n < 2) throw std::invalid_argument("init_design needs n >= 2");
  if (!(upper > lower)) throw std::invalid_argument("init_design needs upper > lower");
  std::vector<double> pts(static_cast<std::size_t>(n));
  const double step = (upper - lower) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i)] = lower + step * i;
  pts.back() = upper;
  return pts;
}

double expected_improvement(double mean, double sd, double best) {
  if (!(sd > 0.0)) return 0.0;
  const double improvement = best - mean;
  const double z = improvement / sd;
  const double cdf = 0.5 * std::erfc(-z * kInvSqrt2);
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
  return std::max(improvement * cdf + sd * pdf, 0.0);
}

double expected_improvement(const gp::TrainedGp& surrogate, double x_star, double best_cost) {
  Eigen::VectorXd x(1);
  x[0] = x_star;
  const auto p = surrogate.predict(x);
  return expected_improvement(p.mean, std::sqrt(p.variance), best_cost);
}

Proposal propose_next(const BoState& state, int grid_size) {
  if (!state.surrogate) throw std::logic_error("propose_next: surrogate not fitted");
  if (grid_size < 2) throw std::invalid_argument("propose_next: grid_size must be >= 2");
  const double best = (state.best.cost - state.output_offset) / state.output_scale;
  std::vector<double> ei(static_cast<std::size_t>(grid_size));
  int arg = 0;
  for (int i = 0; i < grid_size; ++i) {
    ei[static_cast<std::size_t>(i)] =
        expected_improvement(*state.surrogate, grid_point(i, grid_size), best);
    if (ei[static_cast<std::size_t>(i)] > ei[static_cast<std::size_t>(arg)]) arg = i;
  }
  if (arg == state.last_grid_index) {
    const int left = arg - 1, right = arg + 1;
    if (left < 0)
      arg = right;
    else if (right >= grid_size)
      arg = left;
    else
      arg = ei[static_cast<std::size_t>(right)] > ei[static_cast<std::size_t>(left)] ? right : left;
  }
  return {state.from_unit(grid_point(arg, grid_size)), ei[static_cast<std::size_t>(arg)], arg};
}

gp::FitReport refit_surrogate(BoState& state, const gp::FitOptions& fit) {
  const auto n = static_cast<Eigen::Index>(state.observations.size());
  gp::Dataset data;
  data.inputs.resize(n, 1);
  data.targets.resize(n);
  double sum = 0.0, sq = 0.0;
  for (const auto& o : state.observations) sum += o.cost;
  state.output_offset = sum / static_cast<double>(n);
  for (const auto& o : state.observations) sq += (o.cost - state.output_offset) * (o.cost - state.output_offset);
  state.output_scale = sq > 0.0 ? std::sqrt(sq / static_cast<double>(n)) : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = state.observations[static_cast<std::size_t>(i)];
    data.inputs(i, 0) = state.to_unit(o.u);
    data.targets[i] = (o.cost - state.output_offset) / state.output_scale;
  }
  gp::KernelParams init;
  if (state.surrogate) {
    init = state.surrogate->params();
  } else {
    init.signal_variance = 1.0;
    init.length_scales = Eigen::VectorXd::Constant(1, 0.2);
    init.noise_variance = 1e-4;
  }
  auto r = gp::fit_hyperparams_detailed(data, init, gp::MeanMode::zero, fit);
  state.surrogate.emplace(std::move(r.gp));
  return std::move(r.report);
}

BoResult optimize_bolus(const std::function<double(double)>& objective, double u_max,
                        const BoOptions& options) {
  if (!(u_max > 0.0)) throw std::invalid_argument("optimize_bolus: u_max must be > 0");
  BoState state;
  state.lower = 0.0;
  state.upper = u_max;
  BoResult result;

  auto observe = [&](double u, int iteration, double ei) {
    const double cost = objective(u);
    if (!std::isfinite(cost)) throw std::runtime_error("objective returned a non-finite cost");
    state.append({u, cost});
    result.trace.push_back({iteration, u, cost, ei});
  };

  for (double u : init_design(0.0, u_max, options.initial_points))
    observe(u, 0, std::numeric_limits<double>::quiet_NaN());

  for (int it = 1; it <= options.iterations; ++it) {
    try {
      result.fits.push_back(refit_surrogate(state, options.fit));
    } catch (const std::exception& e) {
      result.fallback = true;
      result.note = std::string("surrogate fit failed: ") + e.what();
      break;
    }
    state.iteration = it;
    const Proposal next = propose_next(state, options.grid_size);
    state.last_grid_index = next.grid_index;
    observe(next.u, it, next.ei * state.output_scale);
  }

  result.u_best = state.best.u;
  result.cost_best = state.best.cost;
  return result;
}

}  // namespace gpbolus::bo
