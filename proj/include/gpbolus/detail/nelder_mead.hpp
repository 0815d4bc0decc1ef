#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace gpbolus::detail {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization (standard reflection / expansion /
/// contraction / shrink coefficients). Non-finite objective values are
/// treated as +inf, which lets callers encode box constraints.
/// on_iteration(best_value) is called after every completed iteration.
template <class Objective, class OnIteration>
NelderMeadResult nelder_mead(Objective&& objective, const Eigen::VectorXd& x0, double step,
                             int max_evaluations, double tolerance, OnIteration&& on_iteration) {
  const Eigen::Index n = x0.size();
  NelderMeadResult result;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> values(static_cast<std::size_t>(n + 1));
  values[0] = eval(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    simplex[static_cast<std::size_t>(i + 1)][i] += step;
    values[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
  }

  std::vector<std::size_t> order(simplex.size());
  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];
    on_iteration(values[best]);

    const double spread = values[worst] - values[best];
    double size = 0.0;
    for (const auto& v : simplex) size = std::max(size, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(values[best]) && std::isfinite(values[worst]) &&
        spread <= tolerance * (std::abs(values[best]) + tolerance) && size < 1e-3) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  result.value = *best_it;
  result.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  return result;
}

}  // namespace gpbolus::detail
