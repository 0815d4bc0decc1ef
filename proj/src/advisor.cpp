#include "gpbolus/advisor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpbolus::advisor {

void IobModel::validate() const {
  if (!(duration_min > 0.0) || !std::isfinite(duration_min))
    throw std::invalid_argument("IOB duration must be > 0");
}

void CalculatorSettings::validate() const {
  if (!(cr > 0.0) || !std::isfinite(cr)) throw std::invalid_argument("CR must be > 0");
  if (!(cf > 0.0) || !std::isfinite(cf)) throw std::invalid_argument("CF must be > 0");
  if (!std::isfinite(g_sp)) throw std::invalid_argument("G_sp must be finite");
}

void AdvisorConfig::validate() const {
  cost.validate();
  iob.validate();
  if (bo.initial_points < 2) throw std::invalid_argument("initial_points must be >= 2");
  if (bo.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (bo.grid_size < 2) throw std::invalid_argument("grid_size must be >= 2");
}

double iob(const std::vector<DoseRecord>& history, std::int64_t now_s, const IobModel& model) {
  model.validate();
  double total = 0.0;
  for (const auto& d : history) {
    if (d.units < 0.0) throw std::invalid_argument("dose units must be >= 0");
    if (d.time_s > now_s) throw std::invalid_argument("dose history contains a future dose");
    const double elapsed_min = static_cast<double>(now_s - d.time_s) / 60.0;
    total += d.units * std::max(0.0, 1.0 - elapsed_min / model.duration_min);
  }
  return total;
}

BolusRecommendation recommend_bolus(const pg::PgPredictor& predictor, const pg::Window& preprandial,
                                    std::optional<double> meal_carbs, const AdvisorConfig& config,
                                    const std::vector<DoseRecord>& history, std::int64_t now_s,
                                    std::uint64_t seed) {
  config.validate();
  if (predictor.meal_aware && !meal_carbs)
    throw pg::MealAwarenessError("meal-aware predictor requires the meal carbohydrate amount");
  if (!predictor.meal_aware && meal_carbs)
    throw pg::MealAwarenessError("meal-free predictor does not accept a meal carbohydrate amount");
  for (double g : preprandial)
    if (!std::isfinite(g) || g <= 0.0)
      throw std::invalid_argument("preprandial readings must be positive and finite");

  auto objective = [&](double u) {
    Rng rng(seed);
    const auto traj = pg::predict_trajectory(predictor, preprandial, u, meal_carbs);
    return cost::total_cost(traj, u, config.cost, rng);
  };

  const auto result = bo::optimize_bolus(objective, config.cost.u_max, config.bo);

  BolusRecommendation rec;
  rec.raw_bolus = result.u_best;
  rec.iob = iob(history, now_s, config.iob);
  rec.final_bolus = std::clamp(rec.raw_bolus - rec.iob, 0.0, config.cost.u_max);
  rec.trajectory = pg::predict_trajectory(predictor, preprandial, rec.raw_bolus, meal_carbs);
  rec.bo_trace = result.trace;
  rec.fallback = result.fallback;
  rec.note = result.note;
  return rec;
}

double standard_calculator(double cho, double g_c, const CalculatorSettings& settings, double iob) {
  settings.validate();
  if (!std::isfinite(cho) || cho < 0.0) throw std::invalid_argument("CHO must be finite and >= 0");
  if (!std::isfinite(g_c) || !std::isfinite(iob)) throw std::invalid_argument("inputs must be finite");
  return std::max(0.0, cho / settings.cr + (g_c - settings.g_sp) / settings.cf - iob);
}

}  // namespace gpbolus::advisor
