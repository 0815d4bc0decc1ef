#pragma once

#include "gpbolus/ars_cost.hpp"
#include "gpbolus/bo.hpp"
#include "gpbolus/pg_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpbolus::advisor {

/// Insulin-on-board with linear decay over the duration of insulin action.
struct IobModel {
  double duration_min = 240.0;
  void validate() const;
};

struct DoseRecord {
  std::int64_t time_s = 0;
  double units = 0.0;
};

struct CalculatorSettings {
  double cr = 10.0;    // g/U
  double cf = 40.0;    // mg/dL per U
  double g_sp = 140.0; // mg/dL
  void validate() const;
};

struct AdvisorConfig {
  cost::CostConfig cost;
  bo::BoOptions bo;
  IobModel iob;
  void validate() const;
};

struct BolusRecommendation {
  double raw_bolus = 0.0;
  double iob = 0.0;
  double final_bolus = 0.0;
  pg::PredictedTrajectory trajectory;  // at raw_bolus
  std::vector<bo::TraceEntry> bo_trace;
  bool fallback = false;
  std::string note;
};

double iob(const std::vector<DoseRecord>& history, std::int64_t now_s, const IobModel& model);

/// Bayesian-optimized bolus over GP-predicted trajectories, minus IOB and
/// clamped to [0, u_max]. Every objective evaluation reuses the same random
/// stream (common random numbers), so the result is a function of `seed`.
BolusRecommendation recommend_bolus(const pg::PgPredictor& predictor, const pg::Window& preprandial,
                                    std::optional<double> meal_carbs, const AdvisorConfig& config,
                                    const std::vector<DoseRecord>& history, std::int64_t now_s,
                                    std::uint64_t seed);

/// CHO/CR + (G_c - G_sp)/CF - IOB, floored at zero.
double standard_calculator(double cho, double g_c, const CalculatorSettings& settings, double iob);

}  // namespace gpbolus::advisor
