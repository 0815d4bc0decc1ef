#pragma once

#include "gpbolus/gp.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpbolus::pg {

/// Autoregressive window (lag 7 => 8 readings) and prediction horizon.
inline constexpr int kWindow = 8;
inline constexpr int kHorizon = 8;
inline constexpr std::int64_t kPeriodSeconds = 15 * 60;
inline constexpr std::int64_t kAlignToleranceSeconds = kPeriodSeconds / 2;

using Window = std::array<double, kWindow>;

/// Meal information supplied to a predictor that was (not) trained with it.
class MealAwarenessError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MealClass { breakfast, lunch_dinner };

std::string to_string(MealClass c);
MealClass meal_class_from_string(std::string_view s);

struct GlucoseSample {
  std::int64_t time_s = 0;
  double glucose = 0.0;  // mg/dL
};

struct GlucoseTrace {
  std::vector<GlucoseSample> samples;
  void validate() const;
};

struct MealEvent {
  std::int64_t time_s = 0;
  double carbs = 0.0;  // g
  double bolus = 0.0;  // U
  MealClass meal_class = MealClass::breakfast;
};

struct PgTrainingSample {
  MealClass meal_class = MealClass::breakfast;
  Window preprandial{};   // P_{t-7} .. P_t
  double bolus = 0.0;
  double carbs = 0.0;
  Window postprandial{};  // P_{t+1} .. P_{t+8}
};

struct SkipRecord {
  std::int64_t time_s = 0;
  std::string reason;
};

struct SerializationResult {
  std::vector<PgTrainingSample> samples;
  std::vector<SkipRecord> skipped;
};

/// Glucose at `time_s`, exact or linearly interpolated between bracketing
/// readings when the nearer one is within half a sampling period.
std::optional<double> resample_at(const GlucoseTrace& trace, std::int64_t time_s);

/// The 8 grid readings ending at (and including) `end_time_s`.
std::optional<Window> grid_window(const GlucoseTrace& trace, std::int64_t end_time_s);

SerializationResult serialize_samples(const GlucoseTrace& trace, const std::vector<MealEvent>& events);

/// Per-step, per-glucose-column min/max over the training set.
struct NormalizationStats {
  std::array<Window, kHorizon> min{};
  std::array<Window, kHorizon> max{};

  bool degenerate(int step, int column) const { return !(max[step][column] > min[step][column]); }
  double normalize(int step, int column, double glucose) const;
  double denormalize(int step, int column, double z) const;
};

struct PredictedTrajectory {
  std::array<double, kHorizon> means{};
  std::array<double, kHorizon> variances{};
};

/// Eight per-step GPs over [normalized glucose window, u, (d)] predicting
/// the next glucose difference.
struct PgPredictor {
  std::vector<gp::TrainedGp> step_models;
  NormalizationStats norm;
  bool meal_aware = true;
  MealClass meal_class = MealClass::breakfast;

  int input_dim() const { return meal_aware ? kWindow + 2 : kWindow + 1; }
  /// Step inputs for a glucose window; `d` ignored when meal-free.
  Eigen::VectorXd step_input(int step, const Window& window, double u, double d) const;
};

struct TrainOptions {
  gp::FitOptions fit = default_fit();
  // Prior sd of a glucose-column slope in raw units (mg/dL of step change
  // per mg/dL of input). Mapped through the column range onto the
  // normalized scale. Zero falls back to fit.slope_prior_scale.
  double glucose_slope_sd = 0.1;
  static gp::FitOptions default_fit() {
    gp::FitOptions f;
    f.min_noise_variance = 1.0;
    f.slope_prior_scale = 1.0;
    f.mean_uncertainty = true;
    return f;
  }
};

/// `reports`, when given, receives one fit report per step model.
PgPredictor train_pg_model(const std::vector<PgTrainingSample>& samples, bool meal_aware,
                           const TrainOptions& options = {}, std::vector<gp::FitReport>* reports = nullptr);

PredictedTrajectory predict_trajectory(const PgPredictor& predictor, const Window& preprandial,
                                       double u, std::optional<double> d);

}  // namespace gpbolus::pg
