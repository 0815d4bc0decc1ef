#include "gpbolus/pg_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpbolus::pg {

namespace {

constexpr std::int64_t kOverlapSeconds = 2 * 60 * 60;

// Concatenated pre/post series: index 0..7 preprandial, 8..15 postprandial.
double series_at(const PgTrainingSample& s, int index) {
  return index < kWindow ? s.preprandial[static_cast<std::size_t>(index)]
                         : s.postprandial[static_cast<std::size_t>(index - kWindow)];
}

double range_or_one(const Eigen::VectorXd& col) {
  const double r = col.maxCoeff() - col.minCoeff();
  return r > 1e-9 ? r : 1.0;
}

}  // namespace

std::string to_string(MealClass c) {
  return c == MealClass::breakfast ? "breakfast" : "lunch_dinner";
}

MealClass meal_class_from_string(std::string_view s) {
  if (s == "breakfast") return MealClass::breakfast;
  if (s == "lunch_dinner" || s == "lunch" || s == "dinner") return MealClass::lunch_dinner;
  throw std::invalid_argument("unknown meal class: " + std::string(s));
}

void GlucoseTrace::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!(s.glucose > 10.0 && s.glucose < 600.0))
      throw std::invalid_argument("glucose reading outside (10, 600) mg/dL at t=" +
                                  std::to_string(s.time_s));
    if (i > 0 && s.time_s <= samples[i - 1].time_s)
      throw std::invalid_argument("glucose timestamps must be strictly increasing");
  }
}

std::optional<double> resample_at(const GlucoseTrace& trace, std::int64_t time_s) {
  const auto& v = trace.samples;
  auto it = std::lower_bound(v.begin(), v.end(), time_s,
                             [](const GlucoseSample& s, std::int64_t t) { return s.time_s < t; });
  if (it != v.end() && it->time_s == time_s) return it->glucose;
  if (it == v.begin() || it == v.end()) return std::nullopt;
  const auto& after = *it;
  const auto& before = *(it - 1);
  const std::int64_t nearest = std::min(time_s - before.time_s, after.time_s - time_s);
  if (nearest >= kAlignToleranceSeconds) return std::nullopt;
  if (after.time_s - before.time_s > 2 * kPeriodSeconds) return std::nullopt;
  const double w = static_cast<double>(time_s - before.time_s) /
                   static_cast<double>(after.time_s - before.time_s);
  return before.glucose + w * (after.glucose - before.glucose);
}

std::optional<Window> grid_window(const GlucoseTrace& trace, std::int64_t end_time_s) {
  Window w{};
  for (int k = 0; k < kWindow; ++k) {
    auto g = resample_at(trace, end_time_s - (kWindow - 1 - k) * kPeriodSeconds);
    if (!g) return std::nullopt;
    w[static_cast<std::size_t>(k)] = *g;
  }
  return w;
}

SerializationResult serialize_samples(const GlucoseTrace& trace,
                                      const std::vector<MealEvent>& events) {
  if (trace.samples.empty()) throw std::invalid_argument("serialize_samples: empty glucose trace");
  trace.validate();

  std::vector<MealEvent> meals = events;
  std::stable_sort(meals.begin(), meals.end(),
                   [](const MealEvent& a, const MealEvent& b) { return a.time_s < b.time_s; });

  std::vector<bool> overlapping(meals.size(), false);
  for (std::size_t i = 0; i + 1 < meals.size(); ++i) {
    if (meals[i + 1].time_s - meals[i].time_s < kOverlapSeconds) {
      overlapping[i] = true;
      overlapping[i + 1] = true;
    }
  }

  SerializationResult out;
  for (std::size_t i = 0; i < meals.size(); ++i) {
    const auto& m = meals[i];
    if (m.carbs < 0.0 || m.bolus < 0.0)
      throw std::invalid_argument("meal carbs and bolus must be nonnegative");
    if (overlapping[i]) {
      out.skipped.push_back({m.time_s, "overlapping meal within 2 h"});
      continue;
    }
    auto pre = grid_window(trace, m.time_s);
    if (!pre) {
      out.skipped.push_back({m.time_s, "insufficient preprandial history"});
      continue;
    }
    Window post{};
    bool complete = true;
    for (int k = 1; k <= kHorizon && complete; ++k) {
      auto g = resample_at(trace, m.time_s + k * kPeriodSeconds);
      if (g)
        post[static_cast<std::size_t>(k - 1)] = *g;
      else
        complete = false;
    }
    if (!complete) {
      out.skipped.push_back({m.time_s, "insufficient postprandial data"});
      continue;
    }
    out.samples.push_back({m.meal_class, *pre, m.bolus, m.carbs, post});
  }
  return out;
}

double NormalizationStats::normalize(int step, int column, double glucose) const {
  if (degenerate(step, column)) return 0.5;
  const double lo = min[static_cast<std::size_t>(step)][static_cast<std::size_t>(column)];
  const double hi = max[static_cast<std::size_t>(step)][static_cast<std::size_t>(column)];
  return (glucose - lo) / (hi - lo);
}

double NormalizationStats::denormalize(int step, int column, double z) const {
  const double lo = min[static_cast<std::size_t>(step)][static_cast<std::size_t>(column)];
  const double hi = max[static_cast<std::size_t>(step)][static_cast<std::size_t>(column)];
  if (degenerate(step, column)) return lo;
  return lo + z * (hi - lo);
}

Eigen::VectorXd PgPredictor::step_input(int step, const Window& window, double u, double d) const {
  Eigen::VectorXd z(input_dim());
  for (int c = 0; c < kWindow; ++c) z[c] = norm.normalize(step, c, window[static_cast<std::size_t>(c)]);
  z[kWindow] = u;
  if (meal_aware) z[kWindow + 1] = d;
  return z;
}

PgPredictor train_pg_model(const std::vector<PgTrainingSample>& samples, bool meal_aware,
                           const TrainOptions& options, std::vector<gp::FitReport>* reports) {
  if (samples.size() < 2) throw std::invalid_argument("train_pg_model: need at least 2 samples");
  const MealClass cls = samples.front().meal_class;
  for (const auto& s : samples) {
    if (s.meal_class != cls)
      throw std::invalid_argument("train_pg_model: samples mix meal classes");
    if (s.bolus < 0.0 || s.carbs < 0.0)
      throw std::invalid_argument("train_pg_model: negative bolus or carbs");
  }

  PgPredictor pred;
  pred.meal_aware = meal_aware;
  pred.meal_class = cls;
  const auto n = static_cast<Eigen::Index>(samples.size());

  for (int step = 0; step < kHorizon; ++step) {
    auto& lo = pred.norm.min[static_cast<std::size_t>(step)];
    auto& hi = pred.norm.max[static_cast<std::size_t>(step)];
    for (int c = 0; c < kWindow; ++c) {
      double a = series_at(samples.front(), step + c), b = a;
      for (const auto& s : samples) {
        a = std::min(a, series_at(s, step + c));
        b = std::max(b, series_at(s, step + c));
      }
      lo[static_cast<std::size_t>(c)] = a;
      hi[static_cast<std::size_t>(c)] = b;
    }
  }

  pred.step_models.reserve(kHorizon);
  for (int step = 0; step < kHorizon; ++step) {
    gp::Dataset data;
    data.inputs.resize(n, pred.input_dim());
    data.targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      Window w{};
      for (int c = 0; c < kWindow; ++c) w[static_cast<std::size_t>(c)] = series_at(s, step + c);
      data.inputs.row(i) = pred.step_input(step, w, s.bolus, s.carbs).transpose();
      data.targets[i] = series_at(s, step + kWindow) - series_at(s, step + kWindow - 1);
    }

    gp::KernelParams init;
    const double var_y = (data.targets.array() - data.targets.mean()).square().mean();
    init.signal_variance = std::max(var_y, 1.0);
    init.length_scales.resize(pred.input_dim());
    for (Eigen::Index j = 0; j < pred.input_dim(); ++j)
      init.length_scales[j] = range_or_one(data.inputs.col(j));
    init.noise_variance = std::max(0.1 * init.signal_variance, options.fit.min_noise_variance);
    gp::FitOptions fit = options.fit;
    if (options.glucose_slope_sd > 0.0) {
      fit.slope_prior_sd = Eigen::VectorXd::Zero(pred.input_dim());
      for (int c = 0; c < kWindow; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const auto st = static_cast<std::size_t>(step);
        fit.slope_prior_sd[c] = options.glucose_slope_sd * (pred.norm.max[st][k] - pred.norm.min[st][k]);
      }
      for (Eigen::Index j = kWindow; j < pred.input_dim(); ++j) {
        const auto col = data.inputs.col(j);
        const double var_x = (col.array() - col.mean()).square().mean();
        if (var_x > 0.0 && var_y > 0.0 && options.fit.slope_prior_scale > 0.0)
          fit.slope_prior_sd[j] = options.fit.slope_prior_scale * std::sqrt(var_y / var_x);
      }
    }
    try {
      auto r = gp::fit_hyperparams_detailed(data, init, gp::MeanMode::linear, fit);
      if (reports) reports->push_back(std::move(r.report));
      pred.step_models.push_back(std::move(r.gp));
    } catch (const gp::FitError& e) {
      throw gp::FitError("step " + std::to_string(step + 1) + ": " + e.what());
    }
  }
  return pred;
}

PredictedTrajectory predict_trajectory(const PgPredictor& predictor, const Window& preprandial,
                                       double u, std::optional<double> d) {
  if (predictor.meal_aware && !d)
    throw MealAwarenessError("meal-aware predictor requires the meal carbohydrate amount");
  if (!predictor.meal_aware && d)
    throw MealAwarenessError("meal-free predictor does not accept a meal carbohydrate amount");
  if (!std::isfinite(u) || u < 0.0) throw std::invalid_argument("bolus must be finite and >= 0");
  if (d && (!std::isfinite(*d) || *d < 0.0))
    throw std::invalid_argument("carbohydrate amount must be finite and >= 0");
  if (predictor.step_models.size() != static_cast<std::size_t>(kHorizon))
    throw std::invalid_argument("predictor must hold 8 step models");
  for (double g : preprandial)
    if (!std::isfinite(g)) throw std::invalid_argument("preprandial window must be finite");

  PredictedTrajectory out;
  Window window = preprandial;
  double previous = preprandial.back();
  for (int step = 0; step < kHorizon; ++step) {
    const auto z = predictor.step_input(step, window, u, d.value_or(0.0));
    const auto p = predictor.step_models[static_cast<std::size_t>(step)].predict(z);
    const double mean = previous + p.mean;
    if (!std::isfinite(mean) || !std::isfinite(p.variance))
      throw std::runtime_error("non-finite glucose prediction at step " + std::to_string(step + 1));
    out.means[static_cast<std::size_t>(step)] = mean;
    out.variances[static_cast<std::size_t>(step)] = p.variance;
    std::rotate(window.begin(), window.begin() + 1, window.end());
    window.back() = mean;
    previous = mean;
  }
  return out;
}

}  // namespace gpbolus::pg
