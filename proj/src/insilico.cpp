#include "gpbolus/insilico.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpbolus::sim {

namespace {

constexpr int kGridMin = 15;

struct Derivative {
  double s1, s2, insulin, x, q1, q2, glucose;
};

Derivative rhs(const PatientParams& p, const PatientState& s, double basal_per_min) {
  const double vi = p.vi * p.body_mass;
  const double vg = p.vg * p.body_mass;
  const double ra = 1000.0 * p.bioavailability * s.q2 / p.tau_m;
  return {basal_per_min - s.s1 / p.tau_i,
          (s.s1 - s.s2) / p.tau_i,
          1000.0 * s.s2 / (p.tau_i * vi) - p.n * s.insulin,
          -p.p2 * s.x + p.p2 * p.si * s.insulin,
          -s.q1 / p.tau_m,
          (s.q1 - s.q2) / p.tau_m,
          -(p.sg + s.x) * s.glucose + p.egp + ra / vg};
}

PatientState axpy(const PatientState& s, const Derivative& d, double h) {
  return {s.s1 + h * d.s1,       s.s2 + h * d.s2, s.insulin + h * d.insulin, s.x + h * d.x,
          s.q1 + h * d.q1,       s.q2 + h * d.q2, s.glucose + h * d.glucose};
}

double truncated_normal(Rng& rng, double limit) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double z = normal(rng);
    if (std::abs(z) <= limit) return z;
  }
}

double insulin_share(const PatientParams& p) {
  const double x_star = p.egp / kBasalTargetGlucose - p.sg;
  return x_star / (p.sg + x_star);
}

struct RealizedMeal {
  std::int64_t time_s;
  double carbs;
  pg::MealClass meal_class;
  bool announced;
};

std::vector<RealizedMeal> realize_meals(const ScenarioProtocol& protocol, Rng& rng) {
  const std::int64_t start = static_cast<std::int64_t>(protocol.start_clock_min) * 60;
  const std::int64_t end = start + static_cast<std::int64_t>(protocol.duration_h) * 3600;
  const int days = static_cast<int>((end + kDaySeconds - 1) / kDaySeconds);
  std::vector<RealizedMeal> out;
  for (int day = 0; day < days; ++day) {
    for (const auto& slot : protocol.meals) {
      if (slot.day != -1 && slot.day != day) continue;
      const int slots = (slot.clock_hi_min - slot.clock_lo_min) / kGridMin;
      int clock = slot.clock_lo_min;
      if (slots > 0) clock += kGridMin * std::uniform_int_distribution<int>(0, slots)(rng);
      double carbs = slot.carbs_mean;
      if (slot.carbs_sd > 0.0)
        carbs = std::max(0.0, std::normal_distribution<double>(slot.carbs_mean, slot.carbs_sd)(rng));
      const std::int64_t t = static_cast<std::int64_t>(day) * kDaySeconds + clock * 60;
      if (t >= start && t < end) out.push_back({t, carbs, slot.meal_class, slot.announced});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RealizedMeal& a, const RealizedMeal& b) { return a.time_s < b.time_s; });
  return out;
}

}  // namespace

void PatientParams::validate() const {
  const double positives[] = {body_mass, vg, vi, n, p2, si, sg, egp, tau_i, tau_m, bioavailability};
  for (double v : positives)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("patient parameters must be positive");
  if (bioavailability > 1.0) throw std::invalid_argument("bioavailability must be <= 1");
}

double nominal_basal(const PatientParams& p, double glucose) {
  p.validate();
  if (!(glucose > 0.0)) throw std::invalid_argument("target glucose must be positive");
  const double x_star = p.egp / glucose - p.sg;
  if (!(x_star > 0.0))
    throw std::invalid_argument("fasting fixed point needs insulin action (EGP/G > S_G)");
  const double i_star = x_star / p.si;
  return 60.0 * i_star * p.n * p.vi * p.body_mass / 1000.0;
}

PatientState steady_state(const PatientParams& p, double basal_u_per_h) {
  p.validate();
  if (!(basal_u_per_h >= 0.0)) throw std::invalid_argument("basal must be >= 0");
  const double b = basal_u_per_h / 60.0;
  PatientState s;
  s.s1 = b * p.tau_i;
  s.s2 = s.s1;
  s.insulin = 1000.0 * b / (p.vi * p.body_mass * p.n);
  s.x = p.si * s.insulin;
  s.glucose = p.egp / (p.sg + s.x);
  return s;
}

VirtualPatient step_patient(const VirtualPatient& patient, const StepInputs& inputs, double dt_min) {
  if (!(dt_min > 0.0) || dt_min > 5.0) throw std::invalid_argument("dt must be in (0, 5] min");
  if (!(inputs.basal_u_per_h >= 0.0) || !(inputs.bolus_u >= 0.0) || !(inputs.meal_g >= 0.0))
    throw std::invalid_argument("inputs must be nonnegative");
  const auto& p = patient.params;
  PatientState s = patient.state;
  s.s1 += inputs.bolus_u;
  s.q1 += inputs.meal_g;
  const double b = inputs.basal_u_per_h / 60.0;
  const Derivative k1 = rhs(p, s, b);
  const Derivative k2 = rhs(p, axpy(s, k1, 0.5 * dt_min), b);
  const Derivative k3 = rhs(p, axpy(s, k2, 0.5 * dt_min), b);
  const Derivative k4 = rhs(p, axpy(s, k3, dt_min), b);
  const Derivative sum{k1.s1 + 2 * k2.s1 + 2 * k3.s1 + k4.s1,
                       k1.s2 + 2 * k2.s2 + 2 * k3.s2 + k4.s2,
                       k1.insulin + 2 * k2.insulin + 2 * k3.insulin + k4.insulin,
                       k1.x + 2 * k2.x + 2 * k3.x + k4.x,
                       k1.q1 + 2 * k2.q1 + 2 * k3.q1 + k4.q1,
                       k1.q2 + 2 * k2.q2 + 2 * k3.q2 + k4.q2,
                       k1.glucose + 2 * k2.glucose + 2 * k3.glucose + k4.glucose};
  PatientState next = axpy(s, sum, dt_min / 6.0);
  next.s1 = std::max(next.s1, 0.0);
  next.s2 = std::max(next.s2, 0.0);
  next.insulin = std::max(next.insulin, 0.0);
  next.x = std::max(next.x, 0.0);
  next.q1 = std::max(next.q1, 0.0);
  next.q2 = std::max(next.q2, 0.0);
  next.glucose = std::max(next.glucose, 1e-6);
  return {p, next};
}

double cgm_read(double glucose, double noise_sd, Rng& rng) {
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise sd must be >= 0");
  double g = glucose;
  if (noise_sd > 0.0) g += noise_sd * std::normal_distribution<double>(0.0, 1.0)(rng);
  return std::max(g, 20.0);
}

PatientParams nominal_params() { return PatientParams{}; }

advisor::CalculatorSettings tune_calculator(const PatientParams& p, double basal_u_per_h) {
  const double tdi = 48.0 * basal_u_per_h;
  CohortPatient probe;
  probe.params = p;
  probe.basal_u_per_h = basal_u_per_h;

  ScenarioProtocol day;
  day.name = "tuning";
  day.start_clock_min = 5 * 60;
  day.duration_h = 24;
  day.cgm_noise_sd = 0.0;
  day.meals = {{0, 7 * 60 + 30, 7 * 60 + 30, 50.0, 0.0, pg::MealClass::breakfast, true},
               {0, 12 * 60, 12 * 60, 75.0, 0.0, pg::MealClass::lunch_dinner, true},
               {0, 18 * 60 + 30, 18 * 60 + 30, 75.0, 0.0, pg::MealClass::lunch_dinner, true}};

  advisor::CalculatorSettings best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 16; ++i) {
    const double k_cr = 0.6 + 0.075 * i;
    for (double k_cf : {0.75, 1.0, 1.5}) {
      probe.calculator = {k_cr * 500.0 / tdi, k_cf * 1800.0 / tdi, 140.0};
      const auto run = run_protocol(probe, day, 0);
      const auto m = compute_metrics(run);
      const double score = m.pct_in_70_180 - 10.0 * m.pct_below_70 - 50.0 * m.pct_below_54 -
                           0.01 * std::abs(m.mean_glucose - 140.0);
      if (score > best_score) {
        best_score = score;
        best = probe.calculator;
      }
    }
  }
  return best;
}

std::vector<CohortPatient> generate_cohort(std::uint64_t seed, const CohortOptions& options) {
  if (options.size < 1) throw std::invalid_argument("cohort size must be >= 1");
  Rng rng(derive_seed(seed, "cohort"));
  const double log_sd = std::log1p(options.spread);
  const PatientParams base = nominal_params();
  std::vector<CohortPatient> cohort;
  for (int k = 0; k < options.size; ++k) {
    PatientParams p;
    for (;;) {
      p = base;
      p.body_mass *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.si *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.sg *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.egp *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.tau_i *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.tau_m *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      p.p2 *= std::exp(log_sd * truncated_normal(rng, options.max_z));
      if (p.egp / kBasalTargetGlucose > p.sg && insulin_share(p) >= options.min_insulin_share) break;
    }
    CohortPatient c;
    c.id = "vp" + std::string(k + 1 < 10 ? "0" : "") + std::to_string(k + 1);
    c.params = p;
    c.basal_u_per_h = nominal_basal(p);
    const double tdi = 48.0 * c.basal_u_per_h;
    c.calculator = {500.0 / tdi, 1800.0 / tdi, 140.0};
    if (options.tune_calculator) c.calculator = tune_calculator(p, c.basal_u_per_h);
    cohort.push_back(c);
  }
  return cohort;
}

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::calculator: return "calculator";
    case PolicyKind::perturbed_calculator: return "perturbed_calculator";
    case PolicyKind::advisor: return "advisor";
  }
  throw std::invalid_argument("unknown policy kind");
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "calculator") return PolicyKind::calculator;
  if (s == "perturbed_calculator") return PolicyKind::perturbed_calculator;
  if (s == "advisor") return PolicyKind::advisor;
  throw std::invalid_argument("unknown bolus policy '" + s + "'");
}

void ScenarioProtocol::validate() const {
  if (start_clock_min < 0 || start_clock_min >= 24 * 60)
    throw std::invalid_argument("start clock must be within one day");
  if (duration_h <= 0) throw std::invalid_argument("duration must be positive");
  if (!(basal_scale > 0.0)) throw std::invalid_argument("basal_scale must be > 0");
  if (!(cgm_noise_sd >= 0.0)) throw std::invalid_argument("cgm noise sd must be >= 0");
  if (!(perturbation >= 0.0) || perturbation >= 1.0)
    throw std::invalid_argument("perturbation must be in [0, 1)");
  if (!(dt_min > 0.0) || dt_min > 5.0) throw std::invalid_argument("dt must be in (0, 5] min");
  const double steps = kGridMin / dt_min;
  if (std::abs(steps - std::round(steps)) > 1e-9)
    throw std::invalid_argument("dt must divide the 15 min sampling period");
  for (const auto& m : meals) {
    if (m.day < -1) throw std::invalid_argument("meal day must be >= -1");
    if (m.clock_lo_min < 0 || m.clock_hi_min < m.clock_lo_min || m.clock_hi_min >= 24 * 60)
      throw std::invalid_argument("meal clock window invalid");
    if (m.clock_lo_min % kGridMin != 0 || m.clock_hi_min % kGridMin != 0)
      throw std::invalid_argument("meal clock times must lie on the 15 min grid");
    if (!(m.carbs_mean >= 0.0) || !(m.carbs_sd >= 0.0))
      throw std::invalid_argument("meal carbs must be >= 0");
  }
}

ScenarioProtocol collection_protocol() {
  ScenarioProtocol p;
  p.name = "collection";
  p.start_clock_min = 5 * 60;
  p.duration_h = 7 * 24;
  p.policy = PolicyKind::perturbed_calculator;
  p.perturbation = 0.3;
  p.meals = {{-1, 7 * 60, 9 * 60, 50.0, 3.0, pg::MealClass::breakfast, true},
             {-1, 11 * 60, 13 * 60, 75.0, 4.0, pg::MealClass::lunch_dinner, true},
             {-1, 18 * 60, 20 * 60, 75.0, 4.0, pg::MealClass::lunch_dinner, true}};
  return p;
}

namespace {

std::vector<MealSlot> fixed_day(int day, double b, double l, double d) {
  return {{day, 8 * 60, 8 * 60, b, 0.0, pg::MealClass::breakfast, true},
          {day, 12 * 60, 12 * 60, l, 0.0, pg::MealClass::lunch_dinner, true},
          {day, 18 * 60, 18 * 60, d, 0.0, pg::MealClass::lunch_dinner, true}};
}

}  // namespace

ScenarioProtocol protocol_a(double basal_scale) {
  ScenarioProtocol p;
  p.name = "A";
  p.duration_h = 48;
  p.basal_scale = basal_scale;
  p.meals = fixed_day(0, 55, 65, 85);
  const auto second = fixed_day(1, 45, 85, 65);
  p.meals.insert(p.meals.end(), second.begin(), second.end());
  return p;
}

ScenarioProtocol protocol_b(double basal_scale) {
  ScenarioProtocol p;
  p.name = "B";
  p.duration_h = 24;
  p.basal_scale = basal_scale;
  p.meals = fixed_day(0, 45, 85, 65);
  return p;
}

BolusPolicy calculator_policy(const advisor::CalculatorSettings& settings,
                              const advisor::IobModel& iob) {
  settings.validate();
  return [settings, iob](const MealContext& ctx) {
    const double on_board = advisor::iob(ctx.history, ctx.time_s, iob);
    return advisor::standard_calculator(ctx.announced ? ctx.carbs : 0.0, ctx.preprandial.back(),
                                        settings, on_board);
  };
}

SimulationResult run_protocol(const CohortPatient& patient, const ScenarioProtocol& protocol,
                              std::uint64_t seed, const BolusPolicy& policy,
                              const advisor::IobModel& iob) {
  protocol.validate();
  patient.params.validate();
  BolusPolicy bolus = policy;
  if (!bolus) {
    if (protocol.policy == PolicyKind::advisor)
      throw std::invalid_argument("advisor protocol needs a bolus policy");
    bolus = calculator_policy(patient.calculator, iob);
  }

  Rng meal_rng(derive_seed(seed, "meals"));
  Rng cgm_rng(derive_seed(seed, "cgm"));
  Rng perturb_rng(derive_seed(seed, "perturb"));
  const auto meals = realize_meals(protocol, meal_rng);

  SimulationResult result;
  result.seed = seed;
  result.basal_u_per_h = patient.basal_u_per_h * protocol.basal_scale;
  VirtualPatient vp{patient.params, steady_state(patient.params, result.basal_u_per_h)};

  const int steps_per_grid = static_cast<int>(std::lround(kGridMin / protocol.dt_min));
  const int grid_points = protocol.duration_h * 60 / kGridMin;
  const std::int64_t t0 = static_cast<std::int64_t>(protocol.start_clock_min) * 60;
  std::size_t next_meal = 0;

  for (int k = 0; k < grid_points; ++k) {
    const std::int64_t t = t0 + static_cast<std::int64_t>(k) * kGridMin * 60;
    result.cgm.samples.push_back({t, cgm_read(vp.state.glucose, protocol.cgm_noise_sd, cgm_rng)});
    result.true_glucose.push_back(vp.state.glucose);

    StepInputs first{result.basal_u_per_h, 0.0, 0.0};
    while (next_meal < meals.size() && meals[next_meal].time_s <= t) {
      const auto& meal = meals[next_meal];
      MealContext ctx;
      ctx.time_s = t;
      const auto n = result.cgm.samples.size();
      for (int i = 0; i < pg::kWindow; ++i) {
        const std::size_t back = static_cast<std::size_t>(pg::kWindow - 1 - i);
        ctx.preprandial[static_cast<std::size_t>(i)] =
            result.cgm.samples[n > back ? n - 1 - back : 0].glucose;
      }
      ctx.carbs = meal.carbs;
      ctx.announced = meal.announced;
      ctx.meal_class = meal.meal_class;
      ctx.history = result.doses;
      ctx.meal_index = static_cast<int>(next_meal);
      double u = bolus(ctx);
      if (!std::isfinite(u) || u < 0.0) throw std::runtime_error("bolus policy returned an invalid dose");
      double factor = 1.0;
      if (protocol.policy == PolicyKind::perturbed_calculator && protocol.perturbation > 0.0)
        factor = std::uniform_real_distribution<double>(1.0 - protocol.perturbation,
                                                        1.0 + protocol.perturbation)(perturb_rng);
      u *= factor;
      result.doses.push_back({t, u});
      result.perturbation_factors.push_back(factor);
      result.meals.push_back({t, meal.carbs, u, meal.meal_class});
      first.bolus_u += u;
      first.meal_g += meal.carbs;
      ++next_meal;
    }

    for (int s = 0; s < steps_per_grid; ++s) {
      vp = step_patient(vp, s == 0 ? first : StepInputs{result.basal_u_per_h, 0.0, 0.0}, protocol.dt_min);
    }
  }
  return result;
}

CollectionResult run_data_collection(const CohortPatient& patient, std::uint64_t seed,
                                     const advisor::IobModel& iob) {
  CollectionResult out;
  out.simulation = run_protocol(patient, collection_protocol(), seed, {}, iob);
  out.serialized = pg::serialize_samples(out.simulation.cgm, out.simulation.meals);
  return out;
}

MetricsReport compute_metrics(const pg::GlucoseTrace& cgm) {
  if (cgm.samples.empty()) throw std::invalid_argument("metrics need a non-empty trace");
  MetricsReport m;
  const double n = static_cast<double>(cgm.samples.size());
  double sum = 0.0, at7 = 0.0;
  int n7 = 0;
  for (const auto& s : cgm.samples) {
    const double g = s.glucose;
    if (g < 54.0) m.pct_below_54 += 1.0;
    if (g < 70.0) m.pct_below_70 += 1.0;
    if (g >= 70.0 && g <= 180.0) m.pct_in_70_180 += 1.0;
    if (g > 180.0) m.pct_above_180 += 1.0;
    if (g > 250.0) m.pct_above_250 += 1.0;
    sum += g;
    if (((s.time_s % kDaySeconds) + kDaySeconds) % kDaySeconds == 7 * 3600) {
      at7 += g;
      ++n7;
    }
  }
  for (double* pct : {&m.pct_below_54, &m.pct_below_70, &m.pct_in_70_180, &m.pct_above_180, &m.pct_above_250})
    *pct *= 100.0 / n;
  m.mean_glucose = sum / n;
  double ss = 0.0;
  for (const auto& s : cgm.samples) ss += (s.glucose - m.mean_glucose) * (s.glucose - m.mean_glucose);
  m.sd_glucose = std::sqrt(ss / n);
  m.mean_glucose_at_0700 = n7 > 0 ? at7 / n7 : std::numeric_limits<double>::quiet_NaN();
  return m;
}

}  // namespace gpbolus::sim
