#include "gpbolus/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace gpbolus::app {

namespace {

using io::FieldError;
using io::Json;
using io::ValidationError;

std::string fixed(double v, int decimals = 1) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

double quantile(std::vector<double> v, double q) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

pg::TrainOptions training_from_json(const Json& j, pg::TrainOptions base, std::vector<FieldError>& errors) {
  if (!j.is_object()) {
    errors.push_back({"training", "expected an object"});
    return base;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string field = "training." + it.key();
    const Json& v = it.value();
    const bool number = v.is_number();
    if (it.key() == "glucose_slope_sd" && number)
      base.glucose_slope_sd = v.get<double>();
    else if (it.key() == "min_noise_variance" && number)
      base.fit.min_noise_variance = v.get<double>();
    else if (it.key() == "slope_prior_scale" && number)
      base.fit.slope_prior_scale = v.get<double>();
    else if (it.key() == "restarts" && v.is_number_integer())
      base.fit.restarts = v.get<int>();
    else if (it.key() == "mean_uncertainty" && v.is_boolean())
      base.fit.mean_uncertainty = v.get<bool>();
    else if (it.key() == "glucose_slope_sd" || it.key() == "min_noise_variance" ||
             it.key() == "slope_prior_scale" || it.key() == "restarts" || it.key() == "mean_uncertainty")
      errors.push_back({field, "wrong type"});
    else
      errors.push_back({field, "unknown field"});
  }
  if (!(base.glucose_slope_sd >= 0.0)) errors.push_back({"training.glucose_slope_sd", "must be >= 0"});
  if (!(base.fit.min_noise_variance >= 0.0)) errors.push_back({"training.min_noise_variance", "must be >= 0"});
  if (!(base.fit.slope_prior_scale >= 0.0)) errors.push_back({"training.slope_prior_scale", "must be >= 0"});
  if (base.fit.restarts < 1) errors.push_back({"training.restarts", "must be >= 1"});
  return base;
}

template <typename Fn>
void collect_errors(std::vector<FieldError>& errors, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.errors().begin(), e.errors().end());
  }
}

}  // namespace

void AppConfig::validate() const {
  advisor.validate();
  calculator.validate();
  if (training.fit.restarts < 1) throw std::invalid_argument("training restarts must be >= 1");
  if (!(training.glucose_slope_sd >= 0.0)) throw std::invalid_argument("glucose_slope_sd must be >= 0");
}

AppConfig app_config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("", "expected a JSON object");
  AppConfig c;
  std::vector<FieldError> errors;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = it.key();
    const Json& v = it.value();
    if (key == "schema") {
      if (v != io::kSchema) errors.push_back({"schema", std::string("expected \"") + io::kSchema + "\""});
    } else if (key == "advisor") {
      collect_errors(errors, [&] { c.advisor = io::advisor_config_from_json(v, "advisor", c.advisor); });
    } else if (key == "iob") {
      collect_errors(errors, [&] {
        c.advisor = io::advisor_config_from_json(Json{{"iob", v}}, "", c.advisor);
      });
    } else if (key == "calculator") {
      collect_errors(errors, [&] { c.calculator = io::calculator_from_json(v, "calculator"); });
    } else if (key == "training") {
      c.training = training_from_json(v, c.training, errors);
    } else if (key == "cohort") {
      if (v.is_string())
        c.cohort_path = v.get<std::string>();
      else if (!v.is_null())
        errors.push_back({"cohort", "expected a path string or null"});
    } else if (key == "seed") {
      if (v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0))
        c.seed = v.get<std::uint64_t>();
      else
        errors.push_back({"seed", "expected a non-negative integer"});
    } else {
      errors.push_back({key, "unknown field"});
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return c;
}

Json to_json(const AppConfig& c) {
  Json advisor = io::to_json(c.advisor);
  advisor.erase("iob");
  return {{"schema", io::kSchema},
          {"advisor", advisor},
          {"iob", {{"curve", "linear"}, {"duration_min", c.advisor.iob.duration_min}}},
          {"calculator", io::to_json(c.calculator)},
          {"training",
           {{"glucose_slope_sd", c.training.glucose_slope_sd},
            {"min_noise_variance", c.training.fit.min_noise_variance},
            {"slope_prior_scale", c.training.fit.slope_prior_scale},
            {"restarts", c.training.fit.restarts},
            {"mean_uncertainty", c.training.fit.mean_uncertainty}}},
          {"cohort", c.cohort_path.empty() ? Json(nullptr) : Json(c.cohort_path)},
          {"seed", c.seed}};
}

AppConfig load_app_config(const std::filesystem::path& path) {
  return app_config_from_json(io::read_json_file(path));
}

std::vector<sim::CohortPatient> load_cohort(const AppConfig& config) {
  if (config.cohort_path.empty()) return sim::generate_cohort(kCohortSeed);
  return io::cohort_from_json(io::read_json_file(config.cohort_path));
}

PatientModels train_models(const std::vector<pg::PgTrainingSample>& samples, bool meal_aware,
                           const pg::TrainOptions& options, std::vector<gp::FitReport>* reports) {
  std::vector<pg::PgTrainingSample> breakfast, lunch_dinner;
  for (const auto& s : samples) (s.meal_class == pg::MealClass::breakfast ? breakfast : lunch_dinner).push_back(s);
  auto b = pg::train_pg_model(breakfast, meal_aware, options, reports);
  return {std::move(b), pg::train_pg_model(lunch_dinner, meal_aware, options, reports)};
}

sim::BolusPolicy advisor_policy(const PatientModels& models, const advisor::AdvisorConfig& config,
                                std::uint64_t seed) {
  return [&models, config, seed](const sim::MealContext& ctx) {
    const auto& predictor = models.for_class(ctx.meal_class);
    std::optional<double> carbs;
    if (predictor.meal_aware) carbs = ctx.announced ? ctx.carbs : 0.0;
    const auto rec = advisor::recommend_bolus(predictor, ctx.preprandial, carbs, config, ctx.history, ctx.time_s,
                                              derive_seed(seed, static_cast<std::uint64_t>(ctx.meal_index)));
    return rec.final_bolus;
  };
}

PatientSeeds patient_seeds(std::uint64_t master, const std::string& patient_id) {
  const std::uint64_t p = derive_seed(master, patient_id);
  return {derive_seed(p, "collect"), derive_seed(p, "protocol"), derive_seed(p, "advisor")};
}

std::string to_string(EvalPolicy p) {
  switch (p) {
    case EvalPolicy::calculator: return "calculator";
    case EvalPolicy::proposed: return "proposed";
    case EvalPolicy::proposed_nm: return "proposed-nm";
  }
  return "calculator";
}

std::vector<EvalPolicy> policies_from_string(const std::string& s) {
  if (s == "calculator") return {EvalPolicy::calculator};
  if (s == "proposed") return {EvalPolicy::proposed};
  if (s == "proposed-nm") return {EvalPolicy::proposed_nm};
  if (s == "both") return {EvalPolicy::calculator, EvalPolicy::proposed};
  if (s == "all") return {EvalPolicy::calculator, EvalPolicy::proposed, EvalPolicy::proposed_nm};
  throw ValidationError("policy", "expected calculator, proposed, proposed-nm, both or all; got '" + s + "'");
}

sim::ScenarioProtocol resolve_protocol(const std::string& name, double basal_scale) {
  if (!(basal_scale > 0.0) || !std::isfinite(basal_scale)) throw ValidationError("basal_scale", "must be > 0");
  if (name == "A" || name == "a") return sim::protocol_a(basal_scale);
  if (name == "B" || name == "b") return sim::protocol_b(basal_scale);
  if (!std::filesystem::exists(name))
    throw ValidationError("protocol", "expected A, B or a protocol file; got '" + name + "'");
  auto p = io::protocol_from_json(io::read_json_file(name));
  p.basal_scale *= basal_scale;
  return p;
}

Evaluation evaluate(const AppConfig& config, const std::vector<sim::CohortPatient>& cohort,
                    const EvaluateOptions& options, std::uint64_t seed) {
  config.validate();
  options.protocol.validate();
  if (options.policies.empty()) throw ValidationError("policy", "no policy selected");

  Evaluation e;
  e.protocol = options.protocol;
  e.policies = options.policies;
  e.seed = seed;

  std::vector<const sim::CohortPatient*> selected;
  if (options.patients.empty()) {
    for (const auto& p : cohort) selected.push_back(&p);
  } else {
    for (const auto& id : options.patients) {
      const auto it = std::find_if(cohort.begin(), cohort.end(), [&](const auto& p) { return p.id == id; });
      if (it == cohort.end()) throw ValidationError("patients", "unknown patient '" + id + "'");
      selected.push_back(&*it);
    }
  }

  const auto needs = [&](EvalPolicy p) {
    return std::find(options.policies.begin(), options.policies.end(), p) != options.policies.end();
  };

  for (const auto* patient : selected) {
    e.patients.push_back(patient->id);
    const auto seeds = patient_seeds(seed, patient->id);
    std::vector<pg::PgTrainingSample> samples;
    if (needs(EvalPolicy::proposed) || needs(EvalPolicy::proposed_nm))
      samples = sim::run_data_collection(*patient, seeds.collect, config.advisor.iob).serialized.samples;

    for (const auto policy : options.policies) {
      sim::ScenarioProtocol protocol = options.protocol;
      PatientRun run;
      run.patient = patient->id;
      run.policy = policy;
      if (policy == EvalPolicy::calculator) {
        protocol.policy = sim::PolicyKind::calculator;
        run.simulation = sim::run_protocol(*patient, protocol, seeds.protocol, {}, config.advisor.iob);
      } else {
        const PatientModels models = train_models(samples, policy == EvalPolicy::proposed, config.training);
        protocol.policy = sim::PolicyKind::advisor;
        run.simulation = sim::run_protocol(*patient, protocol, seeds.protocol,
                                           advisor_policy(models, config.advisor, seeds.advisor),
                                           config.advisor.iob);
      }
      run.metrics = sim::compute_metrics(run.simulation);
      e.runs.push_back(std::move(run));
    }
  }
  return e;
}

Json to_json(const sim::MetricsReport& m) {
  return {{"pct_below_54", m.pct_below_54},
          {"pct_below_70", m.pct_below_70},
          {"pct_in_70_180", m.pct_in_70_180},
          {"pct_above_180", m.pct_above_180},
          {"pct_above_250", m.pct_above_250},
          {"mean_glucose", m.mean_glucose},
          {"sd_glucose", m.sd_glucose},
          {"mean_glucose_at_0700",
           std::isfinite(m.mean_glucose_at_0700) ? Json(m.mean_glucose_at_0700) : Json(nullptr)}};
}

namespace {

struct MetricRow {
  const char* label;
  double sim::MetricsReport::*field;
};

constexpr MetricRow kMetricRows[] = {
    {"Time < 54 mg/dL (%)", &sim::MetricsReport::pct_below_54},
    {"Time < 70 mg/dL (%)", &sim::MetricsReport::pct_below_70},
    {"Time in 70-180 mg/dL (%)", &sim::MetricsReport::pct_in_70_180},
    {"Time > 180 mg/dL (%)", &sim::MetricsReport::pct_above_180},
    {"Time > 250 mg/dL (%)", &sim::MetricsReport::pct_above_250},
    {"Mean glucose (mg/dL)", &sim::MetricsReport::mean_glucose},
    {"SD glucose (mg/dL)", &sim::MetricsReport::sd_glucose},
    {"Mean glucose at 07:00 (mg/dL)", &sim::MetricsReport::mean_glucose_at_0700},
};

const char* kMetricKeys[] = {"pct_below_54",  "pct_below_70",  "pct_in_70_180", "pct_above_180",
                             "pct_above_250", "mean_glucose",  "sd_glucose",    "mean_glucose_at_0700"};

}  // namespace

std::string comparison_table(const Evaluation& e) {
  std::ostringstream out;
  out << "Protocol " << e.protocol.name << ", basal x" << fixed(e.protocol.basal_scale, 2) << ", seed " << e.seed
      << ", " << e.patients.size() << " patients\n";
  out << "median (q1, q3) across patients\n\n";
  constexpr std::size_t label_w = 32, col_w = 24;
  std::string header = pad("Metric", label_w);
  for (const auto p : e.policies) header += pad(to_string(p), col_w);
  out << header << "\n" << std::string(label_w + col_w * e.policies.size(), '-') << "\n";
  for (const auto& row : kMetricRows) {
    std::string line = pad(row.label, label_w);
    for (const auto p : e.policies) {
      std::vector<double> values;
      for (const auto& r : e.runs)
        if (r.policy == p) values.push_back(r.metrics.*row.field);
      line += pad(fixed(quantile(values, 0.5)) + " (" + fixed(quantile(values, 0.25)) + ", " +
                      fixed(quantile(values, 0.75)) + ")",
                  col_w);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << "\n";
  }
  return out.str();
}

void write_evaluation(const Evaluation& e, const AppConfig& config, const std::filesystem::path& dir) {
  using io::format_double;
  std::string metrics = "patient,policy";
  for (const char* k : kMetricKeys) metrics += std::string(",") + k;
  metrics += "\n";
  std::string doses = "patient,policy,time,grams,units,meal_class\n";
  std::string cgm = "patient,policy,timestamp,glucose\n";
  Json runs = Json::array();
  for (const auto& r : e.runs) {
    const std::string who = r.patient + "," + to_string(r.policy);
    metrics += who;
    for (const auto& row : kMetricRows) {
      const double v = r.metrics.*row.field;
      metrics += "," + (std::isfinite(v) ? format_double(v) : std::string());
    }
    metrics += "\n";
    for (const auto& m : r.simulation.meals)
      doses += who + "," + io::format_iso8601(m.time_s) + "," + format_double(m.carbs) + "," +
               format_double(m.bolus) + "," + pg::to_string(m.meal_class) + "\n";
    for (const auto& s : r.simulation.cgm.samples)
      cgm += who + "," + io::format_iso8601(s.time_s) + "," + format_double(s.glucose) + "\n";
    Json bolus = Json::array();
    for (const auto& d : r.simulation.doses) bolus.push_back(d.units);
    runs.push_back({{"patient", r.patient},
                    {"policy", to_string(r.policy)},
                    {"seed", r.simulation.seed},
                    {"basal_u_per_h", r.simulation.basal_u_per_h},
                    {"boluses", bolus},
                    {"metrics", to_json(r.metrics)}});
  }
  Json policies = Json::array();
  for (const auto p : e.policies) policies.push_back(to_string(p));
  const Json doc = {{"schema", io::kSchema},  {"kind", "evaluation"},  {"seed", e.seed},
                    {"protocol", io::to_json(e.protocol)}, {"policies", policies},
                    {"config", to_json(config)}, {"runs", runs}};

  std::filesystem::create_directories(dir);
  io::write_text_file(dir / "table.txt", comparison_table(e));
  io::write_text_file(dir / "metrics.csv", metrics);
  io::write_text_file(dir / "doses.csv", doses);
  io::write_text_file(dir / "cgm.csv", cgm);
  io::write_text_file(dir / "evaluation.json", doc.dump(2) + "\n");
}

// --- replay -----------------------------------------------------------------

pg::GlucoseTrace read_clinical_trace(const std::string& csv) {
  const auto t = io::parse_csv(csv);
  const int ts = t.column("timestamp"), g = t.column("glucose");
  if (ts < 0 || g < 0) throw ValidationError("trace", "expected columns timestamp, glucose");
  pg::GlucoseTrace trace;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string at = "trace row " + std::to_string(r + 1);
    double value = 0.0;
    try {
      value = std::stod(row[static_cast<std::size_t>(g)]);
    } catch (const std::exception&) {
      throw ValidationError(at, "glucose is not a number");
    }
    trace.samples.push_back({io::parse_iso8601(row[static_cast<std::size_t>(ts)]), value});
  }
  std::stable_sort(trace.samples.begin(), trace.samples.end(),
                   [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  try {
    trace.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError("trace", e.what());
  }
  return trace;
}

std::vector<ClinicalMeal> read_clinical_meals(const std::string& csv) {
  const auto t = io::parse_csv(csv);
  const int time = t.column("time"), grams = t.column("grams"), bolus = t.column("clinician_bolus");
  if (time < 0 || grams < 0) throw ValidationError("meals", "expected columns time, grams[, clinician_bolus]");
  std::vector<ClinicalMeal> meals;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string at = "meals row " + std::to_string(r + 1);
    ClinicalMeal m;
    m.time_s = io::parse_iso8601(row[static_cast<std::size_t>(time)]);
    try {
      m.grams = std::stod(row[static_cast<std::size_t>(grams)]);
      if (bolus >= 0 && !row[static_cast<std::size_t>(bolus)].empty())
        m.clinician_bolus = std::stod(row[static_cast<std::size_t>(bolus)]);
    } catch (const std::exception&) {
      throw ValidationError(at, "grams and clinician_bolus must be numbers");
    }
    if (!(m.grams >= 0.0) || (m.clinician_bolus && !(*m.clinician_bolus >= 0.0)))
      throw ValidationError(at, "grams and clinician_bolus must be >= 0");
    meals.push_back(m);
  }
  std::stable_sort(meals.begin(), meals.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  return meals;
}

pg::MealClass classify_meal(std::int64_t time_s) {
  const std::int64_t clock = ((time_s % sim::kDaySeconds) + sim::kDaySeconds) % sim::kDaySeconds;
  return clock >= 4 * 3600 && clock < 10 * 3600 + 1800 ? pg::MealClass::breakfast : pg::MealClass::lunch_dinner;
}

ReplayReport replay(const pg::GlucoseTrace& trace, const std::vector<ClinicalMeal>& meals,
                    const std::vector<pg::PgPredictor>& models, const AppConfig& config,
                    std::uint64_t seed) {
  config.validate();
  ReplayReport report;
  std::vector<advisor::DoseRecord> history;
  for (const auto& meal : meals) {
    const auto cls = classify_meal(meal.time_s);
    const auto model = std::find_if(models.begin(), models.end(),
                                    [&](const pg::PgPredictor& p) { return p.meal_class == cls; });
    const auto window = pg::grid_window(trace, meal.time_s);
    if (model == models.end()) {
      report.skipped.push_back({meal.time_s, "no model for " + pg::to_string(cls)});
    } else if (!window) {
      report.skipped.push_back({meal.time_s, "incomplete preprandial CGM window"});
    } else {
      ReplayRow row;
      row.time_s = meal.time_s;
      row.meal_class = cls;
      row.grams = meal.grams;
      row.clinician_bolus = meal.clinician_bolus;
      row.preprandial = *window;
      const std::optional<double> carbs = model->meal_aware ? std::optional<double>(meal.grams) : std::nullopt;
      row.recommendation = advisor::recommend_bolus(*model, *window, carbs, config.advisor, history, meal.time_s,
                                                    derive_seed(seed, static_cast<std::uint64_t>(meal.time_s)));
      report.rows.push_back(std::move(row));
    }
    if (meal.clinician_bolus && *meal.clinician_bolus > 0.0) history.push_back({meal.time_s, *meal.clinician_bolus});
  }
  return report;
}

std::string replay_table(const ReplayReport& r) {
  std::ostringstream out;
  out << pad("time", 22) << pad("class", 14) << pad("grams", 8) << pad("G_now", 8) << pad("clinician", 11)
      << pad("raw", 8) << pad("iob", 8) << "recommended\n";
  for (const auto& row : r.rows) {
    out << pad(io::format_iso8601(row.time_s), 22) << pad(pg::to_string(row.meal_class), 14)
        << pad(fixed(row.grams, 0), 8) << pad(fixed(row.preprandial.back(), 0), 8)
        << pad(row.clinician_bolus ? fixed(*row.clinician_bolus, 2) : "-", 11)
        << pad(fixed(row.recommendation.raw_bolus, 2), 8) << pad(fixed(row.recommendation.iob, 2), 8)
        << fixed(row.recommendation.final_bolus, 2) << "\n";
  }
  for (const auto& s : r.skipped) out << "skipped " << io::format_iso8601(s.time_s) << ": " << s.reason << "\n";
  return out.str();
}

std::string replay_to_csv(const ReplayReport& r) {
  using io::format_double;
  std::string out = "time,meal_class,grams,clinician_bolus";
  for (int i = 1; i <= pg::kWindow; ++i) out += ",pre_" + std::to_string(i);
  out += ",raw_bolus,iob,recommended_bolus";
  for (int i = 1; i <= pg::kHorizon; ++i) out += ",mean_" + std::to_string(i) + ",var_" + std::to_string(i);
  out += "\n";
  for (const auto& row : r.rows) {
    out += io::format_iso8601(row.time_s) + "," + pg::to_string(row.meal_class) + "," + format_double(row.grams) +
           "," + (row.clinician_bolus ? format_double(*row.clinician_bolus) : std::string());
    for (double g : row.preprandial) out += "," + format_double(g);
    const auto& rec = row.recommendation;
    out += "," + format_double(rec.raw_bolus) + "," + format_double(rec.iob) + "," + format_double(rec.final_bolus);
    for (std::size_t i = 0; i < rec.trajectory.means.size(); ++i)
      out += "," + format_double(rec.trajectory.means[i]) + "," + format_double(rec.trajectory.variances[i]);
    out += "\n";
  }
  return out;
}

Json to_json(const ReplayReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json window = Json::array();
    for (double g : row.preprandial) window.push_back(g);
    rows.push_back({{"time", io::format_iso8601(row.time_s)},
                    {"meal_class", pg::to_string(row.meal_class)},
                    {"grams", row.grams},
                    {"clinician_bolus", row.clinician_bolus ? Json(*row.clinician_bolus) : Json(nullptr)},
                    {"preprandial", window},
                    {"recommended_bolus", row.recommendation.final_bolus},
                    {"recommendation", io::to_json(row.recommendation)}});
  }
  Json skipped = Json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"time", io::format_iso8601(s.time_s)}, {"reason", s.reason}});
  return {{"schema", io::kSchema}, {"kind", "replay"}, {"rows", rows}, {"skipped", skipped}};
}

}  // namespace gpbolus::app
