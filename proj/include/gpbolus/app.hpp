#pragma once

#include "gpbolus/advisor.hpp"
#include "gpbolus/insilico.hpp"
#include "gpbolus/io.hpp"
#include "gpbolus/pg_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gpbolus::app {

/// Seed of the shipped cohort file.
inline constexpr std::uint64_t kCohortSeed = 2024;

struct AppConfig {
  advisor::AdvisorConfig advisor;  // carries the IOB model
  advisor::CalculatorSettings calculator;
  pg::TrainOptions training;
  std::string cohort_path;  // empty: the built-in cohort
  std::uint64_t seed = 7;

  void validate() const;
};

/// Sections: advisor, iob, calculator, training, cohort, seed. Missing
/// sections keep their defaults; unknown keys are field errors.
AppConfig app_config_from_json(const io::Json& j);
io::Json to_json(const AppConfig& c);
AppConfig load_app_config(const std::filesystem::path& path);

std::vector<sim::CohortPatient> load_cohort(const AppConfig& config);

/// One predictor per meal class.
struct PatientModels {
  pg::PgPredictor breakfast;
  pg::PgPredictor lunch_dinner;
  const pg::PgPredictor& for_class(pg::MealClass c) const {
    return c == pg::MealClass::breakfast ? breakfast : lunch_dinner;
  }
};

PatientModels train_models(const std::vector<pg::PgTrainingSample>& samples, bool meal_aware,
                           const pg::TrainOptions& options, std::vector<gp::FitReport>* reports = nullptr);

/// Advisor dosing at each meal; the meal index picks the random stream.
sim::BolusPolicy advisor_policy(const PatientModels& models, const advisor::AdvisorConfig& config,
                                std::uint64_t seed);

/// Per-patient streams under a master seed.
struct PatientSeeds {
  std::uint64_t collect = 0;
  std::uint64_t protocol = 0;
  std::uint64_t advisor = 0;
};
PatientSeeds patient_seeds(std::uint64_t master, const std::string& patient_id);

/// calculator | proposed | proposed-nm
enum class EvalPolicy { calculator, proposed, proposed_nm };
std::string to_string(EvalPolicy p);
/// Also accepts "both" (calculator, proposed) and "all".
std::vector<EvalPolicy> policies_from_string(const std::string& s);

/// "A", "B" or a protocol file.
sim::ScenarioProtocol resolve_protocol(const std::string& name, double basal_scale);

struct EvaluateOptions {
  sim::ScenarioProtocol protocol = sim::protocol_a();
  std::vector<EvalPolicy> policies{EvalPolicy::calculator, EvalPolicy::proposed};
  std::vector<std::string> patients;  // empty: whole cohort
};

struct PatientRun {
  std::string patient;
  EvalPolicy policy = EvalPolicy::calculator;
  sim::SimulationResult simulation;
  sim::MetricsReport metrics;
};

struct Evaluation {
  sim::ScenarioProtocol protocol;
  std::vector<EvalPolicy> policies;
  std::vector<std::string> patients;
  std::uint64_t seed = 0;
  std::vector<PatientRun> runs;  // patient-major, policy order within a patient
};

/// Collect, train and run the protocol under every requested policy. All
/// policies share the patient's protocol seed, so meals and CGM noise match.
Evaluation evaluate(const AppConfig& config, const std::vector<sim::CohortPatient>& cohort,
                    const EvaluateOptions& options, std::uint64_t seed);

/// Comparison rows: median (q1, q3) across patients per policy.
std::string comparison_table(const Evaluation& e);

/// table.txt, metrics.csv, doses.csv, cgm.csv, evaluation.json
void write_evaluation(const Evaluation& e, const AppConfig& config, const std::filesystem::path& dir);

io::Json to_json(const sim::MetricsReport& m);

// --- advisory replay --------------------------------------------------------

struct ClinicalMeal {
  std::int64_t time_s = 0;
  double grams = 0.0;
  std::optional<double> clinician_bolus;
};

/// Columns timestamp, glucose (ISO-8601, mg/dL); extra columns ignored.
pg::GlucoseTrace read_clinical_trace(const std::string& csv);
/// Columns time, grams, clinician_bolus (may be empty).
std::vector<ClinicalMeal> read_clinical_meals(const std::string& csv);

/// Breakfast between 04:00 and 10:30 clock time.
pg::MealClass classify_meal(std::int64_t time_s);

struct ReplayRow {
  std::int64_t time_s = 0;
  pg::MealClass meal_class = pg::MealClass::breakfast;
  double grams = 0.0;
  std::optional<double> clinician_bolus;
  pg::Window preprandial{};
  advisor::BolusRecommendation recommendation;
};

struct ReplaySkip {
  std::int64_t time_s = 0;
  std::string reason;
};

struct ReplayReport {
  std::vector<ReplayRow> rows;
  std::vector<ReplaySkip> skipped;
};

/// Open-loop: each row sees only the recorded history (clinician doses) and
/// draws its random stream from its own timestamp.
ReplayReport replay(const pg::GlucoseTrace& trace, const std::vector<ClinicalMeal>& meals,
                    const std::vector<pg::PgPredictor>& models, const AppConfig& config,
                    std::uint64_t seed);

std::string replay_table(const ReplayReport& r);
std::string replay_to_csv(const ReplayReport& r);
io::Json to_json(const ReplayReport& r);

}  // namespace gpbolus::app
