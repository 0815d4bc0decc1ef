#pragma once

#include "gpbolus/advisor.hpp"
#include "gpbolus/bo.hpp"
#include "gpbolus/gp.hpp"
#include "gpbolus/insilico.hpp"
#include "gpbolus/pg_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpbolus::io {

using Json = nlohmann::json;

inline constexpr const char* kSchema = "v1";

struct FieldError {
  std::string field;
  std::string message;
};

/// Input rejected with one entry per offending field.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<FieldError> errors);
  ValidationError(const std::string& field, const std::string& message)
      : ValidationError(std::vector<FieldError>{{field, message}}) {}
  const std::vector<FieldError>& errors() const { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

Json to_json(const gp::TrainedGp& gp);
gp::TrainedGp gp_from_json(const Json& j);

Json to_json(const pg::PgPredictor& predictor);
pg::PgPredictor predictor_from_json(const Json& j);

Json to_json(const pg::PredictedTrajectory& t);

Json to_json(const cost::CostConfig& c);
Json to_json(const advisor::AdvisorConfig& c);
Json to_json(const advisor::CalculatorSettings& c);

/// Reads fields present in `j` over `base`; unknown keys are rejected.
advisor::AdvisorConfig advisor_config_from_json(const Json& j, const std::string& path,
                                                advisor::AdvisorConfig base = {});
advisor::CalculatorSettings calculator_from_json(const Json& j, const std::string& path);

Json to_json(const advisor::BolusRecommendation& r);

Json to_json(const std::vector<sim::CohortPatient>& cohort, std::uint64_t seed);
std::vector<sim::CohortPatient> cohort_from_json(const Json& j);

Json to_json(const sim::ScenarioProtocol& p);
sim::ScenarioProtocol protocol_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// meal_class, pre_1..pre_8, u, d, post_1..post_8
std::string samples_to_csv(const std::vector<pg::PgTrainingSample>& samples);
std::vector<pg::PgTrainingSample> samples_from_csv(const std::string& text);

/// timestamp,glucose and time,grams,clinician_bolus,...: the clinical trace layout.
std::string cgm_to_csv(const pg::GlucoseTrace& trace);
std::string meals_to_csv(const std::vector<pg::MealEvent>& meals,
                         const std::vector<double>& perturbation_factors);
std::string trace_to_csv(const std::vector<bo::TraceEntry>& trace);

/// Minimal RFC-4180-ish reader: header row, comma separated, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 when absent
};
CsvTable parse_csv(const std::string& text);

/// "YYYY-MM-DDTHH:MM[:SS][Z]" (UTC) to seconds since the epoch.
std::int64_t parse_iso8601(const std::string& s);
std::string format_iso8601(std::int64_t seconds);

}  // namespace gpbolus::io
