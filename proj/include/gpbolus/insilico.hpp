#pragma once

#include "gpbolus/advisor.hpp"
#include "gpbolus/pg_model.hpp"
#include "gpbolus/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gpbolus::sim {

inline constexpr std::int64_t kDaySeconds = 86400;
inline constexpr double kBasalTargetGlucose = 120.0;

/// Minimal-model virtual patient: two-compartment subcutaneous insulin,
/// plasma insulin, remote insulin action, two-compartment gut absorption.
///
///   S1' = b - S1/tau_i            S2' = (S1 - S2)/tau_i
///   I'  = 1000 S2/(tau_i V_I BW) - n I
///   X'  = -p2 X + p2 S_I I
///   Q1' = -Q1/tau_m               Q2' = (Q1 - Q2)/tau_m
///   G'  = -(S_G + X) G + EGP + 1000 f Q2/(tau_m V_G BW)
struct PatientParams {
  double body_mass = 70.0;   // kg
  double vg = 1.6;           // dL/kg
  double vi = 0.12;          // L/kg
  double n = 0.14;           // 1/min
  double p2 = 0.025;         // 1/min
  double si = 7.5e-4;        // 1/min per mU/L
  double sg = 0.005;         // 1/min
  double egp = 1.8;          // mg/dL/min
  double tau_i = 50.0;       // min
  double tau_m = 40.0;       // min
  double bioavailability = 0.8;

  void validate() const;
};

struct PatientState {
  double s1 = 0.0;       // U
  double s2 = 0.0;       // U
  double insulin = 0.0;  // mU/L
  double x = 0.0;        // 1/min
  double q1 = 0.0;       // g
  double q2 = 0.0;       // g
  double glucose = kBasalTargetGlucose;
};

struct VirtualPatient {
  PatientParams params;
  PatientState state;
};

struct StepInputs {
  double basal_u_per_h = 0.0;
  double bolus_u = 0.0;  // impulse into S1 at the start of the step
  double meal_g = 0.0;   // impulse into Q1 at the start of the step
};

/// Basal rate (U/h) whose fasting fixed point is `glucose` mg/dL.
double nominal_basal(const PatientParams& p, double glucose = kBasalTargetGlucose);

/// Fasting steady state under a constant basal rate.
PatientState steady_state(const PatientParams& p, double basal_u_per_h);

/// One RK4 step of `dt_min` minutes, dt in (0, 5].
VirtualPatient step_patient(const VirtualPatient& patient, const StepInputs& inputs, double dt_min);

double cgm_read(double glucose, double noise_sd, Rng& rng);

/// Cohort member as frozen in the cohort file.
struct CohortPatient {
  std::string id;
  PatientParams params;
  double basal_u_per_h = 0.0;
  advisor::CalculatorSettings calculator;
};

struct CohortOptions {
  int size = 10;
  double spread = 0.25;           // one log-sd is ln(1 + spread)
  double max_z = 2.0;
  double min_insulin_share = 0.4;  // X*/(S_G + X*) at the fasting fixed point
  bool tune_calculator = true;
};

PatientParams nominal_params();

/// Deterministic cohort: perturbed parameters, basal from the fixed point,
/// CR/CF from the 500/1800 rules, then grid-tuned multipliers.
std::vector<CohortPatient> generate_cohort(std::uint64_t seed, const CohortOptions& options = {});

/// Multipliers on the rule-based CR/CF picked on a fixed noise-free day.
advisor::CalculatorSettings tune_calculator(const PatientParams& p, double basal_u_per_h);

struct MealSlot {
  int day = 0;                 // 0-based; -1 repeats on every day
  int clock_lo_min = 0;        // earliest clock time, minutes after midnight
  int clock_hi_min = 0;        // equal to clock_lo_min for a fixed time
  double carbs_mean = 0.0;     // g
  double carbs_sd = 0.0;       // g; 0 for fixed amounts
  pg::MealClass meal_class = pg::MealClass::breakfast;
  bool announced = true;
};

enum class PolicyKind { calculator, perturbed_calculator, advisor };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);

struct ScenarioProtocol {
  std::string name;
  int start_clock_min = 5 * 60;
  int duration_h = 24;
  std::vector<MealSlot> meals;
  PolicyKind policy = PolicyKind::calculator;
  double perturbation = 0.0;  // +-fraction for perturbed_calculator
  double basal_scale = 1.0;
  double cgm_noise_sd = 2.0;
  double dt_min = 1.0;

  void validate() const;
};

ScenarioProtocol collection_protocol();
ScenarioProtocol protocol_a(double basal_scale = 1.0);
ScenarioProtocol protocol_b(double basal_scale = 1.0);

/// What a bolus policy sees at a meal.
struct MealContext {
  std::int64_t time_s = 0;
  pg::Window preprandial{};  // CGM grid readings ending at the meal
  double carbs = 0.0;
  bool announced = true;
  pg::MealClass meal_class = pg::MealClass::breakfast;
  std::vector<advisor::DoseRecord> history;
  int meal_index = 0;
};

using BolusPolicy = std::function<double(const MealContext&)>;

/// Standard calculator on the last CGM reading, with IOB from the history.
BolusPolicy calculator_policy(const advisor::CalculatorSettings& settings, const advisor::IobModel& iob);

struct SimulationResult {
  pg::GlucoseTrace cgm;
  std::vector<double> true_glucose;  // aligned with cgm samples
  std::vector<advisor::DoseRecord> doses;
  std::vector<pg::MealEvent> meals;
  std::vector<double> perturbation_factors;  // one per dose; 1 when unperturbed
  double basal_u_per_h = 0.0;
  std::uint64_t seed = 0;
};

/// Simulates from the fasting steady state under the delivered basal.
/// `policy` is required for advisor protocols; calculator protocols use the
/// patient's calculator settings when it is empty.
SimulationResult run_protocol(const CohortPatient& patient, const ScenarioProtocol& protocol,
                              std::uint64_t seed, const BolusPolicy& policy = {},
                              const advisor::IobModel& iob = {});

struct CollectionResult {
  SimulationResult simulation;
  pg::SerializationResult serialized;
};

CollectionResult run_data_collection(const CohortPatient& patient, std::uint64_t seed,
                                     const advisor::IobModel& iob = {});

struct MetricsReport {
  double pct_below_54 = 0.0;
  double pct_below_70 = 0.0;
  double pct_in_70_180 = 0.0;
  double pct_above_180 = 0.0;
  double pct_above_250 = 0.0;
  double mean_glucose = 0.0;
  double sd_glucose = 0.0;
  double mean_glucose_at_0700 = 0.0;  // NaN when no reading falls on 07:00
};

MetricsReport compute_metrics(const pg::GlucoseTrace& cgm);
inline MetricsReport compute_metrics(const SimulationResult& result) { return compute_metrics(result.cgm); }

}  // namespace gpbolus::sim
