#include "gpbolus/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gpbolus::io {

namespace {

constexpr std::size_t kH = pg::kHorizon;
constexpr std::size_t kW = pg::kWindow;

std::string join_messages(const std::vector<FieldError>& errors) {
  std::string out;
  for (const auto& e : errors) {
    if (!out.empty()) out += "; ";
    out += e.field + ": " + e.message;
  }
  return out;
}

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(child(path, key), "missing field");
  return j.at(key);
}

double as_number(const Json& v, const std::string& field) {
  if (!v.is_number()) throw ValidationError(field, "expected a number");
  return v.get<double>();
}

template <std::size_t N>
std::array<double, N> as_array(const Json& v, const std::string& field) {
  if (!v.is_array() || v.size() != N)
    throw ValidationError(field, "expected an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = as_number(v[i], field + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::VectorXd as_vector(const Json& v, const std::string& field) {
  if (!v.is_array()) throw ValidationError(field, "expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = as_number(v[i], field + "[" + std::to_string(i) + "]");
  return out;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void check_schema(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw ValidationError("", "expected a JSON object");
  if (!j.contains("schema") || j.at("schema") != kSchema)
    throw ValidationError("schema", std::string("expected \"") + kSchema + "\"");
  if (!kind.empty() && (!j.contains("kind") || j.at("kind") != kind))
    throw ValidationError("kind", "expected \"" + kind + "\"");
}

// Runs `fn`, rewriting invalid_argument into a field error at `field`.
template <typename Fn>
void guarded(std::vector<FieldError>& errors, const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.errors().begin(), e.errors().end());
  } catch (const std::invalid_argument& e) {
    errors.push_back({field, e.what()});
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, const std::string& field) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(field, "not a number: '" + t + "'");
  return v;
}

}  // namespace

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::invalid_argument(join_messages(errors)), errors_(std::move(errors)) {}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- gp -------------------------------------------------------------------

Json to_json(const gp::TrainedGp& g) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "gp";
  j["params"] = {{"signal_variance", g.params().signal_variance},
                 {"length_scales", vector_json(g.params().length_scales)},
                 {"noise_variance", g.params().noise_variance}};
  const auto& m = g.mean();
  Json mean;
  mean["mode"] = m.mode == gp::MeanMode::linear ? "linear" : "zero";
  if (m.mode == gp::MeanMode::linear) {
    mean["slope"] = vector_json(m.slope);
    mean["intercept"] = m.intercept;
    if (m.estimated()) mean["prior_sd"] = vector_json(m.prior_sd);
  }
  j["mean"] = mean;
  Json inputs = Json::array();
  for (Eigen::Index i = 0; i < g.data().size(); ++i)
    inputs.push_back(vector_json(g.data().inputs.row(i).transpose()));
  j["data"] = {{"inputs", inputs}, {"targets", vector_json(g.data().targets)}};
  return j;
}

gp::TrainedGp gp_from_json(const Json& j) {
  check_schema(j, "gp");
  const Json& p = require(j, "params", "");
  gp::KernelParams params;
  params.signal_variance = as_number(require(p, "signal_variance", "params"), "params.signal_variance");
  params.length_scales = as_vector(require(p, "length_scales", "params"), "params.length_scales");
  params.noise_variance = as_number(require(p, "noise_variance", "params"), "params.noise_variance");

  const Json& m = require(j, "mean", "");
  gp::LinearMean mean;
  const Json& mode = require(m, "mode", "mean");
  if (mode == "linear") {
    mean.mode = gp::MeanMode::linear;
    mean.slope = as_vector(require(m, "slope", "mean"), "mean.slope");
    mean.intercept = as_number(require(m, "intercept", "mean"), "mean.intercept");
    if (m.contains("prior_sd")) mean.prior_sd = as_vector(m.at("prior_sd"), "mean.prior_sd");
  } else if (mode != "zero") {
    throw ValidationError("mean.mode", "expected \"linear\" or \"zero\"");
  }

  const Json& d = require(j, "data", "");
  const Json& rows = require(d, "inputs", "data");
  if (!rows.is_array() || rows.empty()) throw ValidationError("data.inputs", "expected a non-empty array");
  gp::Dataset data;
  data.targets = as_vector(require(d, "targets", "data"), "data.targets");
  const auto dim = static_cast<Eigen::Index>(rows[0].size());
  data.inputs.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = as_vector(rows[i], "data.inputs[" + std::to_string(i) + "]");
    if (row.size() != dim) throw ValidationError("data.inputs", "ragged input rows");
    data.inputs.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  try {
    return gp::TrainedGp(std::move(params), std::move(mean), std::move(data));
  } catch (const std::invalid_argument& e) {
    throw ValidationError("gp", e.what());
  }
}

// --- predictor ------------------------------------------------------------

Json to_json(const pg::PgPredictor& predictor) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "pg_predictor";
  j["meal_aware"] = predictor.meal_aware;
  j["meal_class"] = pg::to_string(predictor.meal_class);
  Json mins = Json::array(), maxs = Json::array(), flags = Json::array();
  for (int s = 0; s < pg::kHorizon; ++s) {
    const auto st = static_cast<std::size_t>(s);
    mins.push_back(predictor.norm.min[st]);
    maxs.push_back(predictor.norm.max[st]);
    Json f = Json::array();
    for (int c = 0; c < pg::kWindow; ++c) f.push_back(predictor.norm.degenerate(s, c));
    flags.push_back(f);
  }
  j["normalization"] = {{"min", mins}, {"max", maxs}, {"degenerate", flags}};
  Json models = Json::array();
  for (const auto& m : predictor.step_models) models.push_back(to_json(m));
  j["step_models"] = models;
  return j;
}

pg::PgPredictor predictor_from_json(const Json& j) {
  check_schema(j, "pg_predictor");
  pg::PgPredictor p;
  const Json& aware = require(j, "meal_aware", "");
  if (!aware.is_boolean()) throw ValidationError("meal_aware", "expected a boolean");
  p.meal_aware = aware.get<bool>();
  const Json& cls = require(j, "meal_class", "");
  if (!cls.is_string()) throw ValidationError("meal_class", "expected a string");
  try {
    p.meal_class = pg::meal_class_from_string(cls.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ValidationError("meal_class", e.what());
  }
  const Json& norm = require(j, "normalization", "");
  const Json& mins = require(norm, "min", "normalization");
  const Json& maxs = require(norm, "max", "normalization");
  if (!mins.is_array() || mins.size() != kH || !maxs.is_array() || maxs.size() != kH)
    throw ValidationError("normalization", "expected 8 rows of min and max");
  for (std::size_t s = 0; s < kH; ++s) {
    p.norm.min[s] = as_array<pg::kWindow>(mins[s], "normalization.min[" + std::to_string(s) + "]");
    p.norm.max[s] = as_array<pg::kWindow>(maxs[s], "normalization.max[" + std::to_string(s) + "]");
    for (std::size_t c = 0; c < kW; ++c)
      if (p.norm.max[s][c] < p.norm.min[s][c])
        throw ValidationError("normalization", "max below min");
  }
  const Json& models = require(j, "step_models", "");
  if (!models.is_array() || models.size() != kH)
    throw ValidationError("step_models", "expected 8 step models");
  for (std::size_t s = 0; s < models.size(); ++s) {
    p.step_models.push_back(gp_from_json(models[s]));
    if (p.step_models.back().params().dim() != p.input_dim())
      throw ValidationError("step_models[" + std::to_string(s) + "]",
                            "input dimension does not match meal awareness");
  }
  return p;
}

Json to_json(const pg::PredictedTrajectory& t) {
  Json steps = Json::array();
  for (std::size_t i = 0; i < kH; ++i)
    steps.push_back({{"minutes", 15 * static_cast<int>(i + 1)}, {"mean", t.means[i]}, {"variance", t.variances[i]}});
  return steps;
}

// --- configs --------------------------------------------------------------

Json to_json(const cost::CostConfig& c) {
  return {{"gamma", c.gamma},
          {"q_plus", c.q_plus},
          {"gamma_quad", {c.quad.alpha, c.quad.beta, c.quad.c1, c.quad.c2}},
          {"target", c.target},
          {"input_weight", c.input_weight},
          {"u_max", c.u_max},
          {"mc_samples", c.mc_samples}};
}

Json to_json(const advisor::AdvisorConfig& c) {
  Json j = to_json(c.cost);
  j["iterations"] = c.bo.iterations;
  j["initial_points"] = c.bo.initial_points;
  j["grid_size"] = c.bo.grid_size;
  j["iob"] = {{"curve", "linear"}, {"duration_min", c.iob.duration_min}};
  return j;
}

Json to_json(const advisor::CalculatorSettings& c) {
  return {{"cr", c.cr}, {"cf", c.cf}, {"g_sp", c.g_sp}};
}

advisor::AdvisorConfig advisor_config_from_json(const Json& j, const std::string& path,
                                                advisor::AdvisorConfig base) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  std::vector<FieldError> errors;
  auto& c = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = it.key();
    const std::string field = child(path, key);
    const Json& v = it.value();
    guarded(errors, field, [&] {
      if (key == "gamma") {
        c.cost.gamma = as_number(v, field);
      } else if (key == "q_plus") {
        c.cost.q_plus = as_array<pg::kHorizon>(v, field);
      } else if (key == "gamma_quad") {
        const auto q = as_array<4>(v, field);
        c.cost.quad = {q[0], q[1], q[2], q[3]};
      } else if (key == "target") {
        c.cost.target = as_array<pg::kHorizon>(v, field);
      } else if (key == "input_weight") {
        c.cost.input_weight = as_number(v, field);
      } else if (key == "u_max") {
        c.cost.u_max = as_number(v, field);
      } else if (key == "mc_samples") {
        if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
        c.cost.mc_samples = v.get<int>();
      } else if (key == "iterations") {
        if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
        c.bo.iterations = v.get<int>();
      } else if (key == "initial_points") {
        if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
        c.bo.initial_points = v.get<int>();
      } else if (key == "grid_size") {
        if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
        c.bo.grid_size = v.get<int>();
      } else if (key == "iob") {
        if (!v.is_object()) throw ValidationError(field, "expected an object");
        for (auto k = v.begin(); k != v.end(); ++k) {
          if (k.key() == "duration_min")
            c.iob.duration_min = as_number(k.value(), child(field, "duration_min"));
          else if (k.key() == "curve") {
            if (k.value() != "linear") throw ValidationError(child(field, "curve"), "only \"linear\" is supported");
          } else
            throw ValidationError(child(field, k.key()), "unknown field");
        }
      } else {
        throw ValidationError(field, "unknown field");
      }
    });
  }
  guarded(errors, path, [&] { c.validate(); });
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return c;
}

advisor::CalculatorSettings calculator_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  std::vector<FieldError> errors;
  advisor::CalculatorSettings c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string field = child(path, it.key());
    guarded(errors, field, [&] {
      if (it.key() == "cr")
        c.cr = as_number(it.value(), field);
      else if (it.key() == "cf")
        c.cf = as_number(it.value(), field);
      else if (it.key() == "g_sp")
        c.g_sp = as_number(it.value(), field);
      else
        throw ValidationError(field, "unknown field");
    });
  }
  guarded(errors, path, [&] { c.validate(); });
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return c;
}

Json to_json(const advisor::BolusRecommendation& r) {
  Json trace = Json::array();
  for (const auto& t : r.bo_trace) {
    Json e = {{"iteration", t.iteration}, {"u", t.u}, {"cost", t.cost}};
    e["ei"] = std::isfinite(t.ei) ? Json(t.ei) : Json(nullptr);
    trace.push_back(e);
  }
  Json j;
  j["raw_bolus"] = r.raw_bolus;
  j["iob"] = r.iob;
  j["final_bolus"] = r.final_bolus;
  j["trajectory"] = to_json(r.trajectory);
  j["bo_trace"] = trace;
  j["fallback"] = r.fallback;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

// --- cohort and protocols -------------------------------------------------

Json to_json(const std::vector<sim::CohortPatient>& cohort, std::uint64_t seed) {
  Json patients = Json::array();
  for (const auto& c : cohort) {
    const auto& p = c.params;
    patients.push_back({{"id", c.id},
                        {"params",
                         {{"body_mass", p.body_mass},
                          {"vg", p.vg},
                          {"vi", p.vi},
                          {"n", p.n},
                          {"p2", p.p2},
                          {"si", p.si},
                          {"sg", p.sg},
                          {"egp", p.egp},
                          {"tau_i", p.tau_i},
                          {"tau_m", p.tau_m},
                          {"bioavailability", p.bioavailability}}},
                        {"basal_u_per_h", c.basal_u_per_h},
                        {"calculator", to_json(c.calculator)}});
  }
  return {{"schema", kSchema}, {"kind", "cohort"}, {"seed", seed}, {"patients", patients}};
}

std::vector<sim::CohortPatient> cohort_from_json(const Json& j) {
  check_schema(j, "cohort");
  const Json& patients = require(j, "patients", "");
  if (!patients.is_array() || patients.empty()) throw ValidationError("patients", "expected a non-empty array");
  std::vector<sim::CohortPatient> out;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const std::string path = "patients[" + std::to_string(i) + "]";
    const Json& e = patients[i];
    sim::CohortPatient c;
    const Json& id = require(e, "id", path);
    if (!id.is_string()) throw ValidationError(child(path, "id"), "expected a string");
    c.id = id.get<std::string>();
    const Json& p = require(e, "params", path);
    const std::string pp = child(path, "params");
    auto num = [&](const char* key) { return as_number(require(p, key, pp), child(pp, key)); };
    c.params.body_mass = num("body_mass");
    c.params.vg = num("vg");
    c.params.vi = num("vi");
    c.params.n = num("n");
    c.params.p2 = num("p2");
    c.params.si = num("si");
    c.params.sg = num("sg");
    c.params.egp = num("egp");
    c.params.tau_i = num("tau_i");
    c.params.tau_m = num("tau_m");
    c.params.bioavailability = num("bioavailability");
    try {
      c.params.validate();
    } catch (const std::invalid_argument& ex) {
      throw ValidationError(pp, ex.what());
    }
    c.basal_u_per_h = as_number(require(e, "basal_u_per_h", path), child(path, "basal_u_per_h"));
    c.calculator = calculator_from_json(require(e, "calculator", path), child(path, "calculator"));
    out.push_back(std::move(c));
  }
  return out;
}

Json to_json(const sim::ScenarioProtocol& p) {
  Json meals = Json::array();
  for (const auto& m : p.meals)
    meals.push_back({{"day", m.day},
                     {"clock_lo_min", m.clock_lo_min},
                     {"clock_hi_min", m.clock_hi_min},
                     {"carbs_mean", m.carbs_mean},
                     {"carbs_sd", m.carbs_sd},
                     {"meal_class", pg::to_string(m.meal_class)},
                     {"announced", m.announced}});
  return {{"schema", kSchema},
          {"kind", "protocol"},
          {"name", p.name},
          {"start_clock_min", p.start_clock_min},
          {"duration_h", p.duration_h},
          {"meals", meals},
          {"bolus_policy", sim::to_string(p.policy)},
          {"perturbation", p.perturbation},
          {"basal_scale", p.basal_scale},
          {"cgm_noise_sd", p.cgm_noise_sd},
          {"dt_min", p.dt_min}};
}

sim::ScenarioProtocol protocol_from_json(const Json& j) {
  check_schema(j, "protocol");
  sim::ScenarioProtocol p;
  std::vector<FieldError> errors;
  auto integer = [&](const Json& v, const std::string& field) {
    if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
    return v.get<int>();
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = it.key();
    const Json& v = it.value();
    guarded(errors, key, [&] {
      if (key == "schema" || key == "kind") return;
      if (key == "name") {
        if (!v.is_string()) throw ValidationError(key, "expected a string");
        p.name = v.get<std::string>();
      } else if (key == "start_clock_min") {
        p.start_clock_min = integer(v, key);
      } else if (key == "duration_h") {
        p.duration_h = integer(v, key);
      } else if (key == "bolus_policy") {
        if (!v.is_string()) throw ValidationError(key, "expected a string");
        p.policy = sim::policy_kind_from_string(v.get<std::string>());
      } else if (key == "perturbation") {
        p.perturbation = as_number(v, key);
      } else if (key == "basal_scale") {
        p.basal_scale = as_number(v, key);
      } else if (key == "cgm_noise_sd") {
        p.cgm_noise_sd = as_number(v, key);
      } else if (key == "dt_min") {
        p.dt_min = as_number(v, key);
      } else if (key == "meals") {
        if (!v.is_array()) throw ValidationError(key, "expected an array");
        for (std::size_t i = 0; i < v.size(); ++i) {
          const std::string path = "meals[" + std::to_string(i) + "]";
          const Json& m = v[i];
          sim::MealSlot s;
          s.day = integer(require(m, "day", path), child(path, "day"));
          s.clock_lo_min = integer(require(m, "clock_lo_min", path), child(path, "clock_lo_min"));
          s.clock_hi_min = m.contains("clock_hi_min")
                               ? integer(m.at("clock_hi_min"), child(path, "clock_hi_min"))
                               : s.clock_lo_min;
          s.carbs_mean = as_number(require(m, "carbs_mean", path), child(path, "carbs_mean"));
          s.carbs_sd = m.contains("carbs_sd") ? as_number(m.at("carbs_sd"), child(path, "carbs_sd")) : 0.0;
          const Json& cls = require(m, "meal_class", path);
          if (!cls.is_string()) throw ValidationError(child(path, "meal_class"), "expected a string");
          s.meal_class = pg::meal_class_from_string(cls.get<std::string>());
          if (m.contains("announced")) {
            if (!m.at("announced").is_boolean())
              throw ValidationError(child(path, "announced"), "expected a boolean");
            s.announced = m.at("announced").get<bool>();
          }
          p.meals.push_back(s);
        }
      } else {
        throw ValidationError(key, "unknown field");
      }
    });
  }
  guarded(errors, "protocol", [&] { p.validate(); });
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return p;
}

// --- files ----------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

// --- CSV ------------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw ValidationError("csv", "row has " + std::to_string(cells.size()) + " cells, header has " +
                                         std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw ValidationError("csv", "missing header row");
  return t;
}

std::string samples_to_csv(const std::vector<pg::PgTrainingSample>& samples) {
  std::string out = "meal_class";
  for (int i = 1; i <= pg::kWindow; ++i) out += ",pre_" + std::to_string(i);
  out += ",u,d";
  for (int i = 1; i <= pg::kHorizon; ++i) out += ",post_" + std::to_string(i);
  out += "\n";
  for (const auto& s : samples) {
    out += pg::to_string(s.meal_class);
    for (double g : s.preprandial) out += "," + format_double(g);
    out += "," + format_double(s.bolus) + "," + format_double(s.carbs);
    for (double g : s.postprandial) out += "," + format_double(g);
    out += "\n";
  }
  return out;
}

std::vector<pg::PgTrainingSample> samples_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.header.size() != 1 + kW + 2 + kH || t.column("meal_class") != 0 ||
      t.column("u") < 0 || t.column("d") < 0)
    throw ValidationError("samples", "expected columns meal_class, pre_1..pre_8, u, d, post_1..post_8");
  std::vector<pg::PgTrainingSample> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string at = "samples row " + std::to_string(r + 1);
    pg::PgTrainingSample s;
    try {
      s.meal_class = pg::meal_class_from_string(row[0]);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(at, e.what());
    }
    for (std::size_t i = 0; i < kW; ++i) s.preprandial[i] = parse_number(row[1 + i], at);
    s.bolus = parse_number(row[1 + kW], at);
    s.carbs = parse_number(row[2 + kW], at);
    for (std::size_t i = 0; i < kH; ++i)
      s.postprandial[i] = parse_number(row[3 + kW + i], at);
    out.push_back(s);
  }
  return out;
}

std::string cgm_to_csv(const pg::GlucoseTrace& trace) {
  std::string out = "timestamp,glucose\n";
  for (const auto& s : trace.samples) out += format_iso8601(s.time_s) + "," + format_double(s.glucose) + "\n";
  return out;
}

std::string meals_to_csv(const std::vector<pg::MealEvent>& meals,
                         const std::vector<double>& perturbation_factors) {
  std::string out = "time,grams,clinician_bolus,meal_class,perturbation\n";
  for (std::size_t i = 0; i < meals.size(); ++i) {
    const auto& m = meals[i];
    const double f = i < perturbation_factors.size() ? perturbation_factors[i] : 1.0;
    out += format_iso8601(m.time_s) + "," + format_double(m.carbs) + "," + format_double(m.bolus) + "," +
           pg::to_string(m.meal_class) + "," + format_double(f) + "\n";
  }
  return out;
}

std::string trace_to_csv(const std::vector<bo::TraceEntry>& trace) {
  std::string out = "iteration,u,cost,ei\n";
  for (const auto& t : trace)
    out += std::to_string(t.iteration) + "," + format_double(t.u) + "," + format_double(t.cost) + "," +
           (std::isfinite(t.ei) ? format_double(t.ei) : std::string()) + "\n";
  return out;
}

// --- time -----------------------------------------------------------------

std::int64_t parse_iso8601(const std::string& raw) {
  const std::string s = trim(raw);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char tail = 0;
  const int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%*1[T ]%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail);
  bool ok = n >= 6 && (n == 6 || tail == 'Z');
  if (!ok) {
    sec = 0;
    tail = 0;
    const int m = std::sscanf(s.c_str(), "%4d-%2d-%2d%*1[T ]%2d:%2d%c", &y, &mo, &d, &h, &mi, &tail);
    ok = m >= 5 && (m == 5 || tail == 'Z');
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59)
    throw ValidationError("timestamp", "not an ISO-8601 time: '" + s + "'");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_iso8601(std::int64_t seconds) {
  using namespace std::chrono;
  const std::int64_t day_index = seconds >= 0 ? seconds / 86400 : -((-seconds + 86399) / 86400);
  const std::int64_t rem = seconds - day_index * 86400;
  const year_month_day ymd{sys_days{days{day_index}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
  return buf;
}

}  // namespace gpbolus::io
