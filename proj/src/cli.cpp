#include "gpbolus/cli.hpp"

#include "gpbolus/app.hpp"
#include "gpbolus/service.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <sstream>

namespace gpbolus::app {

namespace {

using io::ValidationError;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

AppConfig load_config(const Globals& g) {
  AppConfig config;
  if (!g.config_path.empty()) {
    try {
      config = load_app_config(g.config_path);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ValidationError("config", e.what());
    }
  }
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

std::vector<pg::PgPredictor> load_models(const std::vector<std::string>& paths) {
  std::vector<pg::PgPredictor> models;
  for (const auto& p : paths) models.push_back(io::predictor_from_json(io::read_json_file(p)));
  return models;
}

pg::Window parse_window(const std::vector<std::string>& raw) {
  std::vector<double> values;
  for (const auto& item : raw) {
    std::istringstream in(item);
    std::string cell;
    while (std::getline(in, cell, ',')) {
      if (cell.empty()) continue;
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ValidationError("window", "not a number: '" + cell + "'");
      }
    }
  }
  if (values.size() != pg::kWindow)
    throw ValidationError("window", "expected " + std::to_string(pg::kWindow) + " glucose readings, got " +
                                        std::to_string(values.size()));
  pg::Window w{};
  std::copy(values.begin(), values.end(), w.begin());
  return w;
}

std::vector<advisor::DoseRecord> parse_doses(const std::vector<std::string>& raw, std::int64_t now) {
  std::vector<advisor::DoseRecord> out;
  for (const auto& item : raw) {
    const auto colon = item.find(':');
    double ago = 0.0, units = 0.0;
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      ago = std::stod(item.substr(0, colon));
      units = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("dose", "expected MINUTES_AGO:UNITS, got '" + item + "'");
    }
    if (!(ago >= 0.0) || !(units >= 0.0)) throw ValidationError("dose", "minutes and units must be >= 0");
    out.push_back({now - static_cast<std::int64_t>(std::llround(ago * 60.0)), units});
  }
  return out;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Meal-bolus advisor: GP glucose prediction with risk-sensitive Bayesian optimization"};
  cli.require_subcommand(1);
  Globals g;
  cli.add_option("--config", g.config_path, "Configuration file (JSON, schema v1)");
  cli.add_option("--seed", g.seed, "Master seed; overrides the configuration");
  cli.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::vector<std::string> patients;
  std::string protocol_name = "A";
  double basal_scale = 1.0;
  std::string policy = "both";

  auto* collect = cli.add_subcommand("collect", "Run the data-collection week and write training samples");
  collect->add_option("--patient", patients, "Patient id (repeatable; default all)");

  std::string samples_path, meal_class_name, model_path;
  bool meal_free = false;
  auto* train = cli.add_subcommand("train", "Fit a predictor from a samples file");
  train->add_option("--samples", samples_path, "Samples CSV from collect")->required();
  train->add_option("--meal-class", meal_class_name, "breakfast or lunch_dinner")->required();
  train->add_flag("--meal-free", meal_free, "Train without the carbohydrate input");
  train->add_option("--model", model_path, "Output model file (default <out>/<class>.model)");

  std::string sim_patient = "vp01";
  std::string sim_policy = "calculator";
  auto* simulate = cli.add_subcommand("simulate", "Run one patient through Protocol A or B");
  simulate->add_option("--patient", sim_patient, "Patient id")->capture_default_str();
  simulate->add_option("--protocol", protocol_name, "A, B or a protocol file")->capture_default_str();
  simulate->add_option("--basal-scale", basal_scale, "Delivered fraction of the nominal basal")->capture_default_str();
  simulate->add_option("--policy", sim_policy, "calculator, proposed or proposed-nm")->capture_default_str();

  auto* evaluate_cmd = cli.add_subcommand("evaluate", "Cohort metrics and comparison table");
  evaluate_cmd->add_option("--protocol", protocol_name, "A, B or a protocol file")->capture_default_str();
  evaluate_cmd->add_option("--basal-scale", basal_scale, "Delivered fraction of the nominal basal")
      ->capture_default_str();
  evaluate_cmd->add_option("--policy", policy, "calculator, proposed, proposed-nm, both or all")
      ->capture_default_str();
  evaluate_cmd->add_option("--patient", patients, "Patient id (repeatable; default all)");

  std::vector<std::string> window_args, dose_args, model_paths;
  std::optional<double> carbs;
  auto* recommend = cli.add_subcommand("recommend", "One recommendation from a glucose window");
  recommend->add_option("--model", model_path, "Predictor file")->required();
  recommend->add_option("--window", window_args, "8 readings, oldest first (comma or space separated)")
      ->required();
  recommend->add_option("--carbs", carbs, "Meal carbohydrate (g); meal-aware models only");
  recommend->add_option("--dose", dose_args, "Earlier bolus as MINUTES_AGO:UNITS (repeatable)");

  std::string trace_path, meals_path;
  auto* replay_cmd = cli.add_subcommand("replay", "Advisory replay over a clinical trace");
  replay_cmd->add_option("--trace", trace_path, "CSV with timestamp, glucose")->required();
  replay_cmd->add_option("--meals", meals_path, "CSV with time, grams, clinician_bolus (default <trace>.meals.csv)");
  replay_cmd->add_option("--model", model_paths, "Predictor file (repeatable, one per meal class)")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = cli.add_subcommand("serve", "Start the HTTP service");
  serve_cmd->add_option("--model", model_paths, "Predictor file (repeatable, one per meal class)")->required();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    cli.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << cli.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << cli.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const AppConfig config = load_config(g);
    const std::filesystem::path out_dir = g.out;

    if (collect->parsed()) {
      auto cohort = load_cohort(config);
      for (const auto& p : cohort) {
        if (!patients.empty() && std::find(patients.begin(), patients.end(), p.id) == patients.end()) continue;
        const auto c = sim::run_data_collection(p, patient_seeds(config.seed, p.id).collect, config.advisor.iob);
        const auto dir = out_dir / p.id;
        io::write_text_file(dir / "samples.csv", io::samples_to_csv(c.serialized.samples));
        io::write_text_file(dir / "cgm.csv", io::cgm_to_csv(c.simulation.cgm));
        io::write_text_file(dir / "meals.csv", io::meals_to_csv(c.simulation.meals, c.simulation.perturbation_factors));
        int breakfast = 0;
        for (const auto& s : c.serialized.samples) breakfast += s.meal_class == pg::MealClass::breakfast;
        out << p.id << ": " << breakfast << " breakfast, " << c.serialized.samples.size() - breakfast
            << " lunch_dinner samples, " << c.serialized.skipped.size() << " skipped -> " << dir.string() << "\n";
      }
    } else if (train->parsed()) {
      pg::MealClass cls;
      try {
        cls = pg::meal_class_from_string(meal_class_name);
      } catch (const std::invalid_argument& e) {
        throw ValidationError("meal-class", e.what());
      }
      std::vector<pg::PgTrainingSample> selected;
      for (const auto& s : io::samples_from_csv(io::read_text_file(samples_path)))
        if (s.meal_class == cls) selected.push_back(s);
      const auto predictor = pg::train_pg_model(selected, !meal_free, config.training);
      if (model_path.empty())
        model_path = (out_dir / (pg::to_string(cls) + (meal_free ? "-nm" : "") + ".model")).string();
      io::write_text_file(model_path, io::to_json(predictor).dump() + "\n");
      out << "trained " << (meal_free ? "meal-free " : "meal-aware ") << pg::to_string(cls) << " predictor on "
          << selected.size() << " samples -> " << model_path << "\n";
    } else if (simulate->parsed()) {
      EvaluateOptions opts;
      opts.protocol = resolve_protocol(protocol_name, basal_scale);
      opts.policies = policies_from_string(sim_policy);
      if (opts.policies.size() != 1) throw ValidationError("policy", "simulate runs one policy");
      opts.patients = {sim_patient};
      const auto e = evaluate(config, load_cohort(config), opts, config.seed);
      const auto& run = e.runs.front();
      io::write_text_file(out_dir / "cgm.csv", io::cgm_to_csv(run.simulation.cgm));
      io::write_text_file(out_dir / "meals.csv",
                          io::meals_to_csv(run.simulation.meals, run.simulation.perturbation_factors));
      io::write_text_file(out_dir / "metrics.json", to_json(run.metrics).dump(2) + "\n");
      out << comparison_table(e);
    } else if (evaluate_cmd->parsed()) {
      EvaluateOptions opts;
      opts.protocol = resolve_protocol(protocol_name, basal_scale);
      opts.policies = policies_from_string(policy);
      opts.patients = patients;
      const auto e = evaluate(config, load_cohort(config), opts, config.seed);
      write_evaluation(e, config, out_dir);
      out << comparison_table(e);
    } else if (recommend->parsed()) {
      const auto window = parse_window(window_args);
      const auto predictor = io::predictor_from_json(io::read_json_file(model_path));
      constexpr std::int64_t now = 0;
      const auto rec = advisor::recommend_bolus(predictor, window, carbs, config.advisor,
                                                parse_doses(dose_args, now), now, config.seed);
      auto doc = io::to_json(rec);
      doc["schema"] = io::kSchema;
      doc["kind"] = "recommendation";
      io::write_text_file(out_dir / "recommendation.json", doc.dump(2) + "\n");
      out << "raw " << io::format_double(rec.raw_bolus) << " U, iob " << io::format_double(rec.iob)
          << " U, final " << io::format_double(rec.final_bolus) << " U\n";
    } else if (replay_cmd->parsed()) {
      if (meals_path.empty()) {
        std::filesystem::path t = trace_path;
        meals_path = (t.parent_path() / (t.stem().string() + ".meals.csv")).string();
      }
      const auto report = replay(read_clinical_trace(io::read_text_file(trace_path)),
                                 read_clinical_meals(io::read_text_file(meals_path)), load_models(model_paths),
                                 config, config.seed);
      io::write_text_file(out_dir / "replay.csv", replay_to_csv(report));
      io::write_text_file(out_dir / "replay.json", to_json(report).dump(2) + "\n");
      out << replay_table(report);
    } else if (serve_cmd->parsed()) {
      Service service(config, load_models(model_paths));
      out << "serving on http://" << host << ":" << port << std::endl;
      serve(service, host, port);
    }
    return kExitOk;
  } catch (const pg::MealAwarenessError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ValidationError& e) {
    for (const auto& f : e.errors()) err << "error: " << (f.field.empty() ? "" : f.field + ": ") << f.message << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace gpbolus::app
