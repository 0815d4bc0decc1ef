#include "gpbolus/service.hpp"

#include <httplib.h>

#include <cmath>
#include <stdexcept>

namespace gpbolus::app {

namespace {

using io::FieldError;
using io::Json;
using io::ValidationError;

HttpResponse json_response(int status, const Json& body) { return {status, body.dump() + "\n"}; }

HttpResponse validation_response(const ValidationError& e) {
  Json errors = Json::array();
  for (const auto& f : e.errors()) errors.push_back({{"field", f.field}, {"message", f.message}});
  return json_response(400, {{"schema", io::kSchema}, {"error", "validation"}, {"errors", errors}});
}

HttpResponse error_response(int status, const std::string& kind, const std::string& message) {
  return json_response(status, {{"schema", io::kSchema}, {"error", kind}, {"message", message}});
}

Json parse_body(const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error&) {
    throw ValidationError("body", "malformed JSON");
  }
  if (!j.is_object()) throw ValidationError("body", "expected a JSON object");
  if (j.contains("schema") && j.at("schema") != io::kSchema)
    throw ValidationError("schema", std::string("expected \"") + io::kSchema + "\"");
  return j;
}

pg::Window read_window(const Json& j, std::vector<FieldError>& errors) {
  pg::Window w{};
  if (!j.contains("window")) {
    errors.push_back({"window", "missing field"});
    return w;
  }
  const Json& v = j.at("window");
  if (!v.is_array() || v.size() != pg::kWindow) {
    errors.push_back({"window", "expected 8 glucose readings"});
    return w;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!v[i].is_number() || !(v[i].get<double>() > 0.0) || !std::isfinite(v[i].get<double>()))
      errors.push_back({"window[" + std::to_string(i) + "]", "expected a positive number"});
    else
      w[i] = v[i].get<double>();
  }
  return w;
}

std::optional<double> read_carbs(const Json& j, std::vector<FieldError>& errors) {
  if (!j.contains("carbs") || j.at("carbs").is_null()) return std::nullopt;
  const Json& v = j.at("carbs");
  if (!v.is_number() || !(v.get<double>() >= 0.0) || !std::isfinite(v.get<double>())) {
    errors.push_back({"carbs", "expected a non-negative number"});
    return std::nullopt;
  }
  return v.get<double>();
}

}  // namespace

Service::Service(AppConfig config, std::vector<pg::PgPredictor> models)
    : config_(std::move(config)), models_(std::move(models)) {
  config_.validate();
  if (models_.empty()) throw std::invalid_argument("service needs at least one model");
}

const pg::PgPredictor& Service::select(const Json& request) const {
  if (!request.contains("meal_class") || request.at("meal_class").is_null()) {
    if (models_.size() == 1) return models_.front();
    throw ValidationError("meal_class", "required when several models are loaded");
  }
  const Json& v = request.at("meal_class");
  if (!v.is_string()) throw ValidationError("meal_class", "expected a string");
  pg::MealClass cls;
  try {
    cls = pg::meal_class_from_string(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ValidationError("meal_class", e.what());
  }
  for (const auto& m : models_)
    if (m.meal_class == cls) return m;
  throw ValidationError("meal_class", "no model loaded for " + pg::to_string(cls));
}

HttpResponse Service::recommend(const std::string& body) const {
  try {
    const Json j = parse_body(body);
    std::vector<FieldError> errors;
    const pg::Window window = read_window(j, errors);
    const auto carbs = read_carbs(j, errors);
    std::vector<advisor::DoseRecord> history;
    constexpr std::int64_t now = 0;
    if (j.contains("doses")) {
      const Json& d = j.at("doses");
      if (!d.is_array()) {
        errors.push_back({"doses", "expected an array"});
      } else {
        for (std::size_t i = 0; i < d.size(); ++i) {
          const std::string at = "doses[" + std::to_string(i) + "]";
          const Json& e = d[i];
          if (!e.is_object() || !e.contains("minutes_ago") || !e.contains("units") || !e["minutes_ago"].is_number() ||
              !e["units"].is_number()) {
            errors.push_back({at, "expected {minutes_ago, units}"});
            continue;
          }
          const double ago = e["minutes_ago"].get<double>(), units = e["units"].get<double>();
          if (!(ago >= 0.0) || !std::isfinite(ago)) errors.push_back({at + ".minutes_ago", "must be >= 0"});
          if (!(units >= 0.0) || !std::isfinite(units)) errors.push_back({at + ".units", "must be >= 0"});
          if (ago >= 0.0 && units >= 0.0 && std::isfinite(ago) && std::isfinite(units))
            history.push_back({now - static_cast<std::int64_t>(std::llround(ago * 60.0)), units});
        }
      }
    }
    std::uint64_t seed = config_.seed;
    if (j.contains("seed")) {
      if (j.at("seed").is_number_integer() && (j.at("seed").is_number_unsigned() || j.at("seed").get<std::int64_t>() >= 0))
        seed = j.at("seed").get<std::uint64_t>();
      else
        errors.push_back({"seed", "expected a non-negative integer"});
    }
    const pg::PgPredictor* model = nullptr;
    try {
      model = &select(j);
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));

    const auto rec = advisor::recommend_bolus(*model, window, carbs, config_.advisor, history, now, seed);
    Json inputs = {{"window", j.at("window")},
                   {"carbs", carbs ? Json(*carbs) : Json(nullptr)},
                   {"meal_class", pg::to_string(model->meal_class)},
                   {"doses", j.contains("doses") ? j.at("doses") : Json::array()},
                   {"seed", seed}};
    Json out = io::to_json(rec);
    out["schema"] = io::kSchema;
    out["kind"] = "recommendation";
    out["inputs"] = inputs;
    return json_response(200, out);
  } catch (const ValidationError& e) {
    return validation_response(e);
  } catch (const pg::MealAwarenessError& e) {
    return error_response(409, "meal_awareness", e.what());
  } catch (const std::invalid_argument& e) {
    return validation_response(ValidationError("body", e.what()));
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse Service::predict(const std::string& body) const {
  try {
    const Json j = parse_body(body);
    std::vector<FieldError> errors;
    const pg::Window window = read_window(j, errors);
    const auto carbs = read_carbs(j, errors);
    double u = 0.0;
    if (!j.contains("u") || !j.at("u").is_number())
      errors.push_back({"u", "expected a number"});
    else if (u = j.at("u").get<double>(); !(u >= 0.0) || !(u <= config_.advisor.cost.u_max))
      errors.push_back({"u", "must be within [0, u_max]"});
    const pg::PgPredictor* model = nullptr;
    try {
      model = &select(j);
    } catch (const ValidationError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));
    const auto traj = pg::predict_trajectory(*model, window, u, carbs);
    return json_response(200, {{"schema", io::kSchema},
                               {"kind", "prediction"},
                               {"meal_class", pg::to_string(model->meal_class)},
                               {"u", u},
                               {"carbs", carbs ? Json(*carbs) : Json(nullptr)},
                               {"trajectory", io::to_json(traj)}});
  } catch (const ValidationError& e) {
    return validation_response(e);
  } catch (const pg::MealAwarenessError& e) {
    return error_response(409, "meal_awareness", e.what());
  } catch (const std::invalid_argument& e) {
    return validation_response(ValidationError("body", e.what()));
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse Service::config() const { return json_response(200, to_json(config_)); }

HttpResponse Service::model() const {
  Json models = Json::array();
  for (const auto& m : models_) {
    Json steps = Json::array();
    for (const auto& g : m.step_models) {
      Json ls = Json::array();
      for (Eigen::Index i = 0; i < g.params().length_scales.size(); ++i) ls.push_back(g.params().length_scales[i]);
      steps.push_back({{"signal_variance", g.params().signal_variance},
                       {"noise_variance", g.params().noise_variance},
                       {"length_scales", ls},
                       {"nlml", g.nlml()}});
    }
    models.push_back({{"meal_class", pg::to_string(m.meal_class)},
                      {"meal_aware", m.meal_aware},
                      {"input_dim", m.input_dim()},
                      {"training_samples", m.step_models.empty() ? 0 : m.step_models.front().data().size()},
                      {"steps", steps}});
  }
  return json_response(200, {{"schema", io::kSchema}, {"kind", "models"}, {"models", models}});
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) const {
  if (method == "POST" && path == "/recommend") return recommend(body);
  if (method == "POST" && path == "/predict") return predict(body);
  if (method == "GET" && path == "/config") return config();
  if (method == "GET" && path == "/model") return model();
  if (path == "/recommend" || path == "/predict" || path == "/config" || path == "/model")
    return error_response(405, "method_not_allowed", method + " " + path);
  return error_response(404, "not_found", path);
}

void serve(const Service& service, const std::string& host, int port) {
  httplib::Server server;
  const auto cors = [](httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
  };
  const auto route = [&service, cors](const httplib::Request& req, httplib::Response& res) {
    const auto r = service.handle(req.method, req.path, req.body);
    cors(res);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get("/config", route);
  server.Get("/model", route);
  server.Post("/recommend", route);
  server.Post("/predict", route);
  server.Options(".*", [cors](const httplib::Request&, httplib::Response& res) {
    cors(res);
    res.status = 204;
  });
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace gpbolus::app
