#pragma once

#include "gpbolus/app.hpp"

#include <string>
#include <vector>

namespace gpbolus::app {

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// Request handlers over immutable loaded models; usable without sockets.
class Service {
 public:
  Service(AppConfig config, std::vector<pg::PgPredictor> models);

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

  /// {"window": [8], "carbs"?, "meal_class"?, "doses"?: [{"minutes_ago", "units"}], "seed"?}
  HttpResponse recommend(const std::string& body) const;
  /// {"window": [8], "u", "carbs"?, "meal_class"?}
  HttpResponse predict(const std::string& body) const;
  HttpResponse config() const;
  HttpResponse model() const;

  const AppConfig& app_config() const { return config_; }

 private:
  const pg::PgPredictor& select(const io::Json& request) const;

  AppConfig config_;
  std::vector<pg::PgPredictor> models_;
};

/// Blocks serving the v1 endpoints with permissive CORS headers.
void serve(const Service& service, const std::string& host, int port);

}  // namespace gpbolus::app
