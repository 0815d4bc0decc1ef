// Shared, lazily built predictors trained on a simulated collection week.
#pragma once

#include "gpbolus/app.hpp"
#include "gpbolus/insilico.hpp"
#include "gpbolus/pg_model.hpp"

#include <map>
#include <utility>

namespace fixture {

inline const gpbolus::sim::CohortPatient& patient(int index = 0) {
  static const auto cohort = gpbolus::sim::generate_cohort(gpbolus::app::kCohortSeed);
  return cohort.at(static_cast<std::size_t>(index));
}

inline const std::vector<gpbolus::pg::PgTrainingSample>& samples(int index = 0) {
  static std::map<int, std::vector<gpbolus::pg::PgTrainingSample>> cache;
  auto it = cache.find(index);
  if (it == cache.end()) {
    const auto& p = patient(index);
    auto c = gpbolus::sim::run_data_collection(p, gpbolus::app::patient_seeds(7, p.id).collect);
    it = cache.emplace(index, std::move(c.serialized.samples)).first;
  }
  return it->second;
}

inline const gpbolus::app::PatientModels& models(bool meal_aware, int index = 0) {
  static std::map<std::pair<bool, int>, gpbolus::app::PatientModels> cache;
  const auto key = std::make_pair(meal_aware, index);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, gpbolus::app::train_models(samples(index), meal_aware, {})).first;
  return it->second;
}

inline const gpbolus::pg::PgPredictor& predictor(bool meal_aware,
                                                 gpbolus::pg::MealClass c = gpbolus::pg::MealClass::breakfast,
                                                 int index = 0) {
  return models(meal_aware, index).for_class(c);
}

}  // namespace fixture
