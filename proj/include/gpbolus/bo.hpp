#pragma once

#include "gpbolus/gp.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gpbolus::bo {

struct Observation {
  double u = 0.0;
  double cost = 0.0;
};

/// One objective evaluation. `ei` is the acquisition value that selected the
/// point (NaN for the initial design).
struct TraceEntry {
  int iteration = 0;  // 0 for the initial design, 1..M afterwards
  double u = 0.0;
  double cost = 0.0;
  double ei = 0.0;
};

struct BoOptions {
  int initial_points = 8;
  int iterations = 25;  // M
  int grid_size = 512;
  gp::FitOptions fit = default_fit();

  static gp::FitOptions default_fit() {
    gp::FitOptions f;
    f.max_evaluations = 400;
    f.tolerance = 1e-7;
    return f;
  }
};

/// Surrogate inputs live in [0, 1] (scaled bolus); surrogate outputs are
/// standardized costs. The surrogate itself keeps a zero prior mean.
struct BoState {
  double lower = 0.0;
  double upper = 1.0;
  std::vector<Observation> observations;
  std::optional<gp::TrainedGp> surrogate;
  double output_offset = 0.0;
  double output_scale = 1.0;
  int iteration = 0;
  Observation best{0.0, std::numeric_limits<double>::infinity()};
  int last_grid_index = -1;

  double to_unit(double u) const { return (u - lower) / (upper - lower); }
  double from_unit(double x) const { return lower + x * (upper - lower); }
  void append(const Observation& obs);
};

std::vector<double> init_design(double lower, double upper, int n = 8);

/// Closed-form expected improvement below `best` for a Normal(mean, sd^2)
/// prediction; zero when sd == 0.
double expected_improvement(double mean, double sd, double best);

/// EI of the surrogate at a surrogate-space input (scaled bolus) against a
/// surrogate-space incumbent cost.
double expected_improvement(const gp::TrainedGp& surrogate, double x_star, double best_cost);

struct Proposal {
  double u = 0.0;
  double ei = 0.0;
  int grid_index = 0;
};

/// Grid argmax of EI (ties to the smallest u). A repeat of the previous grid
/// point is replaced by its better-EI neighbour.
Proposal propose_next(const BoState& state, int grid_size);

/// Refits the surrogate on the current observations (warm-started from the
/// previous fit when available).
gp::FitReport refit_surrogate(BoState& state, const gp::FitOptions& fit);

struct BoResult {
  double u_best = 0.0;
  double cost_best = 0.0;
  std::vector<TraceEntry> trace;
  std::vector<gp::FitReport> fits;  // one per surrogate refit
  bool fallback = false;  // surrogate failed; best observed so far returned
  std::string note;
};

BoResult optimize_bolus(const std::function<double(double)>& objective, double u_max,
                        const BoOptions& options = {});

}  // namespace gpbolus::bo
