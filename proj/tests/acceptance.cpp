// Acceptance run: one PASS/FAIL line per primary criterion.
#include "gpbolus/app.hpp"
#include "gpbolus/ars_cost.hpp"
#include "gpbolus/bo.hpp"
#include "gpbolus/cli.hpp"
#include "gpbolus/gp.hpp"
#include "gpbolus/insilico.hpp"
#include "gpbolus/io.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace gpbolus;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string title;
  std::string detail;
};

std::string num(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Fits gathered across the run for the NLML check.
std::vector<gp::FitReport> g_fits;

void keep_fits(const std::vector<gp::FitReport>& r) { g_fits.insert(g_fits.end(), r.begin(), r.end()); }

std::vector<sim::CohortPatient> cohort() {
  const fs::path shipped = fs::path(GPBOLUS_DATA_DIR) / "cohort.json";
  if (fs::exists(shipped)) return io::cohort_from_json(io::read_json_file(shipped));
  return sim::generate_cohort(app::kCohortSeed);
}

// --- 1 ----------------------------------------------------------------------

Outcome gp_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::uniform_int_distribution<int> n_dist(1, 10), d_dist(1, 10);
  double worst_mean = 0.0, worst_var = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_dist(rng), dim = d_dist(rng);
    const auto d = oracle::random_dataset(rng, n, dim);
    const auto p = oracle::random_params(rng, dim);
    gp::LinearMean mean;
    if (trial % 2 == 1) {
      mean.mode = gp::MeanMode::linear;
      mean.slope.resize(dim);
      for (int j = 0; j < dim; ++j) mean.slope[j] = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
      mean.intercept = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    }
    const gp::TrainedGp g(p, mean, d);
    for (int q = 0; q < 5; ++q) {
      const auto x = oracle::random_point(rng, dim);
      const auto got = g.predict(x);
      const auto want = oracle::explicit_predict(d, p, mean, g.jitter(), x);
      worst_mean = std::max(worst_mean, std::abs(got.mean - want.mean) / std::max(std::abs(want.mean), 1e-300));
      worst_var = std::max(worst_var, std::abs(got.variance - want.variance) / want.variance);
    }
  }
  const double t = seconds_since(t0);
  return {worst_mean <= 1e-8 && worst_var <= 1e-8 && t < 5.0, "GP posterior vs explicit-inverse oracle",
          "50 datasets x 5 points; max rel err mean " + num(worst_mean) + ", variance " + num(worst_var) + "; " +
              num(t) + " s"};
}

// --- 2 ----------------------------------------------------------------------

gp::KernelParams iso(Eigen::Index d, double sf2, double ell, double noise) {
  gp::KernelParams p;
  p.signal_variance = sf2;
  p.length_scales = Eigen::VectorXd::Constant(d, ell);
  p.noise_variance = noise;
  return p;
}

Outcome nlml_sanity(const std::vector<sim::CohortPatient>& patients) {
  Rng rng(202);
  std::uniform_int_distribution<int> n_dist(2, 10), d_dist(1, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_dist(rng), dim = d_dist(rng);
    const auto d = oracle::random_dataset(rng, n, dim);
    const auto init = oracle::random_params(rng, dim);
    for (auto mode : {gp::MeanMode::zero, gp::MeanMode::linear})
      g_fits.push_back(gp::fit_hyperparams_detailed(d, init, mode).report);
  }
  int recovered = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng r(seed);
    const auto truth = iso(1, 1.0, 1.5, 1e-4);  // noise sd 0.01
    const auto d = oracle::sample_gp(r, truth, 40, 0.0, 10.0);
    const auto fit = gp::fit_hyperparams_detailed(d, iso(1, 0.5, 1.0, 1e-2), gp::MeanMode::zero);
    g_fits.push_back(fit.report);
    const double ratio = fit.gp.params().noise_variance / truth.noise_variance;
    if (ratio > 0.1 && ratio < 10.0) ++recovered;
  }
  for (const auto& p : patients) {
    const auto samples = sim::run_data_collection(p, app::patient_seeds(7, p.id).collect).serialized.samples;
    for (bool aware : {true, false}) {
      std::vector<gp::FitReport> reports;
      app::train_models(samples, aware, {}, &reports);
      keep_fits(reports);
    }
  }
  int worse = 0;
  for (const auto& f : g_fits)
    if (!(f.final_objective <= f.initial_objective)) ++worse;
  return {worse == 0 && recovered >= 9, "NLML never above its starting value; noise recovery",
          std::to_string(g_fits.size()) + " fits, " + std::to_string(worse) + " above start; noise recovered on " +
              std::to_string(recovered) + "/10 seeds"};
}

// --- 3 ----------------------------------------------------------------------

Outcome ars_oracle() {
  const auto t0 = Clock::now();
  Rng cfg_rng(303);
  std::uniform_real_distribution<double> q_dist(0.005, 0.02), dev_dist(-40.0, 40.0), frac(0.2, 1.0);
  int within = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    cost::Trajectory q{}, r{};
    pg::PredictedTrajectory t;
    double closed = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      q[i] = q_dist(cfg_rng);
      r[i] = 140.0;
      t.means[i] = r[i] + dev_dist(cfg_rng);
      t.variances[i] = frac(cfg_rng) * 0.05 / q[i];
      closed += oracle::log_quad_exp(q[i], t.means[i], std::sqrt(t.variances[i]), r[i]);
    }
    Rng rng(derive_seed(303, static_cast<std::uint64_t>(trial)));
    const auto est = cost::estimate_risk_sensitive(
        t, -2.0, 1000000,
        [&](const cost::Trajectory& g) {
          double s = 0.0;
          for (std::size_t i = 0; i < 8; ++i) s += q[i] * (g[i] - r[i]) * (g[i] - r[i]);
          return s;
        },
        rng);
    const double z = std::abs(est.value - closed) / est.mc_std_error;
    worst = std::max(worst, z);
    if (z <= 3.0) ++within;
  }
  const cost::CostConfig cfg;
  bool finite = true, naive_overflows = true;
  for (double dev : {400.0, -400.0}) {
    pg::PredictedTrajectory t;
    for (std::size_t i = 0; i < 8; ++i) t.means[i] = cfg.target[i] + dev;
    t.variances.fill(400.0);
    Rng rng(1);
    finite = finite && std::isfinite(cost::estimate_ars_cost(t, cfg, rng).value);
    naive_overflows = naive_overflows && std::isinf(std::exp(cost::sample_exponent(t.means, cfg)));
  }
  return {within == 20 && finite && naive_overflows, "ARS cost vs closed form; no overflow at 400 mg/dL",
          std::to_string(within) + "/20 within 3 SE (worst " + num(worst) + " SE, 1e6 samples); +-400 finite: " +
              (finite ? "yes" : "no") + "; " + num(seconds_since(t0)) + " s"};
}

// --- 4 ----------------------------------------------------------------------

Outcome q_minus_schedule() {
  const cost::GammaQuad quad;
  const double at10 = cost::q_minus_weight(1.0, 10.0, quad);
  bool above_one = true, at_most_six = true, monotone = true, gap_positive = true;
  double saturated_from = -1.0, first_tie = -1.0, previous = 0.0;
  for (int k = 0; k <= 5000; ++k) {
    const double dev = 0.1 * k;
    const double r = cost::q_minus_weight(1.0, dev, quad);
    above_one = above_one && r > 1.0;
    at_most_six = at_most_six && r <= 6.0;
    if (k > 0) {
      // strictly increasing until the increments drop below one ulp
      monotone = monotone && r >= previous && (dev > 30.0 || r > previous);
      if (r == previous && first_tie < 0.0) first_tie = dev;
    }
    if (r == 6.0) {
      if (saturated_from < 0.0) saturated_from = dev;
      // the exact distance to the bound, c1 e / (1 + e), stays positive
      const double e = std::exp(quad.alpha * (quad.beta - dev));
      gap_positive = gap_positive && quad.c1 * e / (1.0 + e) > 0.0;
    }
    previous = r;
  }
  std::string detail = "ratio(10) = " + io::format_double(at10) + "; in (1, 6] on [0, 500]: " +
                       (above_one && at_most_six ? "yes" : "no") + "; increasing: " + (monotone ? "yes" : "no");
  if (first_tie >= 0.0) detail += " (ties below one ulp from deviation " + num(first_tie) + ")";
  if (saturated_from >= 0.0)
    detail += "; rounds to 6 from deviation " + num(saturated_from) + " (exact gap > 0: " +
              (gap_positive ? "yes" : "no") + ")";
  return {at10 == 3.5 && above_one && at_most_six && monotone && gap_positive, "Q- schedule", detail};
}

// --- 5 ----------------------------------------------------------------------

Outcome ei_oracle() {
  Rng rng(505);
  std::uniform_real_distribution<double> m(-5.0, 5.0), s(0.05, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mean = m(rng), sd = s(rng), best = m(rng);
    const double want = oracle::ei_quadrature(mean, sd, best);
    worst = std::max(worst, std::abs(bo::expected_improvement(mean, sd, best) - want) / std::max(want, 1e-300));
  }
  const bool zero = bo::expected_improvement(1.0, 0.0, 5.0) == 0.0 && bo::expected_improvement(7.0, 0.0, 5.0) == 0.0;
  return {worst <= 1e-6 && zero, "EI vs quadrature; EI(sd = 0) = 0",
          "100 triples, max rel err " + num(worst) + " (Simpson below the kink); zero-sd EI is 0: " +
              (zero ? "yes" : "no")};
}

// --- 6 ----------------------------------------------------------------------

double dense_argmin(const std::function<double(double)>& f) {
  double best_u = 0.0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 150000; ++i) {
    const double u = 15.0 * i / 150000.0;
    if (const double v = f(u); v < best) best = v, best_u = u;
  }
  return best_u;
}

Outcome bo_convergence() {
  const auto t0 = Clock::now();
  int quad_hits = 0, basin_hits = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    // seeds vary the affine scale and offset, and the two-basin geometry
    Rng rng(derive_seed(606, run));
    const double a = std::exp(std::uniform_real_distribution<double>(std::log(0.01), std::log(100.0))(rng));
    const double b = a * std::uniform_real_distribution<double>(-40.0, 40.0)(rng);
    const auto quad = [a, b](double u) { return a * (u - 6.0) * (u - 6.0) + b; };
    const auto rq = bo::optimize_bolus(quad, 15.0);
    keep_fits(rq.fits);
    if (std::abs(rq.u_best - 6.0) <= 0.1) ++quad_hits;

    std::uniform_real_distribution<double> c1(2.0, 5.0), c2(9.5, 13.0), w(0.8, 1.5), gap(0.25, 0.6);
    const double m1 = c1(rng), m2 = c2(rng), w1 = w(rng), w2 = w(rng);
    double d1 = 1.0, d2 = 1.0 + gap(rng);
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(d1, d2);
    const auto basins = [=](double u) {
      return a * (-d1 * std::exp(-0.5 * (u - m1) * (u - m1) / (w1 * w1)) -
                  d2 * std::exp(-0.5 * (u - m2) * (u - m2) / (w2 * w2))) +
             b;
    };
    const double target = dense_argmin(basins);
    const auto rb = bo::optimize_bolus(basins, 15.0);
    keep_fits(rb.fits);
    if (std::abs(rb.u_best - target) <= 0.1) ++basin_hits;
  }
  const double t = seconds_since(t0);
  return {quad_hits >= 95 && basin_hits >= 95 && t < 30.0, "BO convergence, 8 + 25 evaluations",
          "(u-6)^2: " + std::to_string(quad_hits) + "/100, two-basin: " + std::to_string(basin_hits) +
              "/100 within 0.1; " + num(t) + " s"};
}

// --- 7 ----------------------------------------------------------------------

Outcome closed_loop(const std::vector<sim::CohortPatient>& patients) {
  const auto t0 = Clock::now();
  const app::AppConfig config;
  app::EvaluateOptions opts;
  opts.protocol = sim::protocol_a();
  opts.policies = {app::EvalPolicy::calculator, app::EvalPolicy::proposed};
  const auto e = app::evaluate(config, patients, opts, 7);
  const double t = seconds_since(t0);
  std::map<std::string, std::map<app::EvalPolicy, sim::MetricsReport>> by;
  for (const auto& r : e.runs) by[r.patient][r.policy] = r.metrics;
  std::string hypo, tir;
  double worst_gap = 0.0;
  for (const auto& [id, m] : by) {
    const auto& p = m.at(app::EvalPolicy::proposed);
    const auto& c = m.at(app::EvalPolicy::calculator);
    if (p.pct_below_54 != 0.0) hypo += " " + id;
    const double gap = p.pct_in_70_180 - c.pct_in_70_180;
    if (std::abs(gap) > std::abs(worst_gap)) worst_gap = gap;
    if (std::abs(gap) > 10.0)
      tir += " " + id + "(" + num(c.pct_in_70_180) + "->" + num(p.pct_in_70_180) + ")";
  }
  const bool a = hypo.empty(), b = tir.empty(), c = t < 600.0;
  return {a && b && c, "closed loop, Protocol A, 10 patients, seed 7",
          std::string("(a) <54 = 0%: ") + (a ? "yes" : "no," + hypo) + "; (b) TIR within 10 pts: " +
              (b ? "yes" : "no," + tir) + " (largest gap " + num(worst_gap) + "); (c) " + num(t) + " s"};
}

// --- 8 ----------------------------------------------------------------------

Outcome basal_mismatch(const std::vector<sim::CohortPatient>& patients) {
  const app::AppConfig config;
  std::map<double, double> mean_first;
  for (double scale : {0.8, 1.0, 1.1}) {
    app::EvaluateOptions opts;
    opts.protocol = sim::protocol_b(scale);
    opts.policies = {app::EvalPolicy::proposed};
    const auto e = app::evaluate(config, patients, opts, 7);
    double sum = 0.0;
    for (const auto& r : e.runs) sum += r.simulation.doses.at(0).units;
    mean_first[scale] = sum / static_cast<double>(e.runs.size());
  }
  const bool pass = mean_first[0.8] > mean_first[1.0] && !(mean_first[1.1] > mean_first[1.0]);
  return {pass, "first-meal bolus follows basal mismatch, Protocol B",
          "mean first bolus (U): 0.8 -> " + num(mean_first[0.8], 4) + ", 1.0 -> " + num(mean_first[1.0], 4) +
              ", 1.1 -> " + num(mean_first[1.1], 4)};
}

// --- 9 ----------------------------------------------------------------------

Outcome iob_safety(const std::vector<sim::CohortPatient>& patients) {
  const app::AppConfig config;
  int checked = 0, violations = 0, nonzero = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& p : patients) {
    const auto samples = sim::run_data_collection(p, app::patient_seeds(7, p.id).collect).serialized.samples;
    const auto models = app::train_models(samples, true, config.training);
    for (auto cls : {pg::MealClass::breakfast, pg::MealClass::lunch_dinner}) {
      for (double g : {110.0, 190.0}) {
        pg::Window w{};
        w.fill(g);
        const double carbs = cls == pg::MealClass::breakfast ? 50.0 : 75.0;
        const auto seed = derive_seed(909, static_cast<std::uint64_t>(checked));
        const auto first =
            advisor::recommend_bolus(models.for_class(cls), w, carbs, config.advisor, {}, 0, seed);
        const double b = first.final_bolus;
        const auto second =
            advisor::recommend_bolus(models.for_class(cls), w, carbs, config.advisor, {{0, b}}, 600, seed);
        const double bound = std::max(0.0, first.final_bolus - 0.9 * b);
        worst = std::max(worst, second.final_bolus - bound);
        if (second.final_bolus > bound) ++violations;
        if (b > 0.0) ++nonzero;
        ++checked;
      }
    }
  }
  return {violations == 0, "IOB safety, second request 10 min after bolus b",
          std::to_string(checked) + " requests (" + std::to_string(nonzero) + " with b > 0), " +
              std::to_string(violations) + " above max(0, first - 0.9 b); largest excess " + num(worst)};
}

// --- 10 ---------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = io::read_text_file(e.path());
  return files;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "gpbolus_acceptance";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> outs;
  int code = 0;
  for (const char* name : {"first", "second"}) {
    std::ostringstream out, err;
    code |= app::cli_dispatch({"gpbolus", "--seed", "7", "--out", (root / name).string(), "evaluate"}, out, err);
    outs.push_back(snapshot(root / name));
  }
  std::string differing;
  for (const auto& [name, text] : outs[0]) {
    const auto it = outs[1].find(name);
    if (it == outs[1].end() || it->second != text) differing += " " + name;
  }
  const bool same = code == 0 && !outs[0].empty() && outs[0].size() == outs[1].size() && differing.empty();
  fs::remove_all(root);
  return {same, "evaluate --seed 7 twice, byte-identical",
          std::to_string(outs[0].size()) + " files compared" + (differing.empty() ? "" : "; differ:" + differing) +
              (code ? "; non-zero exit" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Acceptance criteria for the bolus engine"};
  std::vector<int> known;
  std::vector<int> only;
  cli.add_option("--known-failures", known, "Criteria documented as failing; they do not fail the run");
  cli.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(cli, argc, argv);
  const auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const auto patients = cohort();
  std::map<int, Outcome> results;
  // 2 reads the fits collected by 6, so 6 runs first
  const std::vector<std::pair<int, std::function<Outcome()>>> order{
      {1, gp_oracle},
      {3, ars_oracle},
      {4, q_minus_schedule},
      {5, ei_oracle},
      {6, bo_convergence},
      {2, [&] { return nlml_sanity(patients); }},
      {9, [&] { return iob_safety(patients); }},
      {8, [&] { return basal_mismatch(patients); }},
      {7, [&] { return closed_loop(patients); }},
      {10, determinism},
  };
  for (const auto& [id, run] : order) {
    if (!wanted(id)) continue;
    std::cerr << "running criterion " << id << "...\n";
    try {
      results[id] = run();
    } catch (const std::exception& e) {
      results[id] = {false, "criterion " + std::to_string(id), std::string("error: ") + e.what()};
    }
  }

  int unexpected = 0;
  for (const auto& [id, r] : results) {
    const bool is_known = std::find(known.begin(), known.end(), id) != known.end();
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << id << ". " << r.title << ": " << r.detail;
    if (!r.pass && is_known) std::cout << " [known failure]";
    if (r.pass && is_known) std::cout << " [listed as known failure but passed]";
    std::cout << "\n";
    if (r.pass == is_known) ++unexpected;
  }
  const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return unexpected == 0 ? 0 : 1;
}
