#include "gpbolus/gp.hpp"

#include "gpbolus/detail/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace gpbolus::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

Eigen::MatrixXd gram(const Eigen::MatrixXd& x, const KernelParams& p) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd scaled = x.array().rowwise() / p.length_scales.transpose().array();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = p.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d2 = (scaled.row(i) - scaled.row(j)).squaredNorm();
      k(i, j) = k(j, i) = p.signal_variance * std::exp(-0.5 * d2);
    }
  }
  return k;
}

struct Factorization {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
  double half_log_det = 0.0;
};

// Cholesky of K + noise*I with escalating diagonal jitter.
std::optional<Factorization> factorize(const Eigen::MatrixXd& x, const KernelParams& p) {
  Eigen::MatrixXd c = gram(x, p);
  c.diagonal().array() += p.noise_variance;
  const double n = static_cast<double>(c.rows());
  const double base = c.trace() / n;
  if (!std::isfinite(base) || base <= 0.0) return std::nullopt;
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    Eigen::MatrixXd m = c;
    m.diagonal().array() += rel * base;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    const Eigen::VectorXd diag = lower.diagonal();
    if (!diag.allFinite() || (diag.array() <= 0.0).any()) continue;
    const double half_log_det = diag.array().log().sum();
    return Factorization{std::move(lower), rel * base, half_log_det};
  }
  return std::nullopt;
}

Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd mean_vector(const Dataset& data, const LinearMean& mean) {
  if (mean.mode == MeanMode::zero) return Eigen::VectorXd::Zero(data.size());
  return (data.inputs * mean.slope).array() + mean.intercept;
}

double variance_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size());
}

// Columns with (numerically) zero spread carry no slope.
constexpr double kConstantColumn = 1e-14;

Eigen::VectorXd resolve_prior_sd(const Dataset& data, const FitOptions& options) {
  const Eigen::Index d = data.dim();
  Eigen::VectorXd sd = Eigen::VectorXd::Zero(d);
  const double var_y = std::max(variance_of(data.targets), 1e-12);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var_x = variance_of(data.inputs.col(j));
    if (options.slope_prior_sd.size() > 0)
      sd[j] = std::max(options.slope_prior_sd[j], 0.0);
    else if (options.slope_prior_scale > 0.0 && var_x >= kConstantColumn)
      sd[j] = options.slope_prior_scale * std::sqrt(var_y / var_x);
  }
  return sd;
}

// Design matrix [X_active, 1] and the prior precision of each column.
struct Basis {
  std::vector<Eigen::Index> active;
  Eigen::MatrixXd h;
  Eigen::VectorXd precision;
};

Basis make_basis(const Dataset& data, const Eigen::VectorXd& prior_sd) {
  Basis b;
  for (Eigen::Index j = 0; j < data.dim(); ++j)
    if (variance_of(data.inputs.col(j)) >= kConstantColumn) b.active.push_back(j);
  const auto p = static_cast<Eigen::Index>(b.active.size()) + 1;
  b.h.resize(data.size(), p);
  b.precision = Eigen::VectorXd::Zero(p);
  for (Eigen::Index k = 0; k + 1 < p; ++k) {
    const Eigen::Index j = b.active[static_cast<std::size_t>(k)];
    b.h.col(k) = data.inputs.col(j);
    if (prior_sd[j] > 0.0) b.precision[k] = 1.0 / (prior_sd[j] * prior_sd[j]);
  }
  b.h.col(p - 1).setOnes();
  return b;
}

// H'C^{-1}H + Lambda for C = L L'.
Eigen::MatrixXd normal_matrix(const Basis& b, const Eigen::MatrixXd& lower) {
  const Eigen::MatrixXd w = lower.triangularView<Eigen::Lower>().solve(b.h);
  Eigen::MatrixXd a = w.transpose() * w;
  a.diagonal() += b.precision;
  return a;
}

struct ProfiledMean {
  LinearMean mean;
  double penalty = 0.0;             // 0.5 * beta' Lambda beta
  double half_log_det_normal = 0.0;  // 0.5 * log|A|, +inf when A is singular
};

// Minimizes 0.5 r'C^{-1}r + 0.5 beta'Lambda beta over (a, b) for a fixed
// factor of C. Constant columns are excluded (slope fixed at zero).
ProfiledMean profile_mean(const Dataset& data, const Eigen::MatrixXd& lower,
                          const Eigen::VectorXd& prior_sd) {
  const Basis b = make_basis(data, prior_sd);
  const Eigen::Index p = b.h.cols();
  const Eigen::MatrixXd w = lower.triangularView<Eigen::Lower>().solve(b.h);
  const Eigen::VectorXd wy = lower.triangularView<Eigen::Lower>().solve(data.targets);
  Eigen::MatrixXd a = w.transpose() * w;
  a.diagonal() += b.precision;
  const Eigen::VectorXd beta = a.completeOrthogonalDecomposition().solve(w.transpose() * wy);

  ProfiledMean out;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  out.half_log_det_normal = llt.info() == Eigen::Success
                                ? Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum()
                                : std::numeric_limits<double>::infinity();
  out.mean.mode = MeanMode::linear;
  out.mean.slope = Eigen::VectorXd::Zero(data.dim());
  for (Eigen::Index k = 0; k + 1 < p; ++k) {
    out.mean.slope[b.active[static_cast<std::size_t>(k)]] = beta[k];
    out.penalty += 0.5 * b.precision[k] * beta[k] * beta[k];
  }
  out.mean.intercept = beta[p - 1];
  return out;
}

// Posterior covariance of [slope; intercept] (D+1 square), zero for
// constant columns.
Eigen::MatrixXd coefficient_covariance(const Dataset& data, const Eigen::MatrixXd& lower,
                                       const Eigen::VectorXd& prior_sd) {
  const Basis b = make_basis(data, prior_sd);
  const Eigen::MatrixXd inv = normal_matrix(b, lower).completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::Index d = data.dim();
  std::vector<Eigen::Index> index(b.active);
  index.push_back(d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (std::size_t r = 0; r < index.size(); ++r)
    for (std::size_t c = 0; c < index.size(); ++c)
      cov(index[r], index[c]) = inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return cov;
}

double nlml_from_factor(const Dataset& data, const Factorization& f, const LinearMean& mean) {
  const Eigen::VectorXd r = data.targets - mean_vector(data, mean);
  const Eigen::VectorXd v = f.lower.triangularView<Eigen::Lower>().solve(r);
  return 0.5 * v.squaredNorm() + f.half_log_det + 0.5 * static_cast<double>(data.size()) * kLog2Pi;
}

// Log-parameter layout: [log sf2, log l_1..l_D, log sn2].
Eigen::VectorXd to_log(const KernelParams& p, double noise_floor) {
  Eigen::VectorXd theta(p.dim() + 2);
  theta[0] = std::log(p.signal_variance);
  theta.segment(1, p.dim()) = p.length_scales.array().log();
  theta[p.dim() + 1] = std::log(std::max(p.noise_variance, noise_floor));
  return theta;
}

KernelParams from_log(const Eigen::VectorXd& theta) {
  KernelParams p;
  const Eigen::Index d = theta.size() - 2;
  p.signal_variance = std::exp(theta[0]);
  p.length_scales = theta.segment(1, d).array().exp();
  p.noise_variance = std::exp(theta[d + 1]);
  return p;
}

}  // namespace

void KernelParams::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw std::invalid_argument("signal_variance must be positive and finite");
  if (length_scales.size() == 0) throw std::invalid_argument("length_scales must be non-empty");
  if (!length_scales.allFinite() || (length_scales.array() <= 0.0).any())
    throw std::invalid_argument("length_scales must be positive and finite");
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
    throw std::invalid_argument("noise_variance must be nonnegative and finite");
}

double LinearMean::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (mode == MeanMode::zero) return 0.0;
  return slope.dot(x) + intercept;
}

void LinearMean::validate(Eigen::Index dim) const {
  if (mode == MeanMode::zero) {
    if (prior_sd.size() != 0) throw std::invalid_argument("zero mean cannot carry a slope prior");
    return;
  }
  if (prior_sd.size() != 0 && prior_sd.size() != dim)
    throw std::invalid_argument("linear mean prior dimension mismatch");
  if (!prior_sd.allFinite() || (prior_sd.array() < 0.0).any())
    throw std::invalid_argument("linear mean prior sds must be finite and >= 0");
  if (slope.size() != dim) throw std::invalid_argument("linear mean slope dimension mismatch");
  if (!slope.allFinite() || !std::isfinite(intercept))
    throw std::invalid_argument("linear mean coefficients must be finite");
}

void Dataset::validate() const {
  if (inputs.rows() < 1) throw std::invalid_argument("dataset must contain at least one row");
  if (inputs.cols() < 1) throw std::invalid_argument("dataset must have at least one input column");
  if (inputs.rows() != targets.size())
    throw std::invalid_argument("dataset input rows and target length differ");
  if (!all_finite(inputs) || !targets.allFinite())
    throw std::invalid_argument("dataset contains non-finite entries");
}

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x_prime, const KernelParams& params,
                 bool include_noise) {
  if (x.size() != params.dim() || x_prime.size() != params.dim())
    throw std::invalid_argument("se_kernel: dimension mismatch");
  if (!x.allFinite() || !x_prime.allFinite())
    throw std::invalid_argument("se_kernel: non-finite input");
  const double d2 = ((x - x_prime).array() / params.length_scales.array()).square().sum();
  double k = params.signal_variance * std::exp(-0.5 * d2);
  if (include_noise && (x.array() == x_prime.array()).all()) k += params.noise_variance;
  return k;
}

TrainedGp::TrainedGp(KernelParams params, LinearMean mean, Dataset data)
    : params_(std::move(params)), mean_(std::move(mean)), data_(std::move(data)) {
  data_.validate();
  params_.validate();
  if (params_.dim() != data_.dim())
    throw std::invalid_argument("kernel dimension does not match dataset");
  mean_.validate(data_.dim());
  auto f = factorize(data_.inputs, params_);
  if (!f) throw FitError("Gram matrix not positive definite after maximum jitter");
  jitter_ = f->jitter;
  alpha_ = cholesky_solve(f->lower, data_.targets - mean_vector(data_, mean_));
  nlml_ = nlml_from_factor(data_, *f, mean_);
  if (mean_.estimated()) {
    coef_cov_ = coefficient_covariance(data_, f->lower, mean_.prior_sd);
    Eigen::MatrixXd h(data_.size(), data_.dim() + 1);
    h << data_.inputs, Eigen::VectorXd::Ones(data_.size());
    basis_solve_ = f->lower.triangularView<Eigen::Lower>().solve(h);
  }
  chol_ = std::move(f->lower);
}

Prediction TrainedGp::predict(const Eigen::Ref<const Eigen::VectorXd>& x_star) const {
  if (x_star.size() != data_.dim()) throw std::invalid_argument("predict: dimension mismatch");
  if (!x_star.allFinite()) throw std::invalid_argument("predict: non-finite input");
  const Eigen::Index n = data_.size();
  const Eigen::VectorXd scaled_star = x_star.array() / params_.length_scales.array();
  Eigen::VectorXd k_star(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd diff =
        data_.inputs.row(i).transpose().array() / params_.length_scales.array() -
        scaled_star.array();
    k_star[i] = params_.signal_variance * std::exp(-0.5 * diff.squaredNorm());
  }
  Prediction out;
  out.mean = mean_(x_star) + k_star.dot(alpha_);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k_star);
  const double prior = params_.signal_variance + params_.noise_variance;
  double var = prior - v.squaredNorm();
  if (mean_.estimated()) {
    Eigen::VectorXd r(data_.dim() + 1);
    r << x_star, 1.0;
    r -= basis_solve_.transpose() * v;
    var += r.dot(coef_cov_ * r);
  }
  if (var < 0.0) {
    if (var < -std::max(jitter_, 1e-12 * prior))
      throw std::runtime_error("negative predictive variance: factorization is inconsistent");
    var = 0.0;
  }
  out.variance = var;
  return out;
}

double nlml(const Dataset& data, const KernelParams& params, const LinearMean& mean) {
  data.validate();
  params.validate();
  if (params.dim() != data.dim()) throw std::invalid_argument("nlml: dimension mismatch");
  mean.validate(data.dim());
  auto f = factorize(data.inputs, params);
  if (!f) throw FitError("Gram matrix not positive definite after maximum jitter");
  return nlml_from_factor(data, *f, mean);
}

LinearMean profile_linear_mean(const Dataset& data, const KernelParams& params,
                               const FitOptions& options) {
  data.validate();
  params.validate();
  auto f = factorize(data.inputs, params);
  if (!f) throw FitError("Gram matrix not positive definite after maximum jitter");
  auto mean = profile_mean(data, f->lower, resolve_prior_sd(data, options)).mean;
  if (options.mean_uncertainty) mean.prior_sd = resolve_prior_sd(data, options);
  return mean;
}

FitResult fit_hyperparams_detailed(const Dataset& data, const KernelParams& init,
                                   MeanMode mean_mode, const FitOptions& options) {
  data.validate();
  init.validate();
  if (init.dim() != data.dim()) throw std::invalid_argument("init dimension does not match dataset");

  const Eigen::Index d = data.dim();
  if (options.slope_prior_sd.size() != 0 && options.slope_prior_sd.size() != d)
    throw std::invalid_argument("slope_prior_sd must have one entry per input column");
  const double scale = std::max(mean_mode == MeanMode::zero ? data.targets.squaredNorm() /
                                                                  static_cast<double>(data.size())
                                                            : variance_of(data.targets),
                                1e-12);
  const double noise_floor = std::max(options.min_noise_variance, 1e-10 * scale);

  Eigen::VectorXd lower(d + 2), upper(d + 2);
  lower[0] = std::log(1e-6 * scale);
  upper[0] = std::log(1e4 * scale);
  for (Eigen::Index j = 0; j < d; ++j) {
    double range = data.inputs.col(j).maxCoeff() - data.inputs.col(j).minCoeff();
    if (!(range > 1e-12)) range = 1.0;
    lower[j + 1] = std::log(1e-3 * range);
    upper[j + 1] = std::log(1e3 * range);
  }
  lower[d + 1] = std::log(noise_floor);
  upper[d + 1] = std::log(std::max(10.0 * scale, 2.0 * noise_floor));

  const Eigen::VectorXd prior_sd = resolve_prior_sd(data, options);

  struct Candidate {
    KernelParams params;
    LinearMean mean;
    double objective = std::numeric_limits<double>::infinity();
  };

  auto evaluate = [&](const KernelParams& p, Candidate* out) {
    auto f = factorize(data.inputs, p);
    if (!f) return std::numeric_limits<double>::infinity();
    LinearMean mean;
    double penalty = 0.0;
    if (mean_mode == MeanMode::linear) {
      auto prof = profile_mean(data, f->lower, prior_sd);
      mean = std::move(prof.mean);
      penalty = prof.penalty;
      if (options.mean_uncertainty) {
        mean.prior_sd = prior_sd;
        penalty += prof.half_log_det_normal;
      }
    }
    const double value = nlml_from_factor(data, *f, mean) + penalty;
    if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
    if (out) *out = Candidate{p, std::move(mean), value};
    return value;
  };

  auto in_bounds = [&](const Eigen::VectorXd& theta) {
    return (theta.array() >= lower.array()).all() && (theta.array() <= upper.array()).all();
  };
  auto objective = [&](const Eigen::VectorXd& theta) {
    if (!in_bounds(theta)) return std::numeric_limits<double>::infinity();
    return evaluate(from_log(theta), nullptr);
  };

  FitReport report;
  Candidate best;
  KernelParams init_eval = init;
  init_eval.noise_variance = std::max(init.noise_variance, noise_floor);
  report.initial_objective = evaluate(init_eval, &best);

  const Eigen::VectorXd theta0 = to_log(init, noise_floor).cwiseMax(lower).cwiseMin(upper);
  const int restarts = std::max(options.restarts, 1);
  const int grid = std::max(restarts - 1, 1);
  double running_best = best.objective;

  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start = theta0;
    if (r > 0) {
      // Cyclic Latin square: each dimension visits every level exactly once.
      for (Eigen::Index j = 0; j < start.size(); ++j) {
        const int level = static_cast<int>((r - 1 + j) % grid);
        const double offset = ((level + 0.5) / grid * 2.0 - 1.0) * options.restart_span;
        start[j] = std::clamp(theta0[j] + offset, lower[j], upper[j]);
      }
    }
    auto nm = detail::nelder_mead(objective, start, options.initial_step, options.max_evaluations,
                                  options.tolerance, [&](double v) {
                                    running_best = std::min(running_best, v);
                                    report.best_history.push_back(running_best);
                                  });
    report.evaluations += nm.evaluations;
    if (nm.converged) ++report.converged_restarts;
    if (nm.value < best.objective) {
      Candidate c;
      if (std::isfinite(evaluate(from_log(nm.x), &c)) && c.objective < best.objective)
        best = std::move(c);
    }
  }

  if (!std::isfinite(best.objective))
    throw FitError("hyperparameter fit failed: no restart produced a finite likelihood");
  report.final_objective = best.objective;
  return FitResult{TrainedGp(best.params, best.mean, data), std::move(report)};
}

TrainedGp fit_hyperparams(const Dataset& data, const KernelParams& init, MeanMode mean_mode,
                          const FitOptions& options) {
  return fit_hyperparams_detailed(data, init, mean_mode, options).gp;
}

}  // namespace gpbolus::gp
