#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace gpbolus::gp {

/// Raised when the regularized Gram matrix cannot be factorized or a fit
/// produces no finite likelihood.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Squared-exponential kernel hyperparameters with per-dimension length
/// scales (ARD) and an additive white-noise term.
struct KernelParams {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;
  double noise_variance = 0.0;

  Eigen::Index dim() const { return length_scales.size(); }
  void validate() const;
};

enum class MeanMode { zero, linear };

/// m(x) = a'x + b, or identically zero.
struct LinearMean {
  MeanMode mode = MeanMode::zero;
  Eigen::VectorXd slope;
  double intercept = 0.0;
  // Set when (a, b) were estimated from the training data: per-slope prior
  // sd (0 = flat). Predictions then include the coefficient uncertainty.
  Eigen::VectorXd prior_sd;

  bool estimated() const { return mode == MeanMode::linear && prior_sd.size() > 0; }
  static LinearMean zero() { return {}; }
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  void validate(Eigen::Index dim) const;
};

struct Dataset {
  Eigen::MatrixXd inputs;   // N x D
  Eigen::VectorXd targets;  // N

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
  void validate() const;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x_prime,
                 const KernelParams& params, bool include_noise);

/// Fitted GP with a cached Cholesky factor of K + noise*I + jitter*I.
/// Immutable after construction; concurrent predict() calls are safe.
class TrainedGp {
 public:
  TrainedGp(KernelParams params, LinearMean mean, Dataset data);

  /// Predictive distribution of a new noisy observation y* at x*. For an
  /// estimated linear mean the variance also carries the coefficient
  /// posterior (explicit basis functions).
  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x_star) const;

  /// Negative log marginal likelihood of the training targets.
  double nlml() const { return nlml_; }

  const KernelParams& params() const { return params_; }
  const LinearMean& mean() const { return mean_; }
  const Dataset& data() const { return data_; }
  const Eigen::MatrixXd& chol_factor() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }

 private:
  KernelParams params_;
  LinearMean mean_;
  Dataset data_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd coef_cov_;     // (D+1)^2, estimated means only
  Eigen::MatrixXd basis_solve_;  // L^{-1} [X 1]
  double jitter_ = 0.0;
  double nlml_ = 0.0;
};

double nlml(const Dataset& data, const KernelParams& params, const LinearMean& mean);

struct FitOptions {
  int restarts = 5;
  int max_evaluations = 1500;     // per restart
  double tolerance = 1e-9;        // relative spread of simplex values
  double restart_span = 2.0;      // half-width of the restart grid in log units
  double initial_step = 0.7;      // simplex edge in log units
  double min_noise_variance = 0.0;
  // Gaussian prior on linear-mean slopes with standard deviation
  // slope_prior_scale * sd(y) / sd(x_j). Zero disables the prior.
  double slope_prior_scale = 0.0;
  // Per-column prior standard deviations; when non-empty they replace the
  // scale rule above. Entries <= 0 leave a column unpenalized.
  Eigen::VectorXd slope_prior_sd;
  // Keep the fitted mean's prior so predictions add coefficient uncertainty.
  bool mean_uncertainty = false;
};

struct FitReport {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int evaluations = 0;
  int converged_restarts = 0;
  std::vector<double> best_history;  // best objective after each accepted simplex step
};

struct FitResult {
  TrainedGp gp;
  FitReport report;
};

/// Maximizes the marginal likelihood over log-hyperparameters with
/// Nelder-Mead and a fixed deterministic restart grid. Linear-mean
/// coefficients are profiled out exactly for every kernel candidate.
FitResult fit_hyperparams_detailed(const Dataset& data, const KernelParams& init,
                                   MeanMode mean_mode, const FitOptions& options = {});

TrainedGp fit_hyperparams(const Dataset& data, const KernelParams& init, MeanMode mean_mode,
                          const FitOptions& options = {});

/// Generalized least-squares mean coefficients for fixed kernel params.
LinearMean profile_linear_mean(const Dataset& data, const KernelParams& params,
                               const FitOptions& options);

}  // namespace gpbolus::gp
