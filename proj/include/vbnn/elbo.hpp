#pragma once

#include "vbnn/meanfield.hpp"
#include "vbnn/priors.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbnn {

struct TrainConfig {
  int iters = 2000;
  int mc_samples = 8;
  double step_size = 1e-2;
  /// When positive, the step decays geometrically to this value at the last iteration.
  double step_size_final = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int convergence_window = 200;
  double convergence_tol = 1e-6;
  /// Multiplies E_q log L; 0 leaves only -KL(q || prior).
  double likelihood_weight = 1.0;
  /// Mini-batch size; 0 means full batch.
  int batch_size = 0;
  /// Write the posterior JSON to `checkpoint_path` every this many iterations (0 = never).
  int checkpoint_every = 0;
  std::string checkpoint_path;

  void validate() const;
};

/// Raised when the ELBO or its gradient stops being finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(int iteration, std::string parameter, const std::string& what)
      : std::runtime_error(what), iteration_(iteration), parameter_(std::move(parameter)) {}
  int iteration() const noexcept { return iteration_; }
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  int iteration_;
  std::string parameter_;
};

struct ElboEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  double expected_log_likelihood = 0.0;
  double kl = 0.0;
};

/// ELBO = w E_q log L - KL(q || prior) by S reparameterized draws. The IG
/// variant uses E(1/sigma^2) = a/b and E log sigma^2 = log b - digamma(a)
/// exactly, so only the weights are sampled.
ElboEstimate elbo_estimate(const MeanFieldPosterior& q, const PriorSpec& prior,
                           const RegressionDataset& data, int samples, std::uint64_t seed,
                           double likelihood_weight = 1.0);

struct ElboGradient {
  /// The ELBO estimate built from the same draws.
  double value = 0.0;
  /// Gradient over MeanFieldPosterior::pack() coordinates.
  Eigen::VectorXd grad;
};

/// Exact gradient of the seeded estimator returned by elbo_estimate.
ElboGradient elbo_gradient(const MeanFieldPosterior& q, const PriorSpec& prior,
                           const RegressionDataset& data, int samples, std::uint64_t seed,
                           double likelihood_weight = 1.0);

/// Gradient of the closed-form KL(q || prior) over pack() coordinates.
Eigen::VectorXd kl_gradient(const MeanFieldPosterior& q, const PriorSpec& prior, int n);

/// Name of a pack() coordinate, e.g. "mean[3]" or "log_rate".
std::string parameter_name(const MeanFieldPosterior& q, int index);

struct FitResult {
  MeanFieldPosterior posterior;
  /// Trailing-window average of the per-iteration ELBO estimates.
  std::vector<double> elbo_trace;
  std::vector<double> raw_elbo_trace;
  std::vector<double> grad_norm_trace;
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double wall_time_s = 0.0;
};

/// Adam ascent on the ELBO from initial_posterior (or `init` when given).
/// Throws NumericalError on a non-finite ELBO or gradient.
FitResult fit(const PriorSpec& prior, const RegressionDataset& data, const ModelDims& dims,
              const TrainConfig& config, std::optional<MeanFieldPosterior> init = std::nullopt);

struct FiniteDifferenceReport {
  std::vector<int> coords;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

/// Central differences of the seeded ELBO estimator (common random numbers)
/// against elbo_gradient. Relative error is |a - fd| / max(|a|, |fd|, 1e-3).
FiniteDifferenceReport finite_difference_check(const MeanFieldPosterior& q,
                                               const PriorSpec& prior,
                                               const RegressionDataset& data,
                                               const std::vector<int>& coords, double h = 1e-5,
                                               int samples = 8, std::uint64_t seed = 0);

}  // namespace vbnn
