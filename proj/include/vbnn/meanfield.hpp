#pragma once

#include "vbnn/model.hpp"
#include "vbnn/priors.hpp"

#include <json.hpp>

#include <optional>
#include <variant>

namespace vbnn {

/// N(m, s^2) factor, s = exp(log_s).
struct GaussianFactor {
  double m = 0.0;
  double log_s = 0.0;
  double s() const noexcept { return std::exp(log_s); }
};

/// IG(shape a, rate b) factor on sigma^2, a = exp(log_a), b = exp(log_b).
struct InverseGammaFactor {
  double log_a = 0.0;
  double log_b = 0.0;
  double a() const noexcept { return std::exp(log_a); }
  double b() const noexcept { return std::exp(log_b); }
};

/// The noise scale is known and fixed at `sigma`.
struct KnownScale {
  double sigma = 1.0;
};

/// Scale factor: known sigma, IG on sigma^2, or Gaussian on rho.
using ScaleFactor = std::variant<KnownScale, InverseGammaFactor, GaussianFactor>;

/// Fully factorized Gaussian over the K network weights (canonical order)
/// plus one scale factor.
struct MeanFieldPosterior {
  ModelDims dims;
  Eigen::VectorXd mean;
  Eigen::VectorXd log_sd;
  ScaleFactor scale = KnownScale{};

  MeanFieldPosterior() = default;
  MeanFieldPosterior(const ModelDims& d, ScaleFactor sf)
      : dims(d), mean(Eigen::VectorXd::Zero(d.param_count())),
        log_sd(Eigen::VectorXd::Zero(d.param_count())), scale(sf) {}

  int param_count() const noexcept { return static_cast<int>(mean.size()); }
  ScaleKind kind() const noexcept;
  GaussianFactor weight_factor(int i) const { return {mean[i], log_sd[i]}; }
  Eigen::VectorXd sd() const { return log_sd.array().exp().matrix(); }
  Network mean_network() const { return Network::unflatten(dims, mean); }

  /// Number of unconstrained variational parameters (2K plus 0 or 2).
  int free_parameter_count() const noexcept;
  /// [mean (K), log_sd (K), scale parameters (log_a, log_b) or (m_rho, log_s_rho)].
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::Ref<const Eigen::VectorXd>& flat);

  void check() const;
};

/// Posterior draws with the base noise retained.
struct ReparamSample {
  Eigen::MatrixXd theta;    // S x K, theta = m + s * eps
  Eigen::MatrixXd eps;      // S x K
  Eigen::VectorXd sigma;    // S, noise scale of each draw
  Eigen::VectorXd scale_base;  // S: rho noise, or the IG gamma base draw; zero when known
};

ReparamSample sample_reparameterized(const MeanFieldPosterior& q, std::uint64_t seed, int count);

/// KL(N(m, s^2) || N(0, prior_sd^2)).
double kl_gaussian(double m, double s, double prior_sd) noexcept;

/// Sum over weights of KL(q_i || N(0, zeta_n^2)).
double kl_weights_gaussian(const MeanFieldPosterior& q, const PriorSpec& spec, int n);

/// KL(IG(a, b) || IG(alpha, lambda)) on sigma^2.
double kl_scale_inverse_gamma(const InverseGammaFactor& q, double alpha, double lambda);

/// KL(N(m, s^2) || N(0, eta^2)) on rho.
double kl_scale_rho(const GaussianFactor& q, double eta) noexcept;

/// Total KL(q || prior): weights plus the scale factor.
double kl_total(const MeanFieldPosterior& q, const PriorSpec& spec, int n);

/// KL of the analysis family q_i = N(theta0_i, tau^2 / n) against N(0, zeta^2),
/// in the expanded form (K/2) log n + K log(zeta/(tau sqrt e)) + ... .
double kl_analysis_family(const Eigen::VectorXd& theta0, double tau, double zeta, int n);

/// KL of the weight factors of q against the analysis family N(theta0_i, tau^2 / n).
/// A diagnostic only: hidden-node permutations of theta0 give different values.
double kl_to_analysis_family(const MeanFieldPosterior& q, const Eigen::VectorXd& theta0, double tau, int n);

struct PointSummaries {
  Network weight_means;
  /// E(sigma^2) when it exists; absent for IG with a <= 1.
  std::optional<double> sigma2_mean;
  /// False only for the IG factor with shape a <= 1 ("undefined mean").
  bool sigma2_defined = true;
};

/// Weight means and sigma-hat^2 = E_q(sigma^2). For the rho factor the
/// expectation of log(1 + e^rho)^2 uses Gauss-Hermite with `gh_nodes` nodes.
PointSummaries posterior_point_summaries(const MeanFieldPosterior& q, int gh_nodes = 64);

/// Initial q: weight means ~ N(0, 0.1^2), log_sd = log 0.1, IG warm start
/// a = n/2 + alpha, b = lambda + SSR/2 at the initial mean, rho mean at the
/// softplus inverse of the residual scale.
MeanFieldPosterior initial_posterior(const ModelDims& dims, const PriorSpec& spec,
                                     const RegressionDataset& data, std::uint64_t seed);

/// Versioned JSON document for checkpoints.
nlohmann::json to_json(const MeanFieldPosterior& q);
MeanFieldPosterior posterior_from_json(const nlohmann::json& doc);

}  // namespace vbnn
