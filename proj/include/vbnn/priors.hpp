#pragma once

#include "vbnn/model.hpp"
#include "vbnn/quadrature.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vbnn {

/// theta_i ~ N(0, zeta^2), sigma known.
struct FixedGaussian {
  double zeta = 1.0;
};

/// theta_i ~ N(0, zeta^2 n^u), sigma known.
struct ScaledGaussian {
  double zeta = 1.0;
  double u = 2.0;
};

/// theta_i ~ N(0, zeta^2) and sigma^2 ~ IG(shape alpha, rate lambda).
struct InverseGammaSigma {
  double zeta = 1.0;
  double alpha = 2.0;
  double lambda = 1.0;
};

/// theta_i ~ N(0, zeta^2) and rho ~ N(0, eta^2), with sigma = log(1 + e^rho).
struct RhoGaussian {
  double zeta = 1.0;
  double eta = 1.0;
};

using PriorSpec = std::variant<FixedGaussian, ScaledGaussian, InverseGammaSigma, RhoGaussian>;

/// How the noise scale enters the model.
enum class ScaleKind { Known, InverseGamma, Rho };

ScaleKind scale_kind(const PriorSpec& spec) noexcept;
std::string variant_name(const PriorSpec& spec);

/// Throws std::invalid_argument if any hyperparameter is non-positive.
void validate(const PriorSpec& spec);

/// Prior standard deviation of each network weight at sample size n.
double weight_prior_sd(const PriorSpec& spec, int n);

/// Growth exponents of the sieve: k_n ~ n^a, log C_n = n^(b-a), log D_n = n^b.
struct SieveSpec {
  double a = 0.25;
  double b = 0.5;

  /// 0 < a < b < 1; the rho family additionally needs a < 1/2 and b > a + 1/2.
  void validate(ScaleKind kind = ScaleKind::Known) const;
};

/// Sieve constants at one n, kept in log domain (C_n overflows quickly).
struct SieveBounds {
  int k_n = 1;
  double log_c = 0.0;
  double log_d = 0.0;
};

SieveBounds sieve_bounds(const SieveSpec& sieve, int n);

/// Exact log density of the product prior, normalizing constants included.
/// `scale_param` is sigma^2 for the inverse-gamma variant, rho for the rho
/// variant, and must be absent otherwise.
double log_prior_density(const PriorSpec& spec, int n, const Network& params,
                         std::optional<double> scale_param = std::nullopt);
/// Same over an arbitrary number of weight coordinates.
double log_prior_density(const PriorSpec& spec, int n, const Eigen::VectorXd& theta,
                         std::optional<double> scale_param = std::nullopt);

struct PriorDraw {
  Network params;
  std::optional<double> scale_param;
};

PriorDraw sample_prior(const PriorSpec& spec, int n, const ModelDims& dims, std::uint64_t seed);

/// log(2 (1 - Phi(threshold / sd))): two-sided Gaussian tail beyond |threshold|.
double log_gaussian_two_sided_tail(double log_threshold, double sd);

/// log P(sigma^2 < e^log_lower or sigma^2 > e^log_upper) for sigma^2 ~ IG(alpha, lambda).
double log_inverse_gamma_outside(double alpha, double lambda, double log_lower,
                                 double log_upper);

/// Union bound on the prior mass outside the box |theta_i| <= C (plus the
/// scale constraint of the variant), in log domain.
double log_prior_mass_outside_box(const PriorSpec& spec, int n, int param_count, double log_c,
                                  double log_d);

/// Union (lemma) bound on log P(F_n^c) for a network with p covariates.
double log_prior_mass_outside_sieve(const PriorSpec& spec, const SieveSpec& sieve, int n,
                                    int p);

/// Exact log P(F_n^c) for the product prior, 1 - prod_i (1 - tail_i), for cross-checks.
double log_prior_mass_outside_sieve_exact(const PriorSpec& spec, const SieveSpec& sieve, int n,
                                          int p);

/// Membership test for F_n.
bool inside_sieve(const PriorSpec& spec, const SieveBounds& bounds, const Network& params,
                  std::optional<double> scale_param = std::nullopt);

/// Rate diagnostics for the approximation and coefficient-growth conditions.
struct AssumptionReport {
  double sum_sq_theta0 = 0.0;
  /// (n, ||f_theta0n - f0||_2^2) on the requested grid.
  std::vector<std::pair<int, double>> a1_l2_error;
  /// Feasible delta interval [lo, hi); empty when hi <= lo.
  double delta_lo = 0.0;
  double delta_hi = 0.0;
  /// Least-squares growth exponent of sum theta0n^2 in n (v-hat).
  double sum_sq_growth = 0.0;
  /// Least-squares decay exponent of the squared L2 approximation error
  /// (0 when the error vanishes identically).
  double a1_decay = 0.0;
  bool a2_satisfied = false;
  bool a3_satisfied = false;
  /// Witnessed v for the relaxed condition: max(1, v-hat).
  double a3_v = 1.0;
  /// For the n-scaled prior: whether u > v-hat holds (not auto-selected).
  std::optional<bool> u_exceeds_v;
};

AssumptionReport assumption_report(const Network& teacher, const Truth& f0,
                                   const SieveSpec& sieve, const std::vector<int>& n_grid,
                                   const QuadratureRule& rule,
                                   std::optional<double> prior_u = std::nullopt);

}  // namespace vbnn
