#pragma once

#include "vbnn/model.hpp"
#include "vbnn/priors.hpp"
#include "vbnn/quadrature.hpp"

#include <json.hpp>

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vbnn {

/// One measured quantity against its allowance. `excess` = measured - limit
/// for upper limits, limit - measured for lower ones; <= 0 means it holds.
struct LemmaCheck {
  std::string name;
  double measured = 0.0;
  double limit = 0.0;
  double excess = 0.0;
};

struct LemmaReport {
  std::string lemma_id;
  int instances_checked = 0;
  /// Largest excess over all checks.
  double max_violation = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  /// Worst-case instance, human readable.
  std::string details;
  bool pass = false;
  std::vector<LemmaCheck> checks;

  /// Records an upper-limit check (measured <= limit).
  void check_le(const std::string& name, double measured, double limit);
  /// Records a lower-limit check (measured >= limit).
  void check_ge(const std::string& name, double measured, double limit);
  /// Sets pass from max_violation and tolerance.
  void finish();
};

nlohmann::json to_json(const LemmaReport& report);
LemmaReport lemma_report_from_json(const nlohmann::json& doc);

/// Least-squares slope of log y against log x.
double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// E_p|log(p/q)| <= KL(p, q) + 2/e on random 1-D Gaussian pairs (plus p = q).
LemmaReport verify_mod_kl(int trials = 1000, std::uint64_t seed = 1);

/// int (f_theta - f_theta0)^2 dx <= 8 (k^2 + (p+1)^2 (sum_j |beta_j0|)^2) eps^2
/// for coordinatewise perturbations |theta_i - theta_i0| <= eps, (p+1) eps < 1.
LemmaReport verify_theta_bound(int trials, const ModelDims& dims,
                               const std::vector<double>& eps_grid, std::uint64_t seed = 2);

/// h1 <= delta^2 and h2 <= 1/(2 sigma0^2 (1-delta)^2) on |sigma/sigma0 - 1| < delta,
/// and the same through sigma = log(1 + e^rho) on |rho - rho0| < delta sigma0.
LemmaReport verify_sig_rho_bounds(const std::vector<double>& delta_grid, double sigma0 = 1.0,
                                  const std::vector<double>& rho0_grid = {-2.0, 0.0, 0.541324854612918, 3.0},
                                  int points_per_band = 2001);

/// Under q = IG(n, n sigma0^2): E h = (log n - digamma(n))/2 and
/// E 1/(2 sigma^2) = 1/(2 sigma0^2), by quadrature over 1/sigma^2; decay slope of E h.
LemmaReport verify_ig_expectation_identities(const std::vector<int>& n_grid, double sigma0);

/// Under q = N(rho0, nu^2/n): E h(rho) -> 0 and E 1/(2 sigma_rho^2) -> 1/(2 sigma0^2),
/// both with log-log decay slope <= -0.9, for rho0 below, at and above log(e - 1).
LemmaReport verify_rho_expectation_identities(const std::vector<int>& n_grid,
                                              const std::vector<double>& rho0_grid, double nu);

/// |(1 - Phi(a)) a / phi(a) - 1| < 1/a^2 and decreasing on the grid; the
/// log-domain tail matches a quadrature of the density to 1e-8 relative.
LemmaReport verify_mills_ratio(const std::vector<double>& a_grid);

/// MC estimate of E_q int (f_theta - f0)^2 dx with q = N(theta0n, tau^2/n) per
/// coordinate and f0 the teacher; decay slope <= -0.9. The teacher is padded
/// to the sieve's k_n.
struct FBoundResult {
  LemmaReport report;
  std::vector<double> estimates;
};
FBoundResult verify_f_bound_decay(const Network& teacher, const std::vector<int>& n_grid,
                                  double tau, int samples, std::uint64_t seed,
                                  const SieveSpec& sieve, const QuadratureRule& rule);

/// (i) MC fraction of prior draws outside F_n <= exp(log bound) + 3 SE on
/// `mc_grid`; (ii) the log bound is strictly decreasing on `analytic_grid`
/// and below -kappa n^rate_exponent from the first such n onwards.
LemmaReport verify_prior_tail_bound(const PriorSpec& spec, const SieveSpec& sieve, int p,
                                    const std::vector<int>& mc_grid,
                                    const std::vector<int>& analytic_grid, int samples,
                                    std::uint64_t seed, double kappa = 1.0,
                                    double rate_exponent = 1.0);

/// Settings of the full suite.
struct LemmaSuiteConfig {
  std::uint64_t seed = 20240;
  int mod_kl_trials = 1000;
  int theta_trials = 500;
  std::vector<double> delta_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> ig_n_grid = {2, 10, 100, 1000, 10000};
  double ig_sigma0 = 1.5;
  std::vector<int> rho_n_grid = {100, 1000, 10000, 100000, 1000000};
  /// Below, at and above log(e - 1).
  std::vector<double> rho0_grid = {-0.458675145387082, 0.541324854612918, 1.541324854612918};
  double rho_nu = 1.0;
  std::vector<double> mills_grid = {1, 2, 3, 5, 8, 10, 15, 20, 30};
  std::vector<int> f_bound_n_grid = {100, 1000, 10000, 100000};
  double f_bound_tau = 1.0;
  int f_bound_samples = 400;
  /// Sieve for the f-bound check; a small a keeps k_n essentially fixed over the grid.
  SieveSpec f_bound_sieve{0.05, 0.5};
  int prior_samples = 100000;
};

/// Runs every check. Reports are in a fixed order.
std::vector<LemmaReport> run_lemma_suite(const LemmaSuiteConfig& config = {});

}  // namespace vbnn
