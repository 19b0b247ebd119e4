#pragma once

#include "vbnn/meanfield.hpp"
#include "vbnn/model.hpp"
#include "vbnn/quadrature.hpp"

#include <functional>
#include <variant>
#include <vector>

namespace vbnn {

/// A regression function evaluated on a batch of rows (n x p).
using BatchFunction = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

BatchFunction as_batch(const Network& net);
BatchFunction as_batch(const Truth& truth);

/// Integral of (f - g)^2 over [0,1]^p.
double l2_sq_distance(const BatchFunction& f, const BatchFunction& g, const QuadratureRule& rule);
/// Same, from values already evaluated on the rule's points.
double l2_sq_distance(const Eigen::VectorXd& f_vals, const Eigen::VectorXd& g_vals,
                      const QuadratureRule& rule);

/// KL(l0 || l_theta) for the Gaussian regression densities with uniform x:
/// log(sigma/sigma0) - 1/2 + sigma0^2/(2 sigma^2) + ||f_theta - f0||^2 / (2 sigma^2).
double kl_true_vs_model(const BatchFunction& f_theta, double sigma, const BatchFunction& f0,
                        double sigma0, const QuadratureRule& rule);
double kl_true_vs_model(const Eigen::VectorXd& f_theta_vals, double sigma,
                        const Eigen::VectorXd& f0_vals, double sigma0,
                        const QuadratureRule& rule);

/// d_H = integral of (sqrt(l0) - sqrt(l_theta))^2 over (y, x); range [0, 2].
/// The conventional normalized squared Hellinger distance is d_H / 2.
double hellinger_true_vs_model(const BatchFunction& f_theta, double sigma,
                               const BatchFunction& f0, double sigma0,
                               const QuadratureRule& rule);
double hellinger_true_vs_model(const Eigen::VectorXd& f_theta_vals, double sigma,
                               const Eigen::VectorXd& f0_vals, double sigma0,
                               const QuadratureRule& rule);

struct TailMassEstimate {
  double epsilon = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  int samples = 0;
};

/// Hellinger distance to the truth for each of S draws from q (same draws
/// for every caller with the same seed).
Eigen::VectorXd hellinger_draws(const MeanFieldPosterior& q, const Truth& truth, double sigma0,
                                int samples, std::uint64_t seed, const QuadratureRule& rule);

/// pi*(V_eps^c): fraction of draws with d_H > eps, one estimate per eps,
/// all from the same draws.
std::vector<TailMassEstimate> vp_tail_mass(const MeanFieldPosterior& q, const Truth& truth,
                                           double sigma0, const std::vector<double>& epsilons,
                                           int samples, std::uint64_t seed,
                                           const QuadratureRule& rule);

/// Tail fractions from precomputed per-draw distances.
std::vector<TailMassEstimate> tail_mass_from_draws(const Eigen::VectorXd& distances,
                                                   const std::vector<double>& epsilons);

struct MonteCarloPredictor {
  int samples = 10000;
  std::uint64_t seed = 0;
};
struct GaussHermitePredictor {
  int nodes = 64;
};
using PredictorMethod = std::variant<GaussHermitePredictor, MonteCarloPredictor>;

/// f-hat(x) = E_q f_theta(x) at every row of xs.
Eigen::VectorXd vb_predictor(const MeanFieldPosterior& q, const Eigen::MatrixXd& xs,
                             const PredictorMethod& method = GaussHermitePredictor{});

/// Per-row Monte Carlo standard error of the MC predictor (zero for GH).
struct PredictorWithError {
  Eigen::VectorXd value;
  Eigen::VectorXd standard_error;
};
PredictorWithError vb_predictor_mc(const MeanFieldPosterior& q, const Eigen::MatrixXd& xs,
                                   const MonteCarloPredictor& mc);

/// Integral of (f-hat - f0)^2 over [0,1]^p.
double predictor_l2_error(const MeanFieldPosterior& q, const Truth& f0,
                          const QuadratureRule& rule,
                          const PredictorMethod& method = GaussHermitePredictor{});

/// d_H(l-hat, l0) for the plug-in density N(f-hat(x), sigma-hat^2). NaN when
/// sigma-hat^2 is undefined.
double hellinger_vb_average(const MeanFieldPosterior& q, const Truth& f0, double sigma0,
                            const QuadratureRule& rule);

}  // namespace vbnn
