// ELBO estimator, its gradient and the Adam trainer.

#include "vbnn/divergence.hpp"
#include "vbnn/elbo.hpp"
#include "vbnn/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace vbnn;
using doctest::Approx;

namespace {

double integrate_line(const std::function<double(double)>& f, double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-14);
}

const std::vector<PriorSpec>& all_variants() {
  static const std::vector<PriorSpec> v = {FixedGaussian{1.0}, ScaledGaussian{0.5, 0.3},
                                           InverseGammaSigma{1.0, 2.0, 1.0},
                                           RhoGaussian{1.0, 0.7071067811865476}};
  return v;
}

MeanFieldPosterior perturbed_posterior(const ModelDims& dims, const PriorSpec& prior,
                                       const RegressionDataset& data, std::uint64_t seed) {
  MeanFieldPosterior q = initial_posterior(dims, prior, data, seed);
  Rng rng(seed + 1);
  Eigen::VectorXd flat = q.pack();
  for (auto& v : flat) v += 0.3 * rng.normal();
  q.unpack(flat);
  return q;
}

std::vector<int> all_coords(const MeanFieldPosterior& q) {
  std::vector<int> c(q.free_parameter_count());
  std::iota(c.begin(), c.end(), 0);
  return c;
}

}  // namespace

TEST_CASE("degenerate weights: fixed scale gives the plain log likelihood") {
  const Truth truth = Truth::named("sine", 1);
  const RegressionDataset data = simulate_dataset(truth, 0.4, 30, 1, 5);
  MeanFieldPosterior q(ModelDims(1, 2), KnownScale{0.4});
  Rng rng(2);
  for (auto& v : q.mean) v = rng.normal();
  q.log_sd.setConstant(-700.0);
  const ElboEstimate e = elbo_estimate(q, FixedGaussian{1.0}, data, 6, 1);
  const Network net = Network::unflatten(q.dims, q.mean);
  CHECK(e.expected_log_likelihood == Approx(log_likelihood(net, 0.4, data)).epsilon(1e-13));
  CHECK(e.standard_error == Approx(0.0).scale(1e-9));
  CHECK(e.value == Approx(e.expected_log_likelihood - e.kl).epsilon(1e-13));
  CHECK(e.kl == kl_total(q, FixedGaussian{1.0}, 30));
}

TEST_CASE("inverse-gamma scale expectation matches quadrature over sigma^2") {
  const Truth truth = Truth::named("product", 2);
  const RegressionDataset data = simulate_dataset(truth, 0.8, 25, 2, 6);
  const double a = 6.5, b = 4.0;
  MeanFieldPosterior q(ModelDims(2, 1), InverseGammaFactor{std::log(a), std::log(b)});
  q.mean.setConstant(0.2);
  q.log_sd.setConstant(-700.0);
  const Network net = Network::unflatten(q.dims, q.mean);
  const double oracle = integrate_line(
      [&](double t) {
        const double log_q = a * std::log(b) - std::lgamma(a) - a * t - b * std::exp(-t);
        return std::exp(log_q) * log_likelihood(net, std::exp(0.5 * t), data);
      },
      -15.0, 15.0);
  const PriorSpec prior = InverseGammaSigma{1.0, 2.0, 1.0};
  const ElboEstimate e = elbo_estimate(q, prior, data, 4, 9);
  CHECK(e.expected_log_likelihood == Approx(oracle).epsilon(1e-9));
  CHECK(e.kl == Approx(kl_total(q, prior, 25)).epsilon(1e-14));
}

TEST_CASE("rho scale expectation matches quadrature within Monte Carlo error") {
  const Truth truth = Truth::named("sine", 1);
  const RegressionDataset data = simulate_dataset(truth, 1.0, 20, 1, 7);
  MeanFieldPosterior q(ModelDims(1, 1), GaussianFactor{0.5, std::log(0.3)});
  q.mean.setConstant(0.1);
  q.log_sd.setConstant(-700.0);
  const Network net = Network::unflatten(q.dims, q.mean);
  const double oracle = integrate_line(
      [&](double z) { return normal_pdf(z) * log_likelihood(net, softplus(0.5 + 0.3 * z), data); }, -12.0,
      12.0);
  const ElboEstimate e = elbo_estimate(q, RhoGaussian{1.0, 1.0}, data, 4000, 3);
  CHECK(std::abs(e.expected_log_likelihood - oracle) < 4.0 * e.standard_error);
}

TEST_CASE("standard error shrinks like S^(-1/2)") {
  const Truth truth = Truth::named("sine", 2);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 100, 2, 1);
  const MeanFieldPosterior q = perturbed_posterior(ModelDims(2, 3), FixedGaussian{1.0}, data, 4);
  std::vector<double> xs, ys;
  for (int s : {64, 256, 1024, 4096}) {
    double mean_se = 0.0;
    for (int rep = 0; rep < 4; ++rep) mean_se += elbo_estimate(q, FixedGaussian{1.0}, data, s, 10 + rep).standard_error;
    xs.push_back(std::log(s));
    ys.push_back(std::log(mean_se / 4));
  }
  const double xm = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double ym = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - xm) * (ys[i] - ym);
    sxx += (xs[i] - xm) * (xs[i] - xm);
  }
  CHECK(sxy / sxx == Approx(-0.5).epsilon(0.2));
}

TEST_CASE("gradient with zero likelihood weight is minus the KL gradient") {
  const Truth truth = Truth::named("additive", 2);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 40, 2, 2);
  for (const PriorSpec& prior : all_variants()) {
    CAPTURE(variant_name(prior));
    const MeanFieldPosterior q = perturbed_posterior(ModelDims(2, 2), prior, data, 8);
    const ElboGradient g = elbo_gradient(q, prior, data, 5, 1, 0.0);
    const Eigen::VectorXd expected = -kl_gradient(q, prior, data.size());
    CHECK((g.grad - expected).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
    CHECK(g.value == Approx(-kl_total(q, prior, data.size())).epsilon(1e-13));
  }
}

TEST_CASE("gradient agrees with central differences of the seeded estimator") {
  const Truth truth = Truth::named("sine", 2);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 60, 2, 3);
  for (const PriorSpec& prior : all_variants()) {
    CAPTURE(variant_name(prior));
    const MeanFieldPosterior q = perturbed_posterior(ModelDims(2, 2), prior, data, 5);
    const FiniteDifferenceReport r = finite_difference_check(q, prior, data, all_coords(q), 1e-5, 8, 17);
    CHECK(r.max_rel_error < 1e-5);
    const ElboGradient g = elbo_gradient(q, prior, data, 8, 17);
    CHECK(g.value == Approx(elbo_estimate(q, prior, data, 8, 17).value).epsilon(1e-13));
  }
}

TEST_CASE("difference error is larger for a coarse step") {
  const Truth truth = Truth::named("sine", 1);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 60, 1, 3);
  const PriorSpec prior = InverseGammaSigma{1.0, 2.0, 1.0};
  const MeanFieldPosterior q = perturbed_posterior(ModelDims(1, 2), prior, data, 5);
  const double fine = finite_difference_check(q, prior, data, all_coords(q), 1e-5).max_abs_error;
  const double coarse = finite_difference_check(q, prior, data, all_coords(q), 0.5).max_abs_error;
  const double tiny = finite_difference_check(q, prior, data, all_coords(q), 1e-13).max_abs_error;
  CHECK(fine < coarse);
  CHECK(fine < tiny);
}

TEST_CASE("fit is deterministic and reduces the predictor error") {
  const Network teacher = make_teacher(2, 1, 3.0, 7);
  const Truth truth(teacher);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 1000, 1, 11);
  const QuadratureRule rule = QuadratureRule::tensor_gauss_legendre(1, 128);
  const ModelDims dims(1, 4);
  TrainConfig cfg;
  cfg.iters = 600;
  cfg.step_size = 0.05;
  cfg.step_size_final = 0.005;
  cfg.seed = 3;
  const PriorSpec prior = InverseGammaSigma{1.0, 2.0, 1.0};
  const FitResult a = fit(prior, data, dims, cfg);
  const FitResult b = fit(prior, data, dims, cfg);
  CHECK(a.posterior.pack() == b.posterior.pack());
  CHECK(a.raw_elbo_trace == b.raw_elbo_trace);
  CHECK(a.iterations == static_cast<int>(a.raw_elbo_trace.size()));

  const MeanFieldPosterior init = initial_posterior(dims, prior, data, cfg.seed);
  const double before = predictor_l2_error(init, truth, rule);
  const double after = predictor_l2_error(a.posterior, truth, rule);
  CHECK(after < 0.25 * before);
  CHECK(a.elbo_trace.back() > a.elbo_trace.front());
  const double s2 = *posterior_point_summaries(a.posterior).sigma2_mean;
  CHECK(std::sqrt(s2) == Approx(0.5).epsilon(0.15));
}

TEST_CASE("with zero likelihood weight the fit returns to the prior") {
  const Truth truth = Truth::named("sine", 1);
  const RegressionDataset data = simulate_dataset(truth, 0.5, 50, 1, 3);
  for (const PriorSpec& prior : {PriorSpec(FixedGaussian{1.0}), PriorSpec(InverseGammaSigma{1.0, 2.0, 1.0}),
                                 PriorSpec(RhoGaussian{1.0, 1.0})}) {
    CAPTURE(variant_name(prior));
    TrainConfig cfg;
    cfg.iters = 4000;
    cfg.step_size = 0.05;
    cfg.step_size_final = 0.001;
    cfg.likelihood_weight = 0.0;
    cfg.convergence_tol = 0.0;
    const FitResult r = fit(prior, data, ModelDims(1, 2), cfg);
    CHECK(kl_total(r.posterior, prior, data.size()) < 1e-3);
  }
}

TEST_CASE("non-finite data raises NumericalError") {
  const Truth truth = Truth::named("sine", 1);
  RegressionDataset data = simulate_dataset(truth, 0.5, 20, 1, 3);
  data.ys[4] = NAN;
  TrainConfig cfg;
  cfg.iters = 10;
  try {
    fit(FixedGaussian{1.0}, data, ModelDims(1, 1), cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.iteration() == 0);
    CHECK(!e.parameter().empty());
  }
}

TEST_CASE("train config validation and parameter names") {
  TrainConfig cfg;
  cfg.mc_samples = 0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.step_size = -1.0;
  CHECK_THROWS(cfg.validate());
  const MeanFieldPosterior q(ModelDims(1, 1), InverseGammaFactor{});
  CHECK(parameter_name(q, 0) == "mean[0]");
  CHECK(parameter_name(q, q.free_parameter_count() - 1) == "log_rate");
}
