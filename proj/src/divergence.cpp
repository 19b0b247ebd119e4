#include "vbnn/divergence.hpp"

#include <algorithm>
#include <limits>

namespace vbnn {

namespace {

void check_scales(double sigma, double sigma0) {
  if (!(sigma > 0.0) || !(sigma0 > 0.0))
    throw std::invalid_argument("divergence: scales must be positive");
}

void check_sizes(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const QuadratureRule& rule) {
  if (a.size() != rule.size() || b.size() != rule.size())
    throw std::invalid_argument("divergence: values do not match the quadrature rule");
}

}  // namespace

BatchFunction as_batch(const Network& net) {
  return [net](const Eigen::MatrixXd& xs) { return network_eval_batch(net, xs); };
}

BatchFunction as_batch(const Truth& truth) {
  return [truth](const Eigen::MatrixXd& xs) { return truth.eval_batch(xs); };
}

double l2_sq_distance(const Eigen::VectorXd& f_vals, const Eigen::VectorXd& g_vals,
                      const QuadratureRule& rule) {
  check_sizes(f_vals, g_vals, rule);
  return rule.integrate((f_vals - g_vals).array().square().matrix());
}

double l2_sq_distance(const BatchFunction& f, const BatchFunction& g, const QuadratureRule& rule) {
  return l2_sq_distance(f(rule.points()), g(rule.points()), rule);
}

double kl_true_vs_model(const Eigen::VectorXd& f_theta_vals, double sigma,
                        const Eigen::VectorXd& f0_vals, double sigma0,
                        const QuadratureRule& rule) {
  check_scales(sigma, sigma0);
  const double ratio = sigma0 / sigma;
  return std::log(sigma / sigma0) - 0.5 + 0.5 * ratio * ratio +
         l2_sq_distance(f_theta_vals, f0_vals, rule) / (2.0 * sigma * sigma);
}

double kl_true_vs_model(const BatchFunction& f_theta, double sigma, const BatchFunction& f0,
                        double sigma0, const QuadratureRule& rule) {
  return kl_true_vs_model(f_theta(rule.points()), sigma, f0(rule.points()), sigma0, rule);
}

double hellinger_true_vs_model(const Eigen::VectorXd& f_theta_vals, double sigma,
                               const Eigen::VectorXd& f0_vals, double sigma0,
                               const QuadratureRule& rule) {
  check_scales(sigma, sigma0);
  check_sizes(f_theta_vals, f0_vals, rule);
  const double s2 = sigma * sigma + sigma0 * sigma0;
  const double scale_factor = std::sqrt(2.0 * sigma * sigma0 / s2);
  const Eigen::VectorXd overlap =
      (-(f_theta_vals - f0_vals).array().square() / (4.0 * s2)).exp().matrix();
  const double d = 2.0 - 2.0 * scale_factor * rule.integrate(overlap);
  return std::clamp(d, 0.0, 2.0);
}

double hellinger_true_vs_model(const BatchFunction& f_theta, double sigma,
                               const BatchFunction& f0, double sigma0,
                               const QuadratureRule& rule) {
  return hellinger_true_vs_model(f_theta(rule.points()), sigma, f0(rule.points()), sigma0, rule);
}

Eigen::VectorXd hellinger_draws(const MeanFieldPosterior& q, const Truth& truth, double sigma0,
                                int samples, std::uint64_t seed, const QuadratureRule& rule) {
  if (rule.dim() != q.dims.p)
    throw std::invalid_argument("hellinger_draws: rule dimension does not match posterior");
  const ReparamSample draws = sample_reparameterized(q, derive_seed(seed, Stream::TailMass), samples);
  const Eigen::VectorXd f0_vals = truth.eval_batch(rule.points());
  Eigen::VectorXd out(samples);
  for (int s = 0; s < samples; ++s) {
    const Network net = Network::unflatten(q.dims, draws.theta.row(s).transpose());
    out[s] = hellinger_true_vs_model(network_eval_batch(net, rule.points()), draws.sigma[s],
                                     f0_vals, sigma0, rule);
  }
  return out;
}

std::vector<TailMassEstimate> tail_mass_from_draws(const Eigen::VectorXd& distances,
                                                   const std::vector<double>& epsilons) {
  const auto s = static_cast<int>(distances.size());
  if (s < 1) throw std::invalid_argument("tail_mass_from_draws: no draws");
  std::vector<TailMassEstimate> out;
  out.reserve(epsilons.size());
  for (double eps : epsilons) {
    const auto hits = (distances.array() > eps).count();
    const double p = static_cast<double>(hits) / s;
    out.push_back({eps, p, std::sqrt(p * (1.0 - p) / s), s});
  }
  return out;
}

std::vector<TailMassEstimate> vp_tail_mass(const MeanFieldPosterior& q, const Truth& truth,
                                           double sigma0, const std::vector<double>& epsilons,
                                           int samples, std::uint64_t seed,
                                           const QuadratureRule& rule) {
  if (samples < 100) throw std::invalid_argument("vp_tail_mass: need at least 100 draws");
  return tail_mass_from_draws(hellinger_draws(q, truth, sigma0, samples, seed, rule), epsilons);
}

Eigen::VectorXd vb_predictor(const MeanFieldPosterior& q, const Eigen::MatrixXd& xs,
                             const PredictorMethod& method) {
  q.check();
  if (xs.cols() != q.dims.p)
    throw std::invalid_argument("vb_predictor: point dimension does not match posterior");
  if (const auto* mc = std::get_if<MonteCarloPredictor>(&method))
    return vb_predictor_mc(q, xs, *mc).value;

  const int nodes = std::get<GaussHermitePredictor>(method).nodes;
  const Rule1D gh = gauss_hermite_normal(nodes);
  const Network mean = q.mean_network();
  const Network var = Network::unflatten(q.dims, (2.0 * q.log_sd.array()).exp().matrix());

  Eigen::MatrixXd xt(xs.rows(), xs.cols() + 1);
  xt.col(0).setOnes();
  xt.rightCols(xs.cols()) = xs;
  const Eigen::ArrayXXd mu = xt * mean.gamma.transpose();
  const Eigen::ArrayXXd sd = (xt.array().square().matrix() * var.gamma.transpose()).array().sqrt();
  Eigen::ArrayXXd e_psi = Eigen::ArrayXXd::Zero(mu.rows(), mu.cols());
  for (int i = 0; i < nodes; ++i)
    e_psi += gh.weights[i] * (mu + sd * gh.nodes[i]).unaryExpr([](double u) { return logistic(u); });
  Eigen::VectorXd out = e_psi.matrix() * mean.beta;
  out.array() += mean.beta0;
  return out;
}

PredictorWithError vb_predictor_mc(const MeanFieldPosterior& q, const Eigen::MatrixXd& xs,
                                   const MonteCarloPredictor& mc) {
  if (mc.samples < 2) throw std::invalid_argument("vb_predictor_mc: need at least 2 draws");
  const ReparamSample draws =
      sample_reparameterized(q, derive_seed(mc.seed, Stream::Predictor), mc.samples);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(xs.rows());
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(xs.rows());
  for (int s = 0; s < mc.samples; ++s) {
    const Network net = Network::unflatten(q.dims, draws.theta.row(s).transpose());
    const Eigen::VectorXd f = network_eval_batch(net, xs);
    sum += f;
    sum_sq += f.cwiseAbs2();
  }
  const double s = mc.samples;
  PredictorWithError out;
  out.value = sum / s;
  const Eigen::ArrayXd var =
      ((sum_sq.array() - s * out.value.array().square()) / (s - 1.0)).max(0.0);
  out.standard_error = (var / s).sqrt().matrix();
  return out;
}

double predictor_l2_error(const MeanFieldPosterior& q, const Truth& f0,
                          const QuadratureRule& rule, const PredictorMethod& method) {
  return l2_sq_distance(vb_predictor(q, rule.points(), method), f0.eval_batch(rule.points()),
                        rule);
}

double hellinger_vb_average(const MeanFieldPosterior& q, const Truth& f0, double sigma0,
                            const QuadratureRule& rule) {
  const PointSummaries ps = posterior_point_summaries(q);
  if (!ps.sigma2_defined || !ps.sigma2_mean) return std::numeric_limits<double>::quiet_NaN();
  return hellinger_true_vs_model(vb_predictor(q, rule.points()), std::sqrt(*ps.sigma2_mean),
                                 f0.eval_batch(rule.points()), sigma0, rule);
}

}  // namespace vbnn
