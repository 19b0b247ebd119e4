#include "vbnn/meanfield.hpp"

#include "vbnn/quadrature.hpp"
#include "vbnn/special.hpp"

namespace vbnn {

ScaleKind MeanFieldPosterior::kind() const noexcept {
  if (std::holds_alternative<InverseGammaFactor>(scale)) return ScaleKind::InverseGamma;
  if (std::holds_alternative<GaussianFactor>(scale)) return ScaleKind::Rho;
  return ScaleKind::Known;
}

int MeanFieldPosterior::free_parameter_count() const noexcept {
  return 2 * param_count() + (kind() == ScaleKind::Known ? 0 : 2);
}

Eigen::VectorXd MeanFieldPosterior::pack() const {
  const int k = param_count();
  Eigen::VectorXd flat(free_parameter_count());
  flat.head(k) = mean;
  flat.segment(k, k) = log_sd;
  if (const auto* ig = std::get_if<InverseGammaFactor>(&scale)) {
    flat[2 * k] = ig->log_a;
    flat[2 * k + 1] = ig->log_b;
  } else if (const auto* rho = std::get_if<GaussianFactor>(&scale)) {
    flat[2 * k] = rho->m;
    flat[2 * k + 1] = rho->log_s;
  }
  return flat;
}

void MeanFieldPosterior::unpack(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != free_parameter_count())
    throw std::invalid_argument("MeanFieldPosterior::unpack: wrong length");
  const int k = param_count();
  mean = flat.head(k);
  log_sd = flat.segment(k, k);
  if (auto* ig = std::get_if<InverseGammaFactor>(&scale)) {
    ig->log_a = flat[2 * k];
    ig->log_b = flat[2 * k + 1];
  } else if (auto* rho = std::get_if<GaussianFactor>(&scale)) {
    rho->m = flat[2 * k];
    rho->log_s = flat[2 * k + 1];
  }
}

void MeanFieldPosterior::check() const {
  if (mean.size() != dims.param_count() || log_sd.size() != dims.param_count())
    throw std::invalid_argument("MeanFieldPosterior: factor count does not match dims");
  if (const auto* known = std::get_if<KnownScale>(&scale); known && !(known->sigma > 0.0))
    throw std::invalid_argument("MeanFieldPosterior: known sigma must be positive");
}

ReparamSample sample_reparameterized(const MeanFieldPosterior& q, std::uint64_t seed,
                                     int count) {
  if (count < 1) throw std::invalid_argument("sample_reparameterized: count must be >= 1");
  q.check();
  const int k = q.param_count();
  Rng rng(derive_seed(seed, Stream::Train));
  ReparamSample out{Eigen::MatrixXd(count, k), Eigen::MatrixXd(count, k),
                    Eigen::VectorXd(count), Eigen::VectorXd::Zero(count)};
  const Eigen::RowVectorXd sd = q.sd().transpose();
  // Weight noise first so it does not depend on the scale factor's parameters.
  for (int s = 0; s < count; ++s)
    for (int i = 0; i < k; ++i) out.eps(s, i) = rng.normal();
  for (int s = 0; s < count; ++s) {
    if (const auto* ig = std::get_if<InverseGammaFactor>(&q.scale)) {
      const double g = rng.gamma(ig->a());
      out.scale_base[s] = g;
      out.sigma[s] = std::sqrt(ig->b() / g);
    } else if (const auto* rho = std::get_if<GaussianFactor>(&q.scale)) {
      const double e = rng.normal();
      out.scale_base[s] = e;
      out.sigma[s] = softplus(rho->m + rho->s() * e);
    } else {
      out.sigma[s] = std::get<KnownScale>(q.scale).sigma;
    }
  }
  out.theta = (out.eps.array().rowwise() * sd.array()).matrix();
  out.theta.rowwise() += q.mean.transpose();
  return out;
}

double kl_gaussian(double m, double s, double prior_sd) noexcept {
  return std::log(prior_sd / s) + (s * s + m * m) / (2.0 * prior_sd * prior_sd) - 0.5;
}

double kl_weights_gaussian(const MeanFieldPosterior& q, const PriorSpec& spec, int n) {
  q.check();
  const double zeta_n = weight_prior_sd(spec, n);
  double total = 0.0;
  for (int i = 0; i < q.param_count(); ++i) total += kl_gaussian(q.mean[i], std::exp(q.log_sd[i]), zeta_n);
  return total;
}

double kl_scale_inverse_gamma(const InverseGammaFactor& q, double alpha, double lambda) {
  if (!(alpha > 0.0 && lambda > 0.0))
    throw std::invalid_argument("kl_scale_inverse_gamma: alpha and lambda must be positive");
  const double a = q.a(), b = q.b();
  return (a - alpha) * digamma(a) - std::lgamma(a) + std::lgamma(alpha) +
         alpha * (q.log_b - std::log(lambda)) + (lambda - b) * a / b;
}

double kl_scale_rho(const GaussianFactor& q, double eta) noexcept {
  return kl_gaussian(q.m, q.s(), eta);
}

double kl_total(const MeanFieldPosterior& q, const PriorSpec& spec, int n) {
  if (q.kind() != scale_kind(spec))
    throw std::invalid_argument("kl_total: posterior and prior variants differ");
  double total = kl_weights_gaussian(q, spec, n);
  if (const auto* ig = std::get_if<InverseGammaFactor>(&q.scale)) {
    const auto& p = std::get<InverseGammaSigma>(spec);
    total += kl_scale_inverse_gamma(*ig, p.alpha, p.lambda);
  } else if (const auto* rho = std::get_if<GaussianFactor>(&q.scale)) {
    total += kl_scale_rho(*rho, std::get<RhoGaussian>(spec).eta);
  }
  return total;
}

double kl_analysis_family(const Eigen::VectorXd& theta0, double tau, double zeta, int n) {
  if (!(tau > 0.0 && zeta > 0.0) || n < 1)
    throw std::invalid_argument("kl_analysis_family: need tau, zeta > 0 and n >= 1");
  const auto k = static_cast<double>(theta0.size());
  const double nd = static_cast<double>(n);
  return 0.5 * k * std::log(nd) + k * (std::log(zeta / tau) - 0.5) +
         theta0.squaredNorm() / (2.0 * zeta * zeta) + k * tau * tau / (2.0 * zeta * zeta * nd);
}

double kl_to_analysis_family(const MeanFieldPosterior& q, const Eigen::VectorXd& theta0, double tau,
                             int n) {
  q.check();
  if (theta0.size() != q.param_count())
    throw std::invalid_argument("kl_to_analysis_family: theta0 has the wrong length");
  if (!(tau > 0.0) || n < 1) throw std::invalid_argument("kl_to_analysis_family: need tau > 0 and n >= 1");
  const double sd = tau / std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd s = q.sd();
  double total = 0.0;
  for (int i = 0; i < q.param_count(); ++i) total += kl_gaussian(q.mean[i] - theta0[i], s[i], sd);
  return total;
}

PointSummaries posterior_point_summaries(const MeanFieldPosterior& q, int gh_nodes) {
  q.check();
  PointSummaries out{q.mean_network(), std::nullopt, true};
  if (const auto* known = std::get_if<KnownScale>(&q.scale)) {
    out.sigma2_mean = known->sigma * known->sigma;
  } else if (const auto* ig = std::get_if<InverseGammaFactor>(&q.scale)) {
    if (ig->a() > 1.0) {
      out.sigma2_mean = ig->b() / (ig->a() - 1.0);
    } else {
      out.sigma2_defined = false;
    }
  } else {
    const auto& rho = std::get<GaussianFactor>(q.scale);
    const Rule1D gh = gauss_hermite_normal(gh_nodes);
    double acc = 0.0;
    for (int i = 0; i < gh_nodes; ++i) {
      const double sp = softplus(rho.m + rho.s() * gh.nodes[i]);
      acc += gh.weights[i] * sp * sp;
    }
    out.sigma2_mean = acc;
  }
  return out;
}

MeanFieldPosterior initial_posterior(const ModelDims& dims, const PriorSpec& spec,
                                     const RegressionDataset& data, std::uint64_t seed) {
  validate(spec);
  MeanFieldPosterior q(dims, KnownScale{data.sigma0});
  Rng rng(derive_seed(seed, Stream::Init));
  for (int i = 0; i < q.param_count(); ++i) q.mean[i] = 0.1 * rng.normal();
  q.log_sd.setConstant(std::log(0.1));
  if (scale_kind(spec) == ScaleKind::Known) return q;

  const double n = static_cast<double>(data.size());
  double ssr = 0.0;
  if (data.size() > 0) ssr = (data.ys - network_eval_batch(q.mean_network(), data.xs)).squaredNorm();
  if (const auto* ig = std::get_if<InverseGammaSigma>(&spec)) {
    q.scale = InverseGammaFactor{std::log(0.5 * n + ig->alpha), std::log(ig->lambda + 0.5 * ssr)};
  } else {
    const double sigma_init = n > 0 ? std::max(std::sqrt(ssr / n), 1e-3) : 1.0;
    // Inverse softplus; for large sigma it is sigma itself to double precision.
    const double m = sigma_init > 30.0 ? sigma_init : std::log(std::expm1(sigma_init));
    q.scale = GaussianFactor{m, std::log(0.1)};
  }
  return q;
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const nlohmann::json& arr, Eigen::Index expected, const char* what) {
  const auto v = arr.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != expected)
    throw std::invalid_argument(std::string("posterior JSON: wrong length for ") + what);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

constexpr int kFormatVersion = 1;

}  // namespace

nlohmann::json to_json(const MeanFieldPosterior& q) {
  q.check();
  nlohmann::json scale;
  if (const auto* known = std::get_if<KnownScale>(&q.scale)) {
    scale = {{"kind", "known"}, {"sigma", known->sigma}};
  } else if (const auto* ig = std::get_if<InverseGammaFactor>(&q.scale)) {
    scale = {{"kind", "inverse_gamma"}, {"log_shape", ig->log_a}, {"log_rate", ig->log_b}};
  } else {
    const auto& rho = std::get<GaussianFactor>(q.scale);
    scale = {{"kind", "rho"}, {"mean", rho.m}, {"log_sd", rho.log_s}};
  }
  return {{"format", "vbnn.meanfield"},
          {"version", kFormatVersion},
          {"p", q.dims.p},
          {"k", q.dims.k},
          {"order", "beta0, beta_1..beta_k, then gamma_j0..gamma_jp for j = 1..k"},
          {"weights", {{"mean", to_vec(q.mean)}, {"log_sd", to_vec(q.log_sd)}}},
          {"scale", scale}};
}

MeanFieldPosterior posterior_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "vbnn.meanfield")
    throw std::invalid_argument("posterior JSON: not a vbnn.meanfield document");
  if (doc.at("version").get<int>() != kFormatVersion)
    throw std::invalid_argument("posterior JSON: unsupported version");
  const ModelDims dims(doc.at("p").get<int>(), doc.at("k").get<int>());
  const auto& sc = doc.at("scale");
  const std::string kind = sc.at("kind").get<std::string>();
  ScaleFactor scale;
  if (kind == "known") {
    scale = KnownScale{sc.at("sigma").get<double>()};
  } else if (kind == "inverse_gamma") {
    scale = InverseGammaFactor{sc.at("log_shape").get<double>(), sc.at("log_rate").get<double>()};
  } else if (kind == "rho") {
    scale = GaussianFactor{sc.at("mean").get<double>(), sc.at("log_sd").get<double>()};
  } else {
    throw std::invalid_argument("posterior JSON: unknown scale kind '" + kind + "'");
  }
  MeanFieldPosterior q(dims, scale);
  q.mean = from_vec(doc.at("weights").at("mean"), dims.param_count(), "mean");
  q.log_sd = from_vec(doc.at("weights").at("log_sd"), dims.param_count(), "log_sd");
  q.check();
  return q;
}

}  // namespace vbnn
