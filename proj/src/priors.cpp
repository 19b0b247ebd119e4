#include "vbnn/priors.hpp"

#include "vbnn/divergence.hpp"
#include "vbnn/special.hpp"

#include <algorithm>
#include <limits>

namespace vbnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string("prior: ") + what + " must be positive and finite");
}

double log_normal_density(double x, double sd) {
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * (x / sd) * (x / sd);
}

// Least-squares slope of ys against xs.
double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace

ScaleKind scale_kind(const PriorSpec& spec) noexcept {
  return std::visit(Overloaded{[](const InverseGammaSigma&) { return ScaleKind::InverseGamma; },
                               [](const RhoGaussian&) { return ScaleKind::Rho; },
                               [](const auto&) { return ScaleKind::Known; }},
                    spec);
}

std::string variant_name(const PriorSpec& spec) {
  return std::visit(Overloaded{[](const FixedGaussian&) { return "fixed_gaussian"; },
                               [](const ScaledGaussian&) { return "scaled_gaussian"; },
                               [](const InverseGammaSigma&) { return "inverse_gamma"; },
                               [](const RhoGaussian&) { return "rho_gaussian"; }},
                    spec);
}

void validate(const PriorSpec& spec) {
  std::visit(Overloaded{[](const FixedGaussian& s) { require_positive(s.zeta, "zeta"); },
                        [](const ScaledGaussian& s) {
                          require_positive(s.zeta, "zeta");
                          require_positive(s.u, "u");
                        },
                        [](const InverseGammaSigma& s) {
                          require_positive(s.zeta, "zeta");
                          require_positive(s.alpha, "alpha");
                          require_positive(s.lambda, "lambda");
                        },
                        [](const RhoGaussian& s) {
                          require_positive(s.zeta, "zeta");
                          require_positive(s.eta, "eta");
                        }},
             spec);
}

double weight_prior_sd(const PriorSpec& spec, int n) {
  if (n < 1) throw std::invalid_argument("weight_prior_sd: n must be >= 1");
  validate(spec);
  return std::visit(Overloaded{[n](const ScaledGaussian& s) {
                                 return s.zeta * std::pow(static_cast<double>(n), 0.5 * s.u);
                               },
                               [](const auto& s) { return s.zeta; }},
                    spec);
}

void SieveSpec::validate(ScaleKind kind) const {
  if (!(a > 0.0 && a < b && b < 1.0))
    throw std::invalid_argument("SieveSpec: need 0 < a < b < 1");
  if (kind == ScaleKind::Rho && !(a < 0.5 && b > a + 0.5))
    throw std::invalid_argument("SieveSpec: the rho variant needs a < 1/2 and b > a + 1/2");
}

SieveBounds sieve_bounds(const SieveSpec& sieve, int n) {
  if (n < 1) throw std::invalid_argument("sieve_bounds: n must be >= 1");
  const double nd = static_cast<double>(n);
  // Guard the ceiling against n^a landing a hair above an integer.
  const int k_n = std::max(1, static_cast<int>(std::ceil(std::pow(nd, sieve.a) - 1e-12)));
  return {k_n, std::pow(nd, sieve.b - sieve.a), std::pow(nd, sieve.b)};
}

double log_prior_density(const PriorSpec& spec, int n, const Network& params,
                         std::optional<double> scale_param) {
  return log_prior_density(spec, n, params.flatten(), scale_param);
}

double log_prior_density(const PriorSpec& spec, int n, const Eigen::VectorXd& flat,
                         std::optional<double> scale_param) {
  const ScaleKind kind = scale_kind(spec);
  if (kind == ScaleKind::Known && scale_param)
    throw std::invalid_argument("log_prior_density: this prior takes no scale parameter");
  if (kind != ScaleKind::Known && !scale_param)
    throw std::invalid_argument("log_prior_density: scale parameter required");
  const double sd = weight_prior_sd(spec, n);
  const auto count = static_cast<double>(flat.size());
  double out = -0.5 * count * kLogTwoPi - count * std::log(sd) - 0.5 * flat.squaredNorm() / (sd * sd);
  if (const auto* ig = std::get_if<InverseGammaSigma>(&spec)) {
    const double s2 = *scale_param;
    if (!(s2 > 0.0)) throw std::invalid_argument("log_prior_density: sigma^2 must be positive");
    out += ig->alpha * std::log(ig->lambda) - std::lgamma(ig->alpha) -
           (ig->alpha + 1.0) * std::log(s2) - ig->lambda / s2;
  } else if (const auto* rho = std::get_if<RhoGaussian>(&spec)) {
    out += log_normal_density(*scale_param, rho->eta);
  }
  return out;
}

PriorDraw sample_prior(const PriorSpec& spec, int n, const ModelDims& dims, std::uint64_t seed) {
  const double sd = weight_prior_sd(spec, n);
  Rng rng(derive_seed(seed, Stream::Prior));
  Eigen::VectorXd flat(dims.param_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = sd * rng.normal();
  PriorDraw draw{Network::unflatten(dims, flat), std::nullopt};
  if (const auto* ig = std::get_if<InverseGammaSigma>(&spec)) {
    draw.scale_param = ig->lambda / rng.gamma(ig->alpha);
  } else if (const auto* rho = std::get_if<RhoGaussian>(&spec)) {
    draw.scale_param = rho->eta * rng.normal();
  }
  return draw;
}

double log_gaussian_two_sided_tail(double log_threshold, double sd) {
  require_positive(sd, "sd");
  if (log_threshold == kNegInf) return 0.0;
  return std::log(2.0) + log_normal_sf(std::exp(log_threshold - std::log(sd)));
}

double log_inverse_gamma_outside(double alpha, double lambda, double log_lower,
                                 double log_upper) {
  require_positive(alpha, "alpha");
  require_positive(lambda, "lambda");
  if (log_lower > log_upper)
    throw std::invalid_argument("log_inverse_gamma_outside: empty interval");
  // sigma^2 < L  <=>  1/sigma^2 > 1/L, with 1/sigma^2 ~ Gamma(alpha, rate lambda).
  const double below = log_gamma_q(alpha, lambda * std::exp(-log_lower));
  const double above = log_gamma_p(alpha, lambda * std::exp(-log_upper));
  return log_add_exp(below, above);
}

namespace {

// log tail of the scale coordinate outside its sieve constraint.
double log_scale_tail(const PriorSpec& spec, double log_c, double log_d) {
  if (const auto* ig = std::get_if<InverseGammaSigma>(&spec))
    return log_inverse_gamma_outside(ig->alpha, ig->lambda, -2.0 * log_c, log_d);
  if (const auto* rho = std::get_if<RhoGaussian>(&spec))
    return log_gaussian_two_sided_tail(std::log(log_c), rho->eta);
  return kNegInf;
}

}  // namespace

double log_prior_mass_outside_box(const PriorSpec& spec, int n, int param_count, double log_c,
                                  double log_d) {
  if (param_count < 1) throw std::invalid_argument("prior mass: param_count must be >= 1");
  const double sd = weight_prior_sd(spec, n);
  const double weights = std::log(static_cast<double>(param_count)) +
                         log_gaussian_two_sided_tail(log_c, sd);
  return log_add_exp(weights, log_scale_tail(spec, log_c, log_d));
}

double log_prior_mass_outside_sieve(const PriorSpec& spec, const SieveSpec& sieve, int n,
                                    int p) {
  const SieveBounds b = sieve_bounds(sieve, n);
  return log_prior_mass_outside_box(spec, n, ModelDims(p, b.k_n).param_count(), b.log_c,
                                    b.log_d);
}

double log_prior_mass_outside_sieve_exact(const PriorSpec& spec, const SieveSpec& sieve, int n,
                                          int p) {
  const SieveBounds b = sieve_bounds(sieve, n);
  const int count = ModelDims(p, b.k_n).param_count();
  const double lw = log_gaussian_two_sided_tail(b.log_c, weight_prior_sd(spec, n));
  const double ls = log_scale_tail(spec, b.log_c, b.log_d);
  // Far in the tail 1 - prod(1 - t_i) equals sum t_i to double precision.
  if (std::max(lw, ls) < -700.0)
    return log_add_exp(std::log(static_cast<double>(count)) + lw, ls);
  // log P(inside) = count * log1p(-t_w) + log1p(-t_s).
  const double log_inside = count * std::log1p(-std::exp(lw)) + std::log1p(-std::exp(ls));
  if (log_inside == kNegInf) return 0.0;
  return std::log(-std::expm1(log_inside));
}

bool inside_sieve(const PriorSpec& spec, const SieveBounds& bounds, const Network& params,
                  std::optional<double> scale_param) {
  const Eigen::VectorXd flat = params.flatten();
  const double log_max = std::log(flat.cwiseAbs().maxCoeff());
  if (log_max > bounds.log_c) return false;
  switch (scale_kind(spec)) {
    case ScaleKind::Known:
      return true;
    case ScaleKind::InverseGamma: {
      if (!scale_param) throw std::invalid_argument("inside_sieve: sigma^2 required");
      const double ls2 = std::log(*scale_param);
      return ls2 >= -2.0 * bounds.log_c && ls2 <= bounds.log_d;
    }
    case ScaleKind::Rho:
      if (!scale_param) throw std::invalid_argument("inside_sieve: rho required");
      return std::abs(*scale_param) <= bounds.log_c;
  }
  return true;
}

AssumptionReport assumption_report(const Network& teacher, const Truth& f0,
                                   const SieveSpec& sieve, const std::vector<int>& n_grid,
                                   const QuadratureRule& rule, std::optional<double> prior_u) {
  if (n_grid.empty()) throw std::invalid_argument("assumption_report: empty n grid");
  if (teacher.p() != rule.dim())
    throw std::invalid_argument("assumption_report: rule dimension does not match teacher");
  AssumptionReport rep;
  rep.sum_sq_theta0 = teacher.sum_squares();
  const Eigen::VectorXd f0_vals = f0.eval_batch(rule.points());

  std::vector<double> log_n, log_err, log_ss;
  bool err_vanishes = true;
  for (int n : n_grid) {
    const SieveBounds b = sieve_bounds(sieve, n);
    const Network theta0n = pad_hidden_nodes(teacher, std::max(teacher.k(), b.k_n));
    const double err = l2_sq_distance(network_eval_batch(theta0n, rule.points()), f0_vals, rule);
    rep.a1_l2_error.emplace_back(n, err);
    log_n.push_back(std::log(static_cast<double>(n)));
    if (err > 1e-28) err_vanishes = false;
    log_err.push_back(std::log(std::max(err, 1e-300)));
    log_ss.push_back(std::log(std::max(theta0n.sum_squares(), 1e-300)));
  }
  const bool multi = n_grid.size() >= 2;
  rep.sum_sq_growth = (multi && rep.sum_sq_theta0 > 0.0) ? ls_slope(log_n, log_ss) : 0.0;
  rep.a1_decay = (multi && !err_vanishes) ? -ls_slope(log_n, log_err) : 0.0;

  // ||.||_2 = o(n^-delta) needs the squared error to decay faster than n^(-2 delta).
  double hi = std::min(1.0 - sieve.a, 1.0 - rep.sum_sq_growth);
  if (!err_vanishes) hi = std::min(hi, 0.5 * rep.a1_decay);
  rep.delta_lo = 0.0;
  rep.delta_hi = std::max(hi, 0.0);
  rep.a2_satisfied = rep.sum_sq_growth < 1.0 && rep.delta_hi > rep.delta_lo;
  rep.a3_v = std::max(1.0, rep.sum_sq_growth);
  rep.a3_satisfied = std::isfinite(rep.sum_sq_growth);
  if (prior_u) rep.u_exceeds_v = *prior_u > rep.a3_v;
  return rep;
}

}  // namespace vbnn
