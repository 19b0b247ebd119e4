#include "vbnn/lemmas.hpp"

#include "vbnn/divergence.hpp"
#include "vbnn/special.hpp"

#include <algorithm>
#include <cstdio>
#include <numbers>

namespace vbnn {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// Non-finite doubles are written as null.
double number_or_nan(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

// softplus(rho) - softplus(rho0) without cancellation.
double softplus_diff(double rho, double rho0) {
  if (std::abs(rho - rho0) > 1.0) return softplus(rho) - softplus(rho0);
  return std::log1p(logistic(rho0) * std::expm1(rho - rho0));
}

}  // namespace

void LemmaReport::check_le(const std::string& name, double measured, double limit) {
  const double excess = std::isnan(measured) ? std::numeric_limits<double>::infinity()
                                             : measured - limit;
  checks.push_back({name, measured, limit, excess});
  if (excess > max_violation) {
    max_violation = excess;
    details = name + fmt(": measured %.10g, limit %.10g", measured, limit);
  }
}

void LemmaReport::check_ge(const std::string& name, double measured, double limit) {
  const double excess = std::isnan(measured) ? std::numeric_limits<double>::infinity()
                                             : limit - measured;
  checks.push_back({name, measured, limit, excess});
  if (excess > max_violation) {
    max_violation = excess;
    details = name + fmt(": measured %.10g, lower limit %.10g", measured, limit);
  }
}

void LemmaReport::finish() { pass = max_violation <= tolerance; }

nlohmann::json to_json(const LemmaReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name}, {"measured", c.measured}, {"limit", c.limit},
                      {"excess", c.excess}});
  return {{"lemma_id", report.lemma_id},     {"instances_checked", report.instances_checked},
          {"max_violation", report.max_violation}, {"tolerance", report.tolerance},
          {"details", report.details},       {"pass", report.pass},
          {"checks", checks}};
}

LemmaReport lemma_report_from_json(const nlohmann::json& doc) {
  LemmaReport r;
  r.lemma_id = doc.at("lemma_id").get<std::string>();
  r.instances_checked = doc.at("instances_checked").get<int>();
  // JSON has no infinities; a report without checks stores null.
  const auto& mv = doc.at("max_violation");
  r.max_violation = mv.is_number() ? mv.get<double>() : -std::numeric_limits<double>::infinity();
  r.tolerance = doc.at("tolerance").get<double>();
  r.details = doc.at("details").get<std::string>();
  r.pass = doc.at("pass").get<bool>();
  for (const auto& c : doc.value("checks", nlohmann::json::array()))
    r.checks.push_back({c.at("name").get<std::string>(), number_or_nan(c.at("measured")),
                        number_or_nan(c.at("limit")), number_or_nan(c.at("excess"))});
  return r;
}

double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("log_log_slope: need two or more paired points");
  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw std::invalid_argument("log_log_slope: values must be positive");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= m;
  my /= m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("log_log_slope: x values are all equal");
  return sxy / sxx;
}

LemmaReport verify_mod_kl(int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_mod_kl: trials must be >= 1");
  LemmaReport rep;
  rep.lemma_id = "mod_kl";
  Rng rng(derive_seed(seed, Stream::Oracle, {1}));
  for (int t = 0; t < trials; ++t) {
    double mp = 0.0, sp = 1.0, mq = 0.0, sq = 1.0;
    if (t > 0) {  // trial 0 is p = q
      mp = rng.uniform(-3.0, 3.0);
      mq = rng.uniform(-3.0, 3.0);
      sp = std::exp(rng.uniform(std::log(0.3), std::log(3.0)));
      sq = std::exp(rng.uniform(std::log(0.3), std::log(3.0)));
    }
    auto integrand = [&](double x) {
      const double zp = (x - mp) / sp, zq = (x - mq) / sq;
      const double log_ratio = std::log(sq / sp) - 0.5 * zp * zp + 0.5 * zq * zq;
      return normal_pdf(zp) / sp * std::abs(log_ratio);
    };
    const double lhs = integrate_real_line(integrand, mp, sp, 1e-13, 1e-12).value;
    const double kl = std::log(sq / sp) + (sp * sp + (mp - mq) * (mp - mq)) / (2.0 * sq * sq) - 0.5;
    const double excess = lhs - (kl + 2.0 / std::numbers::e);
    if (excess > rep.max_violation) {
      rep.max_violation = excess;
      rep.details = fmt("p = N(%.4g, %.4g^2), q = N(%.4g, %.4g^2)", mp, sp, mq, sq) +
                    fmt(": E_p|log p/q| = %.10g, KL + 2/e = %.10g", lhs, kl + 2.0 / std::numbers::e);
    }
    ++rep.instances_checked;
  }
  rep.checks.push_back({"E_p|log p/q| - KL - 2/e (worst)", rep.max_violation, 0.0, rep.max_violation});
  rep.tolerance = 1e-8;
  rep.finish();
  return rep;
}

LemmaReport verify_theta_bound(int trials, const ModelDims& dims,
                               const std::vector<double>& eps_grid, std::uint64_t seed) {
  LemmaReport rep;
  rep.lemma_id = "theta_bound";
  std::vector<double> grid;
  for (double e : eps_grid)
    if (e >= 0.0 && (dims.p + 1) * e < 1.0) grid.push_back(e);
  if (grid.empty()) throw std::invalid_argument("verify_theta_bound: no admissible eps");
  const QuadratureRule rule = QuadratureRule::default_for(dims.p);
  Rng rng(derive_seed(seed, Stream::Oracle, {2}));
  for (int t = 0; t < trials; ++t) {
    const double eps = grid[static_cast<std::size_t>(t) % grid.size()];
    const double scale = std::exp(rng.uniform(std::log(0.1), std::log(5.0)));
    Eigen::VectorXd theta0(dims.param_count()), theta(dims.param_count());
    const bool corners = t % 2 == 1;  // alternate interior and corner perturbations
    for (Eigen::Index i = 0; i < theta0.size(); ++i) {
      theta0[i] = scale * rng.uniform(-1.0, 1.0);
      const double u = rng.uniform(-1.0, 1.0);
      theta[i] = theta0[i] + eps * (corners ? (u < 0 ? -1.0 : 1.0) : u);
    }
    const Network net0 = Network::unflatten(dims, theta0);
    const Network net = Network::unflatten(dims, theta);
    const double lhs = l2_sq_distance(network_eval_batch(net, rule.points()),
                                      network_eval_batch(net0, rule.points()), rule);
    const double abs_beta = net0.beta.cwiseAbs().sum();
    const double k = dims.k, pp1 = dims.p + 1;
    const double rhs = 8.0 * (k * k + pp1 * pp1 * abs_beta * abs_beta) * eps * eps;
    const double excess = lhs - rhs;
    if (excess > rep.max_violation) {
      rep.max_violation = excess;
      rep.details = fmt("eps %.4g, teacher scale %.4g: lhs %.10g, rhs %.10g", eps, scale, lhs, rhs);
    }
    ++rep.instances_checked;
  }
  rep.checks.push_back({"lhs - rhs (worst)", rep.max_violation, 0.0, rep.max_violation});
  rep.tolerance = 1e-14;
  rep.finish();
  return rep;
}

LemmaReport verify_sig_rho_bounds(const std::vector<double>& delta_grid, double sigma0,
                                  const std::vector<double>& rho0_grid, int points_per_band) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("verify_sig_rho_bounds: sigma0 must be positive");
  if (points_per_band < 1) throw std::invalid_argument("verify_sig_rho_bounds: need grid points");
  LemmaReport rep;
  rep.lemma_id = "sig_rho_bounds";
  auto h1_of_ratio = [](double x) { return std::log(x) - 0.5 * (1.0 - 1.0 / (x * x)); };

  for (double delta : delta_grid) {
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("verify_sig_rho_bounds: delta must lie in (0, 1)");
    const double h2_limit = 1.0 / (2.0 * sigma0 * sigma0 * (1.0 - delta) * (1.0 - delta));
    double h1_max = 0.0, h2_max = 0.0, worst_x = 1.0;
    for (int i = 0; i < points_per_band; ++i) {
      // Open band: midpoints of an even partition of (1 - delta, 1 + delta).
      const double x = 1.0 - delta + 2.0 * delta * (i + 0.5) / points_per_band;
      const double h1 = h1_of_ratio(x);
      if (h1 > h1_max) {
        h1_max = h1;
        worst_x = x;
      }
      h2_max = std::max(h2_max, 1.0 / (2.0 * sigma0 * sigma0 * x * x));
      ++rep.instances_checked;
    }
    rep.check_le(fmt("sigma h1, delta %.2g (worst sigma/sigma0 %.6g)", delta, worst_x), h1_max,
                 delta * delta);
    rep.check_le(fmt("sigma h2, delta %.2g", delta), h2_max, h2_limit);

    for (double rho0 : rho0_grid) {
      const double s0 = softplus(rho0);
      const double lim2 = 1.0 / (2.0 * s0 * s0 * (1.0 - delta) * (1.0 - delta));
      double r1 = 0.0, r2 = 0.0, worst_rho = rho0;
      for (int i = 0; i < points_per_band; ++i) {
        const double rho = rho0 - delta * s0 + 2.0 * delta * s0 * (i + 0.5) / points_per_band;
        const double x = 1.0 + softplus_diff(rho, rho0) / s0;
        const double h1 = h1_of_ratio(x);
        if (h1 > r1) {
          r1 = h1;
          worst_rho = rho;
        }
        r2 = std::max(r2, 1.0 / (2.0 * s0 * s0 * x * x));
        ++rep.instances_checked;
      }
      rep.check_le(fmt("rho h1, delta %.2g, rho0 %.4g (worst rho %.6g)", delta, rho0, worst_rho),
                   r1, delta * delta);
      rep.check_le(fmt("rho h2, delta %.2g, rho0 %.4g", delta, rho0), r2, lim2);
    }
  }
  rep.tolerance = 1e-12;
  rep.finish();
  return rep;
}

LemmaReport verify_ig_expectation_identities(const std::vector<int>& n_grid, double sigma0) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("verify_ig_expectation_identities: bad sigma0");
  LemmaReport rep;
  rep.lemma_id = "ig_expectations";
  std::vector<double> ns, eh;
  const double s2 = sigma0 * sigma0;
  for (int n : n_grid) {
    if (n < 2) throw std::invalid_argument("verify_ig_expectation_identities: n must be >= 2");
    const double nd = n;
    // u = log(sigma0^2 / sigma^2); 1/sigma^2 ~ Gamma(n, rate n sigma0^2) gives
    // log density n log n - lgamma(n) + n (u - e^u) in u.
    const double log_norm = nd * std::log(nd) - std::lgamma(nd);
    auto density = [&](double u) {
      const double e = std::exp(u);
      if (!std::isfinite(e)) return 0.0;
      return std::exp(log_norm + nd * (u - e));
    };
    const double scale = 1.0 / std::sqrt(nd);
    const double mass = integrate_real_line(density, 0.0, scale, 1e-15, 1e-13).value;
    const double e_h = integrate_real_line(
        [&](double u) {
          const double d = density(u);
          return d == 0.0 ? 0.0 : d * 0.5 * (std::expm1(u) - u);
        },
        0.0, scale, 1e-18, 1e-13).value;
    const double e_inv = integrate_real_line(
        [&](double u) {
          const double d = density(u);
          return d == 0.0 ? 0.0 : d * std::exp(u) / (2.0 * s2);
        },
        0.0, scale, 1e-15, 1e-13).value;
    const double h_exact = 0.5 * (std::log(nd) - digamma(nd));
    const double inv_exact = 1.0 / (2.0 * s2);
    rep.check_le(fmt("n %.0f: |mass - 1|", nd), std::abs(mass - 1.0), 1e-8);
    rep.check_le(fmt("n %.0f: rel err E h vs (log n - digamma n)/2 = %.12g", nd, h_exact),
                 std::abs(e_h - h_exact) / h_exact, 1e-8);
    rep.check_le(fmt("n %.0f: rel err E 1/(2 sigma^2) vs 1/(2 sigma0^2) = %.12g", nd, inv_exact),
                 std::abs(e_inv - inv_exact) / inv_exact, 1e-8);
    ns.push_back(nd);
    eh.push_back(e_h);
    rep.instances_checked += 3;
  }
  if (ns.size() >= 4) {
    const double slope = log_log_slope(ns, eh);
    rep.check_le("log-log slope of E h (band -1 +/- 0.05)", std::abs(slope + 1.0), 0.05);
    rep.check_le("log-log slope of E h", slope, -0.9);
    // (log n - digamma n)/2 against 1/(4n) at the largest n; the ratio tends to 1.
    rep.check_le("ratio E h / (1/(4n)) - 1 at largest n", std::abs(eh.back() * 4.0 * ns.back() - 1.0),
                 0.05);
  }
  rep.finish();
  return rep;
}

LemmaReport verify_rho_expectation_identities(const std::vector<int>& n_grid,
                                              const std::vector<double>& rho0_grid, double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("verify_rho_expectation_identities: nu must be positive");
  LemmaReport rep;
  rep.lemma_id = "rho_expectations";
  for (double rho0 : rho0_grid) {
    const double s0 = softplus(rho0);
    std::vector<double> ns, i1s, i2s;
    double stab = 0.0;
    for (int n : n_grid) {
      const double sd = nu / std::sqrt(static_cast<double>(n));
      auto h1 = [&](double z) {
        if (normal_pdf(z) == 0.0) return 0.0;
        const double d = softplus_diff(rho0 + sd * z, rho0) / s0;
        return normal_pdf(z) * (std::log1p(d) - 0.5 * d * (2.0 + d) / ((1.0 + d) * (1.0 + d)));
      };
      // 1/(2 sigma^2) - 1/(2 sigma0^2), kept exact near rho0.
      auto h2_err = [&](double z) {
        if (normal_pdf(z) == 0.0) return 0.0;
        const double diff = softplus_diff(rho0 + sd * z, rho0);
        const double s = s0 + diff;
        return -normal_pdf(z) * diff * (s + s0) / (2.0 * s * s * s0 * s0);
      };
      const double i1 = integrate_real_line(h1, 0.0, 1.0, 1e-20, 1e-12).value;
      const double i2 = integrate_real_line(h2_err, 0.0, 1.0, 1e-20, 1e-12).value;
      const double i1_fine = integrate_real_line(h1, 0.0, 1.0, 1e-22, 1e-14).value;
      stab = std::max(stab, std::abs(i1_fine - i1) / i1);
      ns.push_back(n);
      i1s.push_back(i1);
      i2s.push_back(std::abs(i2));
      rep.instances_checked += 2;
      if (n >= 1000000) rep.check_le(fmt("rho0 %.4g, n %.0f: E h", rho0, n), i1, 1e-5);
    }
    rep.check_le(fmt("rho0 %.4g: rel change of E h under refinement", rho0), stab, 1e-6);
    if (ns.size() >= 4) {
      rep.check_le(fmt("rho0 %.4g: log-log slope of E h", rho0), log_log_slope(ns, i1s), -0.9);
      rep.check_le(fmt("rho0 %.4g: log-log slope of |E 1/(2 sigma^2) - 1/(2 sigma0^2)|", rho0),
                   log_log_slope(ns, i2s), -0.9);
    }
  }
  rep.finish();
  return rep;
}

LemmaReport verify_mills_ratio(const std::vector<double>& a_grid) {
  LemmaReport rep;
  rep.lemma_id = "mills_ratio";
  double prev = std::numeric_limits<double>::infinity();
  for (double a : a_grid) {
    if (!(a > 0.0)) throw std::invalid_argument("verify_mills_ratio: a must be positive");
    // (1 - Phi(a)) / phi(a) = int_0^inf exp(-a x - x^2/2) dx, free of underflow.
    auto f = [a](double t) {
      if (t >= 1.0) return 0.0;
      const double x = t / (1.0 - t);
      return std::exp(-a * x - 0.5 * x * x) / ((1.0 - t) * (1.0 - t));
    };
    const double mills_quad = integrate_adaptive(f, 0.0, 1.0, 0.0, 1e-13, 4000).value;
    const double mills = std::exp(log_normal_sf(a) + 0.5 * a * a + 0.5 * kLogTwoPi);
    rep.check_le(fmt("a %.3g: rel err of the log-domain tail vs quadrature", a),
                 std::abs(mills - mills_quad) / mills_quad, 1e-8);
    const double err = std::abs(mills * a - 1.0);
    rep.check_le(fmt("a %.3g: |(1-Phi(a)) a/phi(a) - 1| < 1/a^2", a), err, 1.0 / (a * a));
    if (std::isfinite(prev)) rep.check_le(fmt("a %.3g: relative error decreasing", a), err, prev);
    prev = err;
    rep.instances_checked += 3;
  }
  // Strict inequalities become <= 0 excess; ties at machine precision are not expected.
  rep.finish();
  return rep;
}

FBoundResult verify_f_bound_decay(const Network& teacher, const std::vector<int>& n_grid,
                                  double tau, int samples, std::uint64_t seed,
                                  const SieveSpec& sieve, const QuadratureRule& rule) {
  if (samples < 1) throw std::invalid_argument("verify_f_bound_decay: samples must be >= 1");
  if (tau < 0.0) throw std::invalid_argument("verify_f_bound_decay: tau must be >= 0");
  FBoundResult out;
  LemmaReport& rep = out.report;
  rep.lemma_id = "f_bound";
  const Eigen::VectorXd f0 = network_eval_batch(teacher, rule.points());
  std::vector<double> ns;
  for (int n : n_grid) {
    const SieveBounds b = sieve_bounds(sieve, n);
    const Network theta0 = pad_hidden_nodes(teacher, std::max(teacher.k(), b.k_n));
    const ModelDims dims = theta0.dims();
    const Eigen::VectorXd center = theta0.flatten();
    // Common random numbers across n: the same base noise, rescaled.
    Rng rng(derive_seed(seed, Stream::Oracle, {7, static_cast<std::uint64_t>(dims.k)}));
    const double sd = tau / std::sqrt(static_cast<double>(n));
    double acc = 0.0;
    Eigen::VectorXd theta(center.size());
    for (int s = 0; s < samples; ++s) {
      for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = center[i] + sd * rng.normal();
      acc += l2_sq_distance(network_eval_batch(Network::unflatten(dims, theta), rule.points()),
                            f0, rule);
    }
    out.estimates.push_back(acc / samples);
    ns.push_back(n);
    ++rep.instances_checked;
  }
  const bool positive = std::all_of(out.estimates.begin(), out.estimates.end(),
                                    [](double v) { return v > 0.0; });
  if (ns.size() >= 4 && positive) {
    rep.check_le("log-log slope of E_q ||f_theta - f0||^2", log_log_slope(ns, out.estimates), -0.9);
  } else if (!positive) {
    rep.check_le("E_q ||f_theta - f0||^2 at every n (tau = 0)",
                 *std::max_element(out.estimates.begin(), out.estimates.end()), 0.0);
  }
  rep.finish();
  return out;
}

LemmaReport verify_prior_tail_bound(const PriorSpec& spec, const SieveSpec& sieve, int p,
                                    const std::vector<int>& mc_grid,
                                    const std::vector<int>& analytic_grid, int samples,
                                    std::uint64_t seed, double kappa, double rate_exponent) {
  LemmaReport rep;
  rep.lemma_id = "prior_tail_" + variant_name(spec);
  for (int n : mc_grid) {
    const SieveBounds b = sieve_bounds(sieve, n);
    const ModelDims dims(p, b.k_n);
    int outside = 0;
    for (int s = 0; s < samples; ++s) {
      const PriorDraw d = sample_prior(
          spec, n, dims,
          derive_seed(seed, Stream::Oracle, {8, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(s)}));
      if (!inside_sieve(spec, b, d.params, d.scale_param)) ++outside;
    }
    const double frac = static_cast<double>(outside) / samples;
    const double se = std::sqrt(frac * (1.0 - frac) / samples);
    const double bound = std::exp(log_prior_mass_outside_sieve(spec, sieve, n, p));
    rep.check_le(fmt("n %.0f: MC outside fraction <= bound %.6g + 3 SE", n, bound), frac,
                 bound + 3.0 * se);
    rep.instances_checked += samples;
  }
  double prev = std::numeric_limits<double>::infinity();
  bool crossed = false;
  for (int n : analytic_grid) {
    const double lb = log_prior_mass_outside_sieve(spec, sieve, n, p);
    const double target = -kappa * std::pow(static_cast<double>(n), rate_exponent);
    rep.check_le(fmt("n %.0f: log bound strictly decreasing", n), lb, std::nextafter(prev, -INFINITY));
    prev = lb;
    if (lb < target) crossed = true;
    if (crossed) rep.check_le(fmt("n %.0f: log bound below -kappa n^r = %.6g", n, target), lb, target);
    ++rep.instances_checked;
  }
  if (!analytic_grid.empty())
    rep.check_ge("crossover reached on the analytic grid", crossed ? 1.0 : 0.0, 1.0);
  rep.finish();
  return rep;
}

std::vector<LemmaReport> run_lemma_suite(const LemmaSuiteConfig& c) {
  std::vector<LemmaReport> out;
  out.push_back(verify_mod_kl(c.mod_kl_trials, c.seed));
  out.push_back(verify_theta_bound(c.theta_trials, ModelDims(2, 3),
                                   {0.0, 0.01, 0.05, 0.1, 0.2, 0.3}, c.seed));
  out.push_back(verify_sig_rho_bounds(c.delta_grid));
  out.push_back(verify_ig_expectation_identities(c.ig_n_grid, c.ig_sigma0));
  out.push_back(verify_rho_expectation_identities(c.rho_n_grid, c.rho0_grid, c.rho_nu));
  out.push_back(verify_mills_ratio(c.mills_grid));
  const Network teacher = make_teacher(2, 2, 1.0, c.seed);
  out.push_back(verify_f_bound_decay(teacher, c.f_bound_n_grid, c.f_bound_tau, c.f_bound_samples,
                                     c.seed, c.f_bound_sieve, QuadratureRule::default_for(2))
                    .report);

  const std::vector<int> small = {1, 2, 3};
  std::vector<int> doubling;
  for (int n = 1; n <= 1024; n *= 2) doubling.push_back(n);
  const SieveSpec base{0.25, 0.5};
  out.push_back(verify_prior_tail_bound(FixedGaussian{1.0}, base, 2, small, doubling,
                                        c.prior_samples, c.seed));
  // The n^u prior variance delays the regime until e^(n^(b-a)) outgrows n^(u/2).
  out.push_back(verify_prior_tail_bound(ScaledGaussian{1.0, 2.0}, base, 2, small,
                                        {10000, 100000, 1000000, 10000000}, c.prior_samples,
                                        c.seed));
  out.push_back(verify_prior_tail_bound(InverseGammaSigma{1.0, 2.0, 1.0}, base, 2, small,
                                        doubling, c.prior_samples, c.seed, 1.0, base.b));
  out.push_back(verify_prior_tail_bound(RhoGaussian{1.0, 1.0 / std::numbers::sqrt2},
                                        SieveSpec{0.25, 0.8}, 2, small, doubling,
                                        c.prior_samples, c.seed));
  return out;
}

}  // namespace vbnn
