#include "vbnn/elbo.hpp"

#include "vbnn/special.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

namespace vbnn {

void TrainConfig::validate() const {
  if (iters < 1) throw std::invalid_argument("TrainConfig: iters must be >= 1");
  if (mc_samples < 1) throw std::invalid_argument("TrainConfig: mc_samples must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainConfig: step_size must be positive");
  if (step_size_final < 0.0)
    throw std::invalid_argument("TrainConfig: step_size_final must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be positive");
  if (convergence_window < 1)
    throw std::invalid_argument("TrainConfig: convergence_window must be >= 1");
  if (convergence_tol < 0.0)
    throw std::invalid_argument("TrainConfig: convergence_tol must be non-negative");
  if (likelihood_weight < 0.0)
    throw std::invalid_argument("TrainConfig: likelihood_weight must be non-negative");
  if (batch_size < 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty())
    throw std::invalid_argument("TrainConfig: checkpoint_every needs checkpoint_path");
}

namespace {

struct Terms {
  double value = 0.0;
  double se = 0.0;
  double ell = 0.0;
  double kl = 0.0;
  Eigen::VectorXd grad;
};

// Seeded ELBO estimator on (xs, ys), a batch standing in for n_total points.
Terms evaluate(const MeanFieldPosterior& q, const PriorSpec& prior, const Eigen::MatrixXd& xs,
               const Eigen::VectorXd& ys, int n_total, int samples, std::uint64_t seed,
               double lw, bool want_grad) {
  if (samples < 1) throw std::invalid_argument("elbo: samples must be >= 1");
  if (q.kind() != scale_kind(prior))
    throw std::invalid_argument("elbo: posterior and prior variants differ");
  const int kk = q.param_count();
  const double n = static_cast<double>(n_total);
  const double scale = ys.size() > 0 ? n / static_cast<double>(ys.size()) : 0.0;
  const ReparamSample draws = sample_reparameterized(q, seed, samples);
  const Eigen::VectorXd sd = q.sd();

  const auto* ig = std::get_if<InverseGammaFactor>(&q.scale);
  const auto* rho = std::get_if<GaussianFactor>(&q.scale);
  const double ig_a = ig ? ig->a() : 0.0, ig_b = ig ? ig->b() : 0.0;

  Eigen::VectorXd ll(samples);
  Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(kk), g_logsd = Eigen::VectorXd::Zero(kk);
  double ssr_bar = 0.0, g_rho_m = 0.0, g_rho_logs = 0.0;

  Eigen::MatrixXd xt(xs.rows(), xs.cols() + 1);
  xt.col(0).setOnes();
  xt.rightCols(xs.cols()) = xs;

  for (int s = 0; s < samples; ++s) {
    double ssr = 0.0;
    double weight = 0.0;  // E(1/sigma^2) or 1/sigma_s^2
    Eigen::VectorXd resid;
    Eigen::MatrixXd psi;
    Network net;
    if (ys.size() > 0) {
      net = Network::unflatten(q.dims, draws.theta.row(s).transpose());
      psi = (xt * net.gamma.transpose()).unaryExpr([](double u) { return logistic(u); });
      resid = ys - (psi * net.beta).array().matrix();
      resid.array() -= net.beta0;
      ssr = scale * resid.squaredNorm();
    }
    if (ig) {
      ll[s] = -0.5 * n * (kLogTwoPi + ig->log_b - digamma(ig_a)) - 0.5 * (ig_a / ig_b) * ssr;
      weight = ig_a / ig_b;
      ssr_bar += ssr;
    } else {
      double sigma;
      if (rho) {
        const double r = rho->m + rho->s() * draws.scale_base[s];
        sigma = softplus(r);
        // d log L / d sigma times d sigma / d rho.
        const double g = (-n / sigma + ssr / (sigma * sigma * sigma)) * logistic(r);
        g_rho_m += g;
        g_rho_logs += g * draws.scale_base[s] * rho->s();
      } else {
        sigma = std::get<KnownScale>(q.scale).sigma;
      }
      ll[s] = -0.5 * n * kLogTwoPi - n * std::log(sigma) - ssr / (2.0 * sigma * sigma);
      weight = 1.0 / (sigma * sigma);
    }
    if (want_grad && ys.size() > 0) {
      Network g(q.dims);
      g.beta0 = resid.sum();
      g.beta = psi.transpose() * resid;
      const Eigen::MatrixXd d =
          ((resid * net.beta.transpose()).array() * psi.array() * (1.0 - psi.array())).matrix();
      g.gamma = d.transpose() * xt;
      const Eigen::VectorXd gtheta = (weight * scale) * g.flatten();
      g_mean += gtheta;
      g_logsd += (gtheta.array() * draws.eps.row(s).transpose().array() * sd.array()).matrix();
    }
  }

  Terms t;
  t.ell = ll.mean();
  t.kl = kl_total(q, prior, n_total);
  t.value = lw * t.ell - t.kl;
  if (samples > 1) {
    const double var = (ll.array() - t.ell).square().sum() / (samples - 1);
    t.se = lw * std::sqrt(var / samples);
  }
  if (!want_grad) return t;

  const double inv_s = 1.0 / samples;
  t.grad = Eigen::VectorXd::Zero(q.free_parameter_count());
  t.grad.head(kk) = lw * inv_s * g_mean;
  t.grad.segment(kk, kk) = lw * inv_s * g_logsd;
  if (ig) {
    ssr_bar *= inv_s;
    // Chain rule through a = e^log_a, b = e^log_b.
    const double d_a = 0.5 * n * trigamma(ig_a) - ssr_bar / (2.0 * ig_b);
    const double d_b = -0.5 * n / ig_b + ig_a * ssr_bar / (2.0 * ig_b * ig_b);
    t.grad[2 * kk] = lw * d_a * ig_a;
    t.grad[2 * kk + 1] = lw * d_b * ig_b;
  } else if (rho) {
    t.grad[2 * kk] = lw * inv_s * g_rho_m;
    t.grad[2 * kk + 1] = lw * inv_s * g_rho_logs;
  }
  t.grad -= kl_gradient(q, prior, n_total);
  return t;
}

}  // namespace

Eigen::VectorXd kl_gradient(const MeanFieldPosterior& q, const PriorSpec& prior, int n) {
  if (q.kind() != scale_kind(prior))
    throw std::invalid_argument("kl_gradient: posterior and prior variants differ");
  const int kk = q.param_count();
  const double zeta = weight_prior_sd(prior, n);
  const double inv_z2 = 1.0 / (zeta * zeta);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q.free_parameter_count());
  g.head(kk) = q.mean * inv_z2;
  g.segment(kk, kk) = ((2.0 * q.log_sd.array()).exp() * inv_z2 - 1.0).matrix();
  if (const auto* ig = std::get_if<InverseGammaFactor>(&q.scale)) {
    const auto& p = std::get<InverseGammaSigma>(prior);
    const double a = ig->a(), b = ig->b();
    g[2 * kk] = ((a - p.alpha) * trigamma(a) + p.lambda / b - 1.0) * a;
    g[2 * kk + 1] = (p.alpha / b - p.lambda * a / (b * b)) * b;
  } else if (const auto* rho = std::get_if<GaussianFactor>(&q.scale)) {
    const double eta2 = std::get<RhoGaussian>(prior).eta * std::get<RhoGaussian>(prior).eta;
    g[2 * kk] = rho->m / eta2;
    g[2 * kk + 1] = rho->s() * rho->s() / eta2 - 1.0;
  }
  return g;
}

std::string parameter_name(const MeanFieldPosterior& q, int index) {
  const int kk = q.param_count();
  if (index < 0 || index >= q.free_parameter_count())
    throw std::out_of_range("parameter_name: index out of range");
  if (index < kk) return "mean[" + std::to_string(index) + "]";
  if (index < 2 * kk) return "log_sd[" + std::to_string(index - kk) + "]";
  if (q.kind() == ScaleKind::InverseGamma) return index == 2 * kk ? "log_shape" : "log_rate";
  return index == 2 * kk ? "rho_mean" : "rho_log_sd";
}

ElboEstimate elbo_estimate(const MeanFieldPosterior& q, const PriorSpec& prior,
                           const RegressionDataset& data, int samples, std::uint64_t seed,
                           double likelihood_weight) {
  const Terms t = evaluate(q, prior, data.xs, data.ys, static_cast<int>(data.size()), samples,
                           seed, likelihood_weight, false);
  return {t.value, t.se, t.ell, t.kl};
}

ElboGradient elbo_gradient(const MeanFieldPosterior& q, const PriorSpec& prior,
                           const RegressionDataset& data, int samples, std::uint64_t seed,
                           double likelihood_weight) {
  Terms t = evaluate(q, prior, data.xs, data.ys, static_cast<int>(data.size()), samples, seed,
                     likelihood_weight, true);
  return {t.value, std::move(t.grad)};
}

FitResult fit(const PriorSpec& prior, const RegressionDataset& data, const ModelDims& dims,
              const TrainConfig& config, std::optional<MeanFieldPosterior> init) {
  config.validate();
  validate(prior);
  const auto start = std::chrono::steady_clock::now();
  FitResult res;
  res.posterior = init ? *init : initial_posterior(dims, prior, data, config.seed);
  if (res.posterior.dims != dims || res.posterior.kind() != scale_kind(prior))
    throw std::invalid_argument("fit: initial posterior does not match dims or prior");
  MeanFieldPosterior& q = res.posterior;

  const int n = static_cast<int>(data.size());
  const bool batched = config.batch_size > 0 && config.batch_size < n;
  std::vector<int> index(n);
  std::iota(index.begin(), index.end(), 0);
  Eigen::MatrixXd bx;
  Eigen::VectorXd by;

  Eigen::VectorXd x = q.pack();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(x.size()), m2 = Eigen::VectorXd::Zero(x.size());
  const int window = config.convergence_window;
  double window_sum = 0.0;
  double b1t = 1.0, b2t = 1.0;
  const double decay =
      config.step_size_final > 0.0 && config.iters > 1
          ? std::log(config.step_size_final / config.step_size) / (config.iters - 1)
          : 0.0;

  for (int it = 0; it < config.iters; ++it) {
    const std::uint64_t seed_t = derive_seed(config.seed, Stream::Train, {static_cast<std::uint64_t>(it)});
    Terms t;
    if (batched) {
      Rng rng(derive_seed(seed_t, {0xBA7C}));
      for (int i = 0; i < config.batch_size; ++i) {
        const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n - i));
        std::swap(index[i], index[j]);
      }
      bx.resize(config.batch_size, data.p());
      by.resize(config.batch_size);
      for (int i = 0; i < config.batch_size; ++i) {
        bx.row(i) = data.xs.row(index[i]);
        by[i] = data.ys[index[i]];
      }
      t = evaluate(q, prior, bx, by, n, config.mc_samples, seed_t, config.likelihood_weight, true);
    } else {
      t = evaluate(q, prior, data.xs, data.ys, n, config.mc_samples, seed_t,
                   config.likelihood_weight, true);
    }
    if (!std::isfinite(t.value))
      throw NumericalError(it, "elbo", "fit: non-finite ELBO at iteration " + std::to_string(it));
    for (Eigen::Index i = 0; i < t.grad.size(); ++i) {
      if (!std::isfinite(t.grad[i])) {
        const std::string name = parameter_name(q, static_cast<int>(i));
        throw NumericalError(it, name,
                             "fit: non-finite gradient for " + name + " at iteration " +
                                 std::to_string(it));
      }
    }

    res.raw_elbo_trace.push_back(t.value);
    window_sum += t.value;
    if (it >= window) window_sum -= res.raw_elbo_trace[it - window];
    res.elbo_trace.push_back(window_sum / std::min(it + 1, window));
    const double gnorm = t.grad.norm();
    res.grad_norm_trace.push_back(gnorm);
    res.final_grad_norm = gnorm;

    // Adam ascent step.
    b1t *= config.adam_beta1;
    b2t *= config.adam_beta2;
    m1 = config.adam_beta1 * m1 + (1.0 - config.adam_beta1) * t.grad;
    m2 = config.adam_beta2 * m2 + (1.0 - config.adam_beta2) * t.grad.cwiseAbs2();
    const double lr = config.step_size * std::exp(decay * it);
    x.array() += lr * (m1.array() / (1.0 - b1t)) /
                 ((m2.array() / (1.0 - b2t)).sqrt() + config.adam_eps);
    q.unpack(x);
    res.iterations = it + 1;

    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) {
      std::ofstream out(config.checkpoint_path);
      if (!out) throw std::runtime_error("fit: cannot write checkpoint " + config.checkpoint_path);
      out << to_json(q).dump(2) << '\n';
    }

    if (it + 1 >= 2 * window) {
      const double cur = res.elbo_trace[it];
      const double prev = res.elbo_trace[it - window];
      const double rel = (cur - prev) / std::max(std::abs(prev), 1e-300);
      if (std::abs(rel) < config.convergence_tol) {
        res.converged = true;
        break;
      }
    }
  }
  if (!res.converged && res.iterations >= 2 * window) {
    const double cur = res.elbo_trace.back();
    const double prev = res.elbo_trace[res.iterations - 1 - window];
    res.converged = cur - prev >= -config.convergence_tol * std::abs(prev);
  }
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

FiniteDifferenceReport finite_difference_check(const MeanFieldPosterior& q,
                                               const PriorSpec& prior,
                                               const RegressionDataset& data,
                                               const std::vector<int>& coords, double h,
                                               int samples, std::uint64_t seed) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be positive");
  const Eigen::VectorXd base = q.pack();
  const Eigen::VectorXd grad = elbo_gradient(q, prior, data, samples, seed).grad;
  FiniteDifferenceReport rep;
  rep.coords = coords;
  rep.analytic.resize(static_cast<Eigen::Index>(coords.size()));
  rep.numeric.resize(static_cast<Eigen::Index>(coords.size()));
  MeanFieldPosterior work = q;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const int i = coords[c];
    if (i < 0 || i >= base.size())
      throw std::out_of_range("finite_difference_check: coordinate out of range");
    Eigen::VectorXd x = base;
    x[i] = base[i] + h;
    work.unpack(x);
    const double up = elbo_estimate(work, prior, data, samples, seed).value;
    x[i] = base[i] - h;
    work.unpack(x);
    const double down = elbo_estimate(work, prior, data, samples, seed).value;
    const double fd = (up - down) / (2.0 * h);
    const auto ci = static_cast<Eigen::Index>(c);
    rep.analytic[ci] = grad[i];
    rep.numeric[ci] = fd;
    const double err = std::abs(grad[i] - fd);
    rep.max_abs_error = std::max(rep.max_abs_error, err);
    rep.max_rel_error = std::max(
        rep.max_rel_error, err / std::max({std::abs(grad[i]), std::abs(fd), 1e-3}));
  }
  return rep;
}

}  // namespace vbnn
