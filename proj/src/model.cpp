#include "vbnn/model.hpp"

#include "vbnn/special.hpp"

#include <numbers>

namespace vbnn {

Eigen::MatrixXd hidden_preactivations(const Network& params, const Eigen::MatrixXd& xs) {
  if (xs.cols() != params.p())
    throw std::invalid_argument("network_eval: point dimension does not match network");
  Eigen::MatrixXd u = xs * params.gamma.rightCols(params.p()).transpose();
  u.rowwise() += params.gamma.col(0).transpose();
  return u;
}

Eigen::VectorXd network_eval_batch(const Network& params, const Eigen::MatrixXd& xs) {
  params.check();
  Eigen::MatrixXd u = hidden_preactivations(params, xs);
  u = u.unaryExpr([](double v) { return logistic(v); });
  Eigen::VectorXd out = u * params.beta;
  out.array() += params.beta0;
  return out;
}

Truth Truth::named(const std::string& name, int p) {
  if (p < 1) throw std::invalid_argument("Truth::named: p must be >= 1");
  using Fn = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;
  Fn fn;
  if (name == "zero") {
    fn = [](const auto&) { return 0.0; };
  } else if (name == "sine") {
    fn = [](const auto& x) { return std::sin(2.0 * std::numbers::pi * x[0]); };
  } else if (name == "product") {
    fn = [](const auto& x) { return x.prod(); };
  } else if (name == "additive") {
    fn = [](const auto& x) { return (x.array() - 0.5).square().sum(); };
  } else {
    throw std::invalid_argument("Truth::named: unknown function '" + name + "'");
  }
  return Truth(Analytic{name, std::move(fn)});
}

std::string Truth::name() const {
  if (std::holds_alternative<Network>(impl_)) return "teacher";
  if (const auto* a = std::get_if<Analytic>(&impl_)) return a->name;
  return "none";
}

double Truth::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (const auto* net = std::get_if<Network>(&impl_)) return network_eval(*net, x);
  if (const auto* a = std::get_if<Analytic>(&impl_)) return a->fn(x);
  throw std::logic_error("Truth: empty ground truth");
}

Eigen::VectorXd Truth::eval_batch(const Eigen::MatrixXd& xs) const {
  if (const auto* net = std::get_if<Network>(&impl_)) return network_eval_batch(*net, xs);
  Eigen::VectorXd out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out[i] = (*this)(xs.row(i).transpose());
  return out;
}

double log_likelihood(const Network& params, double sigma, const RegressionDataset& data) {
  if (!(sigma > 0.0)) throw std::invalid_argument("log_likelihood: sigma must be positive");
  if (data.size() == 0) return 0.0;
  const Eigen::VectorXd resid = data.ys - network_eval_batch(params, data.xs);
  const double n = static_cast<double>(data.size());
  return -0.5 * n * (kLogTwoPi + 2.0 * std::log(sigma)) -
         resid.squaredNorm() / (2.0 * sigma * sigma);
}

RegressionDataset simulate_dataset(const Truth& truth, double sigma0, int n, int p,
                                   std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("simulate_dataset: n must be >= 1");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("simulate_dataset: sigma0 must be positive");
  if (p < 1) throw std::invalid_argument("simulate_dataset: p must be >= 1");
  Rng rng(derive_seed(seed, Stream::Data));
  RegressionDataset data;
  data.xs.resize(n, p);
  data.ys.resize(n);
  data.sigma0 = sigma0;
  data.truth = truth;
  for (int i = 0; i < n; ++i)
    for (int h = 0; h < p; ++h) data.xs(i, h) = rng.uniform();
  const Eigen::VectorXd f0 = truth.eval_batch(data.xs);
  for (int i = 0; i < n; ++i) data.ys[i] = f0[i] + sigma0 * rng.normal();
  return data;
}

Network make_teacher(int k_star, int p, double scale, std::uint64_t seed) {
  const ModelDims dims(p, k_star);
  Rng rng(derive_seed(seed, Stream::Teacher));
  Eigen::VectorXd flat(dims.param_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = scale * rng.uniform(-1.0, 1.0);
  return Network::unflatten(dims, flat);
}

Network pad_hidden_nodes(const Network& net, int k) {
  if (k < net.k()) throw std::invalid_argument("pad_hidden_nodes: cannot shrink a network");
  Network out(ModelDims(net.p(), k));
  out.beta0 = net.beta0;
  out.beta.head(net.k()) = net.beta;
  out.gamma.topRows(net.k()) = net.gamma;
  return out;
}

}  // namespace vbnn
