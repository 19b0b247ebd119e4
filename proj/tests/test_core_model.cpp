// Network, likelihood and data generation.

#include "vbnn/model.hpp"
#include "vbnn/special.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace vbnn;
using doctest::Approx;

namespace {

Network random_network(const ModelDims& dims, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Eigen::VectorXd flat(dims.param_count());
  for (auto& v : flat) v = scale * rng.normal();
  return Network::unflatten(dims, flat);
}

}  // namespace

TEST_CASE("logistic") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(1.0 - logistic(50.0) < 1e-20);
  CHECK(logistic(50.0) <= 1.0);
  CHECK(logistic(1.0) == Approx(0.73105857863000487925).epsilon(1e-15));
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(std::isfinite(logistic(-800.0)));
  CHECK(logistic(-3.0) + logistic(3.0) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("parameter count and flattening") {
  const ModelDims dims(3, 4);
  CHECK(dims.param_count() == 1 + 4 * (3 + 2));
  CHECK_THROWS(ModelDims(0, 1));
  const Network net = random_network(dims, 1);
  const Eigen::VectorXd flat = net.flatten();
  CHECK(flat.size() == dims.param_count());
  CHECK(Network::unflatten(dims, flat) == net);
  // Canonical order: beta0, beta_1..k, then gamma row by row.
  CHECK(flat[0] == net.beta0);
  CHECK(flat[1] == net.beta[0]);
  CHECK(flat[1 + 4] == net.gamma(0, 0));
  CHECK(flat[1 + 4 + 4] == net.gamma(1, 0));
  CHECK(flat[flat.size() - 1] == net.gamma(3, 3));
  CHECK_THROWS(Network::unflatten(dims, Eigen::VectorXd::Zero(5)));
}

TEST_CASE("network_eval examples") {
  Network net(ModelDims(2, 3));
  net.beta0 = 3.0;
  CHECK(network_eval(net, Eigen::Vector2d(0.2, 0.9)) == 3.0);

  Network one(ModelDims(1, 1));
  one.beta[0] = 2.0;
  CHECK(network_eval(one, Eigen::VectorXd::Constant(1, 0.4)) == 1.0);

  one.beta[0] = 1.0;
  one.gamma(0, 1) = 1.0;
  CHECK(network_eval(one, Eigen::VectorXd::Constant(1, 1.0)) ==
        Approx(0.73105857863000487925).epsilon(1e-15));
  CHECK_THROWS(network_eval(one, Eigen::Vector2d(0.1, 0.2)));
}

TEST_CASE("batch evaluation agrees with pointwise evaluation") {
  const Network net = random_network(ModelDims(3, 5), 2);
  Rng rng(9);
  Eigen::MatrixXd xs(40, 3);
  for (auto& v : xs.reshaped()) v = rng.uniform();
  const Eigen::VectorXd batch = network_eval_batch(net, xs);
  for (int i = 0; i < xs.rows(); ++i)
    CHECK(batch[i] == Approx(network_eval(net, xs.row(i).transpose())).epsilon(1e-14));
}

TEST_CASE("hidden-unit permutation leaves the function unchanged") {
  const ModelDims dims(2, 6);
  std::mt19937 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = random_network(dims, 100 + trial, 2.0);
    std::vector<int> perm(dims.k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Network shuffled = net;
    for (int j = 0; j < dims.k; ++j) {
      shuffled.beta[j] = net.beta[perm[j]];
      shuffled.gamma.row(j) = net.gamma.row(perm[j]);
    }
    const Eigen::Vector2d x(0.3, 0.8);
    CHECK(network_eval(shuffled, x) == Approx(network_eval(net, x)).epsilon(1e-12));
  }
}

TEST_CASE("network output is bounded by the absolute output weights") {
  for (int trial = 0; trial < 50; ++trial) {
    const Network net = random_network(ModelDims(2, 4), 200 + trial, 3.0);
    const double bound = std::abs(net.beta0) + net.beta.cwiseAbs().sum();
    Rng rng(trial);
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector2d x(rng.uniform(), rng.uniform());
      CHECK(std::abs(network_eval(net, x)) <= bound);
    }
  }
}

TEST_CASE("log_likelihood examples") {
  Network net(ModelDims(1, 1));
  net.beta0 = 0.5;
  RegressionDataset one;
  one.xs = Eigen::MatrixXd::Constant(1, 1, 0.3);
  one.ys = Eigen::VectorXd::Constant(1, network_eval(net, one.xs.row(0).transpose()));
  CHECK(log_likelihood(net, 1.0, one) == Approx(-0.91893853320467274178).epsilon(1e-15));

  RegressionDataset two;
  two.xs = Eigen::MatrixXd::Constant(2, 1, 0.3);
  const double f = network_eval(net, Eigen::VectorXd::Constant(1, 0.3));
  two.ys = Eigen::Vector2d(f + 1.0, f - 1.0);
  CHECK(log_likelihood(net, 1.0, two) == Approx(-std::log(2 * M_PI) - 1.0).epsilon(1e-14));
  CHECK_THROWS(log_likelihood(net, 0.0, two));
}

TEST_CASE("log_likelihood matches a product of densities and adds over concatenation") {
  const Network truth_net = random_network(ModelDims(2, 3), 11);
  const Truth truth(truth_net);
  const RegressionDataset a = simulate_dataset(truth, 0.7, 7, 2, 1);
  const RegressionDataset b = simulate_dataset(truth, 0.7, 5, 2, 2);
  const Network model = random_network(ModelDims(2, 3), 12);
  const double sigma = 0.9;

  double product = 1.0;
  for (int i = 0; i < a.size(); ++i) {
    const double r = a.ys[i] - network_eval(model, a.xs.row(i).transpose());
    product *= std::exp(-r * r / (2 * sigma * sigma)) / std::sqrt(2 * M_PI * sigma * sigma);
  }
  CHECK(log_likelihood(model, sigma, a) == Approx(std::log(product)).epsilon(1e-12));

  RegressionDataset ab = a;
  ab.xs.conservativeResize(12, 2);
  ab.xs.bottomRows(5) = b.xs;
  ab.ys.conservativeResize(12);
  ab.ys.tail(5) = b.ys;
  CHECK(log_likelihood(model, sigma, ab) ==
        Approx(log_likelihood(model, sigma, a) + log_likelihood(model, sigma, b)).epsilon(1e-14));
}

TEST_CASE("simulate_dataset") {
  const Truth truth = Truth::named("sine", 2);
  const RegressionDataset d1 = simulate_dataset(truth, 0.5, 300, 2, 17);
  const RegressionDataset d2 = simulate_dataset(truth, 0.5, 300, 2, 17);
  CHECK(d1.xs == d2.xs);
  CHECK(d1.ys == d2.ys);
  CHECK(d1.size() == 300);
  CHECK((d1.xs.array() > 0.0).all());
  CHECK((d1.xs.array() < 1.0).all());
  CHECK(simulate_dataset(truth, 0.5, 300, 2, 18).ys != d1.ys);

  const RegressionDataset exact = simulate_dataset(truth, 1e-300, 50, 2, 3);
  CHECK((exact.ys - truth.eval_batch(exact.xs)).cwiseAbs().maxCoeff() < 1e-250);

  const RegressionDataset big = simulate_dataset(truth, 2.0, 1000000, 2, 4);
  const double mean_noise = (big.ys - truth.eval_batch(big.xs)).mean();
  CHECK(std::abs(mean_noise) < 4.0 * 2.0 / 1000.0);
}

TEST_CASE("make_teacher") {
  const Network zero = make_teacher(3, 2, 0.0, 1);
  CHECK(zero.sum_squares() == 0.0);
  CHECK(network_eval(zero, Eigen::Vector2d(0.5, 0.5)) == 0.0);
  CHECK(make_teacher(3, 2, 1.5, 8) == make_teacher(3, 2, 1.5, 8));
  const Network t = make_teacher(3, 2, 1.5, 8);
  CHECK(t.sum_squares() == Approx(t.flatten().squaredNorm()).epsilon(1e-15));
  CHECK(t.flatten().cwiseAbs().maxCoeff() <= 1.5);
}

TEST_CASE("padding with zero hidden nodes preserves the function") {
  const Network t = make_teacher(2, 3, 2.0, 4);
  const Network padded = pad_hidden_nodes(t, 5);
  CHECK(padded.k() == 5);
  const Eigen::Vector3d x(0.1, 0.5, 0.9);
  CHECK(network_eval(padded, x) == Approx(network_eval(t, x)).epsilon(1e-15));
  CHECK_THROWS(pad_hidden_nodes(t, 1));
}

TEST_CASE("named truths") {
  const Eigen::Vector2d x(0.25, 0.5);
  CHECK(Truth::named("zero", 2)(x) == 0.0);
  CHECK(Truth::named("sine", 2)(x) == Approx(1.0).epsilon(1e-15));
  CHECK(Truth::named("product", 2)(x) == Approx(0.125));
  CHECK(Truth::named("additive", 2)(x) == Approx(0.0625));
  CHECK_THROWS(Truth::named("cosine", 2));
}
