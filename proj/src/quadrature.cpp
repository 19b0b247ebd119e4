#include "vbnn/quadrature.hpp"

#include <boost/random/sobol.hpp>

#include <algorithm>
#include <array>
#include <numbers>
#include <queue>
#include <vector>

namespace vbnn {

Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  Rule1D rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

Rule1D gauss_legendre(int n, double lo, double hi) {
  Rule1D rule = gauss_legendre(n);
  const double half = 0.5 * (hi - lo);
  rule.nodes = (rule.nodes.array() * half + 0.5 * (hi + lo)).matrix();
  rule.weights *= half;
  return rule;
}

Rule1D gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_normal: need at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = std::sqrt(static_cast<double>(i));
    jacobi(i - 1, i) = jacobi(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  Rule1D rule{solver.eigenvalues(), solver.eigenvectors().row(0).transpose().array().square()};
  rule.weights /= rule.weights.sum();
  return rule;
}

QuadratureRule QuadratureRule::tensor_gauss_legendre(int p, int nodes_per_axis) {
  if (p < 1 || p > 3)
    throw std::invalid_argument("tensor Gauss-Legendre rule supports 1 <= p <= 3");
  const Rule1D axis = gauss_legendre(nodes_per_axis, 0.0, 1.0);
  Eigen::Index total = 1;
  for (int d = 0; d < p; ++d) total *= nodes_per_axis;
  Eigen::MatrixXd points(total, p);
  Eigen::VectorXd weights(total);
  std::vector<int> index(p, 0);
  for (Eigen::Index row = 0; row < total; ++row) {
    double w = 1.0;
    for (int d = 0; d < p; ++d) {
      points(row, d) = axis.nodes[index[d]];
      w *= axis.weights[index[d]];
    }
    weights[row] = w;
    for (int d = p - 1; d >= 0; --d) {
      if (++index[d] < nodes_per_axis) break;
      index[d] = 0;
    }
  }
  return QuadratureRule(Kind::TensorGaussLegendre, nodes_per_axis, std::move(points),
                        std::move(weights));
}

QuadratureRule QuadratureRule::sobol(int p, int count) {
  if (p < 1) throw std::invalid_argument("sobol rule: p must be positive");
  if (count < 1) throw std::invalid_argument("sobol rule: count must be positive");
  boost::random::sobol engine(static_cast<std::size_t>(p));
  Eigen::MatrixXd points(count, p);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < p; ++d)
      points(i, d) = (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(count, 1.0 / count);
  return QuadratureRule(Kind::Sobol, count, std::move(points), std::move(weights));
}

QuadratureRule QuadratureRule::default_for(int p) {
  if (p <= 2) return tensor_gauss_legendre(p, 64);
  if (p == 3) return tensor_gauss_legendre(3, 32);
  return sobol(p, 1 << 16);
}

namespace {

constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double lo, hi, value, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment kronrod15(const std::function<double(double)>& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[i] * sum;
    // Odd-indexed Kronrod nodes are the 7-point Gauss nodes.
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * sum;
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double lo,
                                     double hi, double abs_tol, double rel_tol,
                                     int max_intervals) {
  if (!(lo < hi)) {
    if (lo == hi) return {};
    throw std::invalid_argument("integrate_adaptive: lo must not exceed hi");
  }
  std::priority_queue<Segment> heap;
  Segment first = kronrod15(f, lo, hi);
  double value = first.value;
  double error = first.error;
  heap.push(first);
  int intervals = 1;
  while (error > std::max(abs_tol, rel_tol * std::abs(value)) && intervals < max_intervals) {
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    Segment left = kronrod15(f, worst.lo, mid);
    Segment right = kronrod15(f, mid, worst.hi);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++intervals;
  }
  // Re-sum to shed the accumulated rounding of the running updates.
  double total = 0.0, total_error = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_error += heap.top().error;
    heap.pop();
  }
  return {total, total_error, 15 * (2 * intervals - 1)};
}

IntegrationResult integrate_real_line(const std::function<double(double)>& f, double center,
                                      double scale, double abs_tol, double rel_tol) {
  auto mapped = [&](double t) {
    const double denom = 1.0 - t * t;
    const double x = center + scale * t / denom;
    const double jac = scale * (1.0 + t * t) / (denom * denom);
    const double fx = f(x);
    return fx == 0.0 ? 0.0 : fx * jac;
  };
  return integrate_adaptive(mapped, -1.0, 1.0, abs_tol, rel_tol, 4000);
}

}  // namespace vbnn
