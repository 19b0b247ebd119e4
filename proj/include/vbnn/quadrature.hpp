#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

namespace vbnn {

/// A one-dimensional rule: nodes and weights.
struct Rule1D {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Legendre rule on [-1, 1] (Newton iteration on the three-term recurrence).
Rule1D gauss_legendre(int n);

/// Gauss-Legendre rule mapped to [lo, hi].
Rule1D gauss_legendre(int n, double lo, double hi);

/// Gauss-Hermite rule for E[g(Z)], Z ~ N(0, 1): weights sum to one.
/// Computed by Golub-Welsch on the probabilists' Hermite Jacobi matrix.
Rule1D gauss_hermite_normal(int n);

/// Cubature over the unit hypercube [0,1]^p with weights summing to one.
///
/// Points are stored column-wise in a (N x p) matrix so that a whole rule can
/// be pushed through a network as one batch.
class QuadratureRule {
 public:
  enum class Kind { TensorGaussLegendre, Sobol };

  /// Tensor-product Gauss-Legendre, p <= 3.
  static QuadratureRule tensor_gauss_legendre(int p, int nodes_per_axis);

  /// Equal-weight Sobol points (quasi Monte Carlo).
  static QuadratureRule sobol(int p, int count);

  /// 64-node tensor rule for p <= 2, 32^3 for p = 3, 2^16 Sobol points beyond.
  static QuadratureRule default_for(int p);

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return static_cast<int>(points_.cols()); }
  Eigen::Index size() const noexcept { return points_.rows(); }
  /// Nodes per axis for the tensor rule, total points for Sobol.
  int resolution() const noexcept { return resolution_; }
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  /// Weighted sum of values evaluated at points().
  double integrate(const Eigen::Ref<const Eigen::VectorXd>& values) const {
    if (values.size() != weights_.size())
      throw std::invalid_argument("QuadratureRule::integrate: size mismatch");
    return weights_.dot(values);
  }

 private:
  QuadratureRule(Kind kind, int resolution, Eigen::MatrixXd points, Eigen::VectorXd weights)
      : kind_(kind), resolution_(resolution), points_(std::move(points)),
        weights_(std::move(weights)) {}

  Kind kind_;
  int resolution_;
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

struct IntegrationResult {
  double value = 0.0;
  double abs_error = 0.0;
  int evaluations = 0;
};

/// Globally adaptive Gauss-Kronrod (G7/K15) quadrature on a finite interval.
/// Bisects the interval with the largest error estimate until the total
/// estimate drops below max(abs_tol, rel_tol * |value|).
IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double lo,
                                     double hi, double abs_tol = 1e-10, double rel_tol = 1e-12,
                                     int max_intervals = 2000);

/// Integral over the real line via x = center + scale * t / (1 - t^2), t in (-1, 1).
IntegrationResult integrate_real_line(const std::function<double(double)>& f, double center,
                                      double scale, double abs_tol = 1e-10,
                                      double rel_tol = 1e-12);

}  // namespace vbnn
