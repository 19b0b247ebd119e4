#pragma once

#include "vbnn/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>

namespace vbnn {

/// Shape of a one-hidden-layer network: p covariates, k hidden nodes.
struct ModelDims {
  int p = 1;
  int k = 1;

  ModelDims() = default;
  ModelDims(int p_, int k_) : p(p_), k(k_) {
    if (p < 1 || k < 1) throw std::invalid_argument("ModelDims: p and k must be >= 1");
  }

  /// Total parameter count: beta0, k output weights and k (p + 1) hidden
  /// weights, i.e. 1 + k (p + 2). The often quoted 1 + k (p + 1) drops the
  /// output weights; both grow like k.
  int param_count() const noexcept { return 1 + k * (p + 2); }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Stable logistic 1 / (1 + e^-u).
template <typename Scalar>
Scalar logistic(Scalar u) noexcept {
  using std::exp;
  if (u >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-u));
  const Scalar e = exp(u);
  return e / (Scalar(1) + e);
}

/// Parameters of f(x) = beta0 + sum_j beta_j * logistic(gamma_j0 + sum_h gamma_jh x_h).
///
/// `gamma` is k x (p + 1); column 0 holds the hidden biases. The canonical
/// flat layout is [beta0, beta_1..beta_k, gamma_1,0..gamma_1,p, ...,
/// gamma_k,0..gamma_k,p], and every module indexes variational factors by it.
template <typename Scalar>
struct NetworkParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Scalar beta0 = Scalar(0);
  Vector beta;
  Matrix gamma;

  NetworkParams() = default;
  explicit NetworkParams(const ModelDims& dims)
      : beta0(0), beta(Vector::Zero(dims.k)), gamma(Matrix::Zero(dims.k, dims.p + 1)) {}

  ModelDims dims() const { return ModelDims(static_cast<int>(gamma.cols()) - 1, k()); }
  int k() const noexcept { return static_cast<int>(beta.size()); }
  int p() const noexcept { return static_cast<int>(gamma.cols()) - 1; }

  void check() const {
    if (beta.size() < 1 || gamma.rows() != beta.size() || gamma.cols() < 2)
      throw std::invalid_argument("NetworkParams: inconsistent dimensions");
  }

  Vector flatten() const {
    check();
    const int kk = k(), pp1 = p() + 1;
    Vector flat(1 + kk + kk * pp1);
    flat[0] = beta0;
    flat.segment(1, kk) = beta;
    for (int j = 0; j < kk; ++j) flat.segment(1 + kk + j * pp1, pp1) = gamma.row(j).transpose();
    return flat;
  }

  static NetworkParams unflatten(const ModelDims& dims, const Eigen::Ref<const Vector>& flat) {
    if (flat.size() != dims.param_count())
      throw std::invalid_argument("NetworkParams::unflatten: length does not match dims");
    NetworkParams out(dims);
    const int pp1 = dims.p + 1;
    out.beta0 = flat[0];
    out.beta = flat.segment(1, dims.k);
    for (int j = 0; j < dims.k; ++j)
      out.gamma.row(j) = flat.segment(1 + dims.k + j * pp1, pp1).transpose();
    return out;
  }

  Scalar sum_squares() const {
    return beta0 * beta0 + beta.squaredNorm() + gamma.squaredNorm();
  }

  Scalar sum_abs() const {
    using std::abs;
    return abs(beta0) + beta.cwiseAbs().sum() + gamma.cwiseAbs().sum();
  }

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.beta0 == b.beta0 && a.beta == b.beta && a.gamma == b.gamma;
  }
};

using Network = NetworkParams<double>;

/// Evaluates the network at one point x in [0,1]^p.
template <typename Scalar, typename Derived>
Scalar network_eval(const NetworkParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != params.p())
    throw std::invalid_argument("network_eval: point dimension does not match network");
  Scalar out = params.beta0;
  for (int j = 0; j < params.k(); ++j) {
    Scalar u = params.gamma(j, 0);
    for (int h = 0; h < params.p(); ++h) u += params.gamma(j, h + 1) * Scalar(x[h]);
    out += params.beta[j] * logistic(u);
  }
  return out;
}

/// Hidden pre-activations U = 1 gamma_0^T + X gamma_{1:p}^T for a batch of rows.
Eigen::MatrixXd hidden_preactivations(const Network& params, const Eigen::MatrixXd& xs);

/// Evaluates the network at every row of `xs` (n x p).
Eigen::VectorXd network_eval_batch(const Network& params, const Eigen::MatrixXd& xs);

/// Ground-truth regression function: a teacher network or a named analytic function.
class Truth {
 public:
  struct Analytic {
    std::string name;
    std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)> fn;
  };

  Truth() = default;
  explicit Truth(Network teacher) : impl_(std::move(teacher)) {}
  explicit Truth(Analytic analytic) : impl_(std::move(analytic)) {}

  /// Named analytic functions: "zero", "sine" (sin(2 pi x_1)), "product"
  /// (prod_h x_h), "additive" (sum_h (x_h - 1/2)^2).
  static Truth named(const std::string& name, int p);

  bool is_teacher() const noexcept { return std::holds_alternative<Network>(impl_); }
  const Network& teacher() const { return std::get<Network>(impl_); }
  std::string name() const;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd eval_batch(const Eigen::MatrixXd& xs) const;

 private:
  std::variant<std::monostate, Network, Analytic> impl_;
};

/// n paired observations with x_i in [0,1]^p, plus the generating ground truth.
struct RegressionDataset {
  Eigen::MatrixXd xs;  // n x p
  Eigen::VectorXd ys;  // n
  double sigma0 = 1.0;
  Truth truth;

  Eigen::Index size() const noexcept { return ys.size(); }
  int p() const noexcept { return static_cast<int>(xs.cols()); }
};

/// Sum over observations of log N(y_i | f(x_i), sigma^2).
double log_likelihood(const Network& params, double sigma, const RegressionDataset& data);

/// Draws x_i ~ U(0,1)^p and y_i = f0(x_i) + sigma0 z_i, deterministically from `seed`.
RegressionDataset simulate_dataset(const Truth& truth, double sigma0, int n, int p,
                                   std::uint64_t seed);

/// Teacher network with every coordinate drawn uniform on [-scale, scale].
Network make_teacher(int k_star, int p, double scale, std::uint64_t seed);

/// Embeds `net` into a wider network with `k` hidden nodes (extra nodes are zero).
Network pad_hidden_nodes(const Network& net, int k);

}  // namespace vbnn
