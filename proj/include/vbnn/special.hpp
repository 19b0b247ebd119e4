#pragma once

#include <cmath>
#include <numbers>

namespace vbnn {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)
inline constexpr double kEulerGamma = 0.57721566490153286061;

/// Softplus log(1 + e^x), stable for all finite x.
inline double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double normal_pdf(double t) noexcept {
  return std::exp(-0.5 * t * t - 0.5 * kLogTwoPi);
}

inline double normal_cdf(double t) noexcept {
  return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

/// log(1 - Phi(t)), accurate from t = -inf up to t ~ 1e154 (and -inf beyond).
double log_normal_sf(double t) noexcept;

/// Digamma psi(x) for x > 0. Recurrence to x >= 10, then the asymptotic series.
double digamma(double x);

/// Trigamma psi'(x) for x > 0.
double trigamma(double x);

/// log of the lower regularized incomplete gamma P(a, x); a > 0, x >= 0.
double log_gamma_p(double a, double x);

/// log of the upper regularized incomplete gamma Q(a, x); a > 0, x >= 0.
double log_gamma_q(double a, double x);

/// log(exp(a) + exp(b)) without overflow; handles -inf operands.
inline double log_add_exp(double a, double b) noexcept {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace vbnn
