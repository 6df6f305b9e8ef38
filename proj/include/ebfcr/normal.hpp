#pragma once

// Gaussian density, distribution and quantile kernels shared by every module.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "ebfcr/error.hpp"

namespace ebfcr {

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
inline constexpr double kInvSqrt2 = 0.70710678118654752440;

// log(exp(a) + exp(b)) without overflow; either argument may be -inf.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

/// log of the Normal(mean, var) density at x.
inline double log_normal_pdf(double x, double mean, double var) {
  detail::require_finite(x, "x");
  detail::require_finite(mean, "mean");
  if (!(var > 0.0) || !std::isfinite(var)) throw DomainError("variance must be positive and finite");
  const double z = x - mean;
  return -detail::kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * z * z / var;
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(log_normal_pdf(x, mean, var));
}

/// Standard normal CDF, accurate in the lower tail.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * detail::kInvSqrt2); }

/// Standard normal upper tail 1 - Phi(z), accurate for large positive z.
inline double normal_sf(double z) { return 0.5 * std::erfc(z * detail::kInvSqrt2); }

/// Inverse of the standard normal CDF, -sqrt(2) erfc^-1(2u). The upper half
/// is mapped onto the lower tail by symmetry (1 - u is exact for u >= 0.5).
inline double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("normal_quantile: probability must lie in (0, 1)");
  if (u == 0.5) return 0.0;
  if (u > 0.5) return -normal_quantile(1.0 - u);
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// Two-sided p-value 2(1 - Phi(|z|)).
inline double two_sided_p(double z) { return std::erfc(std::abs(z) * detail::kInvSqrt2); }

}  // namespace ebfcr
