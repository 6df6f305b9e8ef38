#pragma once

// Spike-and-slab normal model: theta = 0 with probability 1 - p, otherwise
// theta ~ Normal(0, tau2); X | theta ~ Normal(theta, sigma2) with sigma2 known.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ebfcr/error.hpp"
#include "ebfcr/normal.hpp"
#include "ebfcr/region.hpp"

namespace ebfcr {

struct MixturePrior {
  double p = 0.0;       // slab weight
  double tau2 = 0.0;    // slab variance
  double sigma2 = 1.0;  // known sampling variance

  /// Shrinkage factor tau2 / (tau2 + sigma2), in [0, 1).
  double shrinkage() const { return tau2 / (tau2 + sigma2); }

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("prior: p must lie in [0, 1]");
    if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw DomainError("prior: tau2 must be finite and >= 0");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw DomainError("prior: sigma2 must be finite and > 0");
  }

  friend bool operator==(const MixturePrior&, const MixturePrior&) = default;
};

// Posterior of theta given x: w0 * delta_0 + (1 - w0) * Normal(center, spread2).
struct Posterior {
  double w0 = 1.0;
  double center = 0.0;
  double spread2 = 0.0;

  double spread() const { return std::sqrt(spread2); }
};

namespace detail {

inline double log_or_neg_inf(double v) {
  return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
}

// Log joint densities of (x, spike) and (x, slab).
inline std::pair<double, double> log_components(double x, const MixturePrior& prior) {
  const double spike = log_or_neg_inf(1.0 - prior.p) + log_normal_pdf(x, 0.0, prior.sigma2);
  const double slab = log_or_neg_inf(prior.p) + log_normal_pdf(x, 0.0, prior.sigma2 + prior.tau2);
  return {spike, slab};
}

}  // namespace detail

inline double log_marginal_pdf(double x, const MixturePrior& prior) {
  prior.validate();
  const auto [spike, slab] = detail::log_components(x, prior);
  return detail::log_add_exp(spike, slab);
}

/// Marginal density of X: (1-p) N(x; 0, sigma2) + p N(x; 0, sigma2 + tau2).
inline double marginal_pdf(double x, const MixturePrior& prior) {
  return std::exp(log_marginal_pdf(x, prior));
}

/// Posterior decomposition at x. w0 is formed as a logistic of the log density
/// ratio, so it stays finite when both component densities underflow.
inline Posterior posterior_at(double x, const MixturePrior& prior) {
  prior.validate();
  detail::require_finite(x, "x");
  const auto [spike, slab] = detail::log_components(x, prior);
  Posterior post;
  if (spike == -std::numeric_limits<double>::infinity()) {
    post.w0 = 0.0;
  } else {
    post.w0 = 1.0 / (1.0 + std::exp(slab - spike));
  }
  const double b = prior.shrinkage();
  post.center = b * x;
  post.spread2 = b * prior.sigma2;
  return post;
}

/// Mass the Normal(center, spread2) slab puts on [lower, upper]. A zero spread
/// is a point mass at center.
inline double slab_interval_mass(const Interval& iv, const Posterior& post) {
  if (!(iv.lower <= iv.upper)) return 0.0;
  if (post.spread2 <= 0.0) return iv.contains(post.center) ? 1.0 : 0.0;
  const double s = post.spread();
  const double a = (iv.lower - post.center) / s;
  const double b = (iv.upper - post.center) / s;
  // Difference of upper tails is more accurate when both ends sit above the center.
  if (a > 0.0) return normal_sf(a) - normal_sf(b);
  return normal_cdf(b) - normal_cdf(a);
}

/// Posterior probability that theta lies in the region.
inline double posterior_region_mass(const CredibleRegion& region, const Posterior& post) {
  double slab = 0.0;
  for (const auto& iv : region.intervals) slab += slab_interval_mass(iv, post);
  const double spike = region.contains_zero() ? post.w0 : 0.0;
  return spike + (1.0 - post.w0) * slab;
}

}  // namespace ebfcr
