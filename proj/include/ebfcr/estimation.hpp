#pragma once

// Empirical Bayes fits of (p, tau2) from the marginal of X with sigma2 known.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebfcr/compensated_sum.hpp"
#include "ebfcr/error.hpp"
#include "ebfcr/model.hpp"
#include "ebfcr/normal.hpp"
#include "ebfcr/selection.hpp"

namespace ebfcr {

enum class FitMethod { MarginalMLE, Moments };

inline std::string_view to_string(FitMethod m) {
  return m == FitMethod::MarginalMLE ? "MarginalMLE" : "Moments";
}

struct FitResult {
  MixturePrior prior;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  FitMethod method = FitMethod::MarginalMLE;
  std::vector<std::string> flags;
  std::vector<double> loglik_trace;  // filled when EmOptions::record_trace is set

  bool has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

struct EmOptions {
  double tol = 1e-8;
  std::size_t max_iter = 10'000;
  // SQUAREM extrapolation with a monotone fallback to the plain EM step.
  bool accelerate = false;
  bool record_trace = false;
};

namespace detail {

inline constexpr double kPClamp = 1e-12;

struct EmState {
  double p = 0.5;
  double tau2 = 1.0;
};

// One pass over the data: log-likelihood at `s` and the EM update from `s`.
struct EmPass {
  double loglik = 0.0;
  EmState next;
};

inline EmPass em_pass(std::span<const double> x2, double sigma2, const EmState& s) {
  const double v = sigma2 + s.tau2;
  const double log_norm_spike = -kLogSqrt2Pi - 0.5 * std::log(sigma2);
  const double inv_spike = 0.5 / sigma2;
  EmPass out;
  out.next = s;
  if (s.p <= 0.0 || s.p >= 1.0) {
    // One component carries all the mass; responsibilities are constant.
    const double var = s.p <= 0.0 ? sigma2 : v;
    const double log_norm = -kLogSqrt2Pi - 0.5 * std::log(var);
    CompensatedSum ll;
    double sx2 = 0.0;
    for (double q : x2) {
      ll.add(log_norm - 0.5 * q / var);
      sx2 += q;
    }
    out.loglik = ll.value();
    if (s.p >= 1.0) out.next.tau2 = std::max(0.0, sx2 / static_cast<double>(x2.size()) - sigma2);
    return out;
  }
  const double p = std::clamp(s.p, kPClamp, 1.0 - kPClamp);
  const double log_odds = std::log(p) - std::log1p(-p) - 0.5 * std::log(v / sigma2);
  const double slope = 0.5 / sigma2 - 0.5 / v;
  const double log1mp = std::log1p(-p);
  CompensatedSum ll;
  double sr = 0.0, srx2 = 0.0;
  for (double q : x2) {
    const double d = log_odds + slope * q;  // log slab/spike joint density ratio
    const double e = std::exp(-std::abs(d));
    const double r = d > 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    ll.add(log1mp + log_norm_spike - inv_spike * q + std::max(d, 0.0) + std::log1p(e));
    sr += r;
    srx2 += r * q;
  }
  out.loglik = ll.value();
  out.next.p = sr / static_cast<double>(x2.size());
  if (sr > 0.0) out.next.tau2 = std::max(0.0, srx2 / sr - sigma2);
  // A zero slab variance makes the slab identical to the spike; the same
  // likelihood is attained at p = 0, which is where the fit is parked.
  if (out.next.tau2 == 0.0 || out.next.p <= kPClamp) out.next.p = 0.0;
  return out;
}

inline double param_change(const EmState& a, const EmState& b) {
  return std::max(std::abs(a.p - b.p), std::abs(a.tau2 - b.tau2));
}

inline void require_finite_loglik(double ll) {
  if (!std::isfinite(ll)) throw NumericError("marginal log-likelihood is not finite");
}

inline void check_sample(std::span<const double> x, double sigma2) {
  if (x.size() < 2) throw ConfigError("estimation requires at least two observations");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("estimation: sigma2 must be finite and > 0");
}

}  // namespace detail

/// Marginal log-likelihood sum_i log m(x_i).
inline double marginal_loglik(std::span<const double> xs, const MixturePrior& prior) {
  prior.validate();
  CompensatedSum ll;
  for (double x : xs) ll.add(log_marginal_pdf(x, prior));
  return ll.value();
}

/// Marginal maximum likelihood by EM on the two-component marginal
/// (1-p) N(0, sigma2) + p N(0, sigma2 + tau2). The sigma2 of `init` is ignored.
inline FitResult fit_marginal_mle(std::span<const double> x, double sigma2, const MixturePrior& init,
                                  const EmOptions& opts = {}) {
  detail::check_sample(x, sigma2);
  MixturePrior{init.p, init.tau2, sigma2}.validate();
  if (!(opts.tol > 0.0)) throw ConfigError("estimation: tol must be positive");
  std::vector<double> x2(x.size());
  std::transform(x.begin(), x.end(), x2.begin(), [](double v) { return v * v; });

  FitResult fit;
  fit.method = FitMethod::MarginalMLE;
  detail::EmState state{init.p, init.tau2};
  double ll = 0.0;

  while (fit.iterations < opts.max_iter) {
    const auto first = detail::em_pass(x2, sigma2, state);
    detail::require_finite_loglik(first.loglik);
    if (opts.record_trace) fit.loglik_trace.push_back(first.loglik);
    ll = first.loglik;
    detail::EmState next = first.next;

    if (opts.accelerate) {
      const auto second = detail::em_pass(x2, sigma2, first.next);
      const detail::EmState r{first.next.p - state.p, first.next.tau2 - state.tau2};
      const detail::EmState v{second.next.p - first.next.p - r.p, second.next.tau2 - first.next.tau2 - r.tau2};
      const double nr = std::hypot(r.p, r.tau2);
      const double nv = std::hypot(v.p, v.tau2);
      next = second.next;
      if (nv > 0.0 && std::isfinite(second.loglik)) {
        // Halve the extrapolation toward the plain double step until it does
        // at least as well as the second plain step's starting point.
        for (double alpha = std::min(-1.0, -nr / nv); alpha < -1.0; alpha = 0.5 * (alpha - 1.0)) {
          detail::EmState jump{state.p - 2.0 * alpha * r.p + alpha * alpha * v.p,
                               state.tau2 - 2.0 * alpha * r.tau2 + alpha * alpha * v.tau2};
          jump.p = std::clamp(jump.p, 0.0, 1.0);
          jump.tau2 = std::max(0.0, jump.tau2);
          const auto landed = detail::em_pass(x2, sigma2, jump);
          if (std::isfinite(landed.loglik) && landed.loglik >= second.loglik) {
            next = landed.next;
            break;
          }
          if (alpha > -1.5) break;
        }
      }
    }

    ++fit.iterations;
    const double change = detail::param_change(state, next);
    state = next;
    if (change < opts.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.prior = MixturePrior{state.p, state.tau2, sigma2};
  ll = detail::em_pass(x2, sigma2, state).loglik;
  detail::require_finite_loglik(ll);
  if (opts.record_trace) fit.loglik_trace.push_back(ll);
  fit.loglik = ll;
  if (state.p == 0.0) {
    fit.flags.emplace_back("p_boundary");
    fit.flags.emplace_back("tau2_unidentified");
    fit.prior.tau2 = init.tau2;
  }
  if (!fit.converged) fit.flags.emplace_back("max_iter_reached");
  return fit;
}

inline FitResult fit_marginal_mle(const Batch& batch, const MixturePrior& init, const EmOptions& opts = {}) {
  batch.validate();
  return fit_marginal_mle(batch.x, batch.sigma2, init, opts);
}

struct MomentSolution {
  double p = 0.0;
  double tau2 = 0.0;
  bool clamped = false;
  bool degenerate = false;
};

/// Inverse of the moment map: E[X^2] = sigma2 + p tau2 and
/// E[X^4] = 3(1-p) sigma2^2 + 3p (sigma2 + tau2)^2, so p tau2 = E[X^2] - sigma2
/// and p tau2^2 = (E[X^4] - 3 sigma2^2 - 6 sigma2 p tau2) / 3.
inline MomentSolution solve_moments(double m2, double m4, double sigma2) {
  MomentSolution sol;
  const double excess2 = m2 - sigma2;
  const double excess4 = (m4 - 3.0 * sigma2 * sigma2 - 6.0 * sigma2 * excess2) / 3.0;
  if (excess2 <= 0.0 || excess4 <= 0.0) {
    sol.degenerate = true;
    sol.clamped = true;
    return sol;
  }
  sol.tau2 = excess4 / excess2;
  sol.p = excess2 * excess2 / excess4;
  if (sol.p > 1.0) {
    // Tails too light for a mixture: pure slab matching E[X^2].
    sol.p = 1.0;
    sol.tau2 = excess2;
    sol.clamped = true;
  }
  return sol;
}

/// Method-of-moments fit from the sample second and fourth moments.
inline FitResult fit_moments(std::span<const double> xs, double sigma2) {
  detail::check_sample(xs, sigma2);
  const double n = static_cast<double>(xs.size());
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double q = x * x;
    m2 += q;
    m4 += q * q;
  }
  const auto sol = solve_moments(m2 / n, m4 / n, sigma2);

  FitResult fit;
  fit.method = FitMethod::Moments;
  fit.converged = true;
  if (sol.degenerate) fit.flags.emplace_back("degenerate_moments");
  if (sol.clamped) fit.flags.emplace_back("clamped");
  fit.prior = MixturePrior{sol.p, sol.tau2, sigma2};
  fit.loglik = marginal_loglik(xs, fit.prior);
  detail::require_finite_loglik(fit.loglik);
  return fit;
}

inline FitResult fit_moments(const Batch& batch) {
  batch.validate();
  return fit_moments(batch.x, batch.sigma2);
}

/// Start used by the pipelines: the moment fit when it is interior. With
/// excess variance but tails too light for a mixture, a near pure slab
/// matching the variance; otherwise (0.5, sigma2).
inline MixturePrior default_start(std::span<const double> x, double sigma2) {
  const auto mom = fit_moments(x, sigma2);
  if (mom.prior.p > 0.0 && mom.prior.tau2 > 0.0) return MixturePrior{std::min(mom.prior.p, 0.99), mom.prior.tau2, sigma2};
  double m2 = 0.0;
  for (double v : x) m2 += v * v;
  m2 /= static_cast<double>(x.size());
  if (m2 > sigma2) return MixturePrior{0.99, m2 - sigma2, sigma2};
  return MixturePrior{0.5, sigma2, sigma2};
}

}  // namespace ebfcr
