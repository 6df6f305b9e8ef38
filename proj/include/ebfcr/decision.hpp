#pragma once

// Region estimates for one posterior.
//
// The loss charged for reporting region C when the parameter is theta is
//
//     L(theta, C) = k1 * length(C) + k2 * [C carries the atom {0}] - [theta in C]
//
// k1 prices length against coverage of the continuous part, k2 prices the
// zero atom separately (its length is zero, so without k2 the atom would be
// free). With k2 = 0 zero is always in the region, with k2 >= 1 the atom is
// never worth carrying. The posterior expected loss is
// k1 * length + k2 * includes_zero - posterior_region_mass.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "ebfcr/error.hpp"
#include "ebfcr/model.hpp"
#include "ebfcr/normal.hpp"
#include "ebfcr/region.hpp"

namespace ebfcr {

struct LossParams {
  double k1 = 1.0;  // cost per unit length
  double k2 = 0.0;  // cost of carrying the zero atom

  void validate() const {
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw ConfigError("loss: k1 must be finite and >= 0");
    if (!(k2 >= 0.0) || !std::isfinite(k2)) throw ConfigError("loss: k2 must be finite and >= 0");
    if (k1 == 0.0 && k2 == 0.0) throw ConfigError("loss: at least one of k1, k2 must be positive");
  }
};

inline double expected_loss(const CredibleRegion& region, const Posterior& post, const LossParams& loss) {
  return loss.k1 * region.length() + (region.includes_zero ? loss.k2 : 0.0) -
         posterior_region_mass(region, post);
}

namespace detail {

// Region {0 if atom} U [center - half, center + half]; no interval when half is empty.
inline CredibleRegion centered_region(const Posterior& post, bool atom, std::optional<double> half) {
  CredibleRegion r;
  r.includes_zero = atom;
  if (half) r.intervals.push_back({post.center - *half, post.center + *half});
  return r;
}

// a is strictly smaller than b: shorter, or equal length without the atom.
inline bool smaller_region(const CredibleRegion& a, const CredibleRegion& b) {
  const double la = a.length();
  const double lb = b.length();
  if (la != lb) return la < lb;
  if (a.includes_zero != b.includes_zero) return !a.includes_zero;
  return a.intervals.size() < b.intervals.size();
}

inline constexpr double kTieTolerance = 1e-14;

// Minimizer over half-widths h >= 0 of 2 k1 h - (1 - w0)(2 Phi(h / s) - 1). The
// objective is convex in h, so the stationary point is the unique minimum.
inline double slab_half_width(const Posterior& post, double k1) {
  const double s = post.spread();
  const double slab_weight = 1.0 - post.w0;
  const double peak = slab_weight / (s * std::sqrt(2.0 * std::numbers::pi));
  if (peak <= k1) return 0.0;
  if (k1 == 0.0) throw ConfigError("loss: k1 = 0 makes the optimal slab interval unbounded");
  return s * std::sqrt(2.0 * std::log(peak / k1));
}

inline CredibleRegion pick_minimum(const std::vector<CredibleRegion>& candidates, const Posterior& post,
                                   const LossParams& loss) {
  const CredibleRegion* best = nullptr;
  double best_loss = 0.0;
  for (const auto& c : candidates) {
    const double l = expected_loss(c, post, loss);
    if (best == nullptr || l < best_loss - kTieTolerance ||
        (std::abs(l - best_loss) <= kTieTolerance && smaller_region(c, *best))) {
      best = &c;
      best_loss = l;
    }
  }
  CredibleRegion out = *best;
  out.achieved_mass = posterior_region_mass(out, post);
  return out;
}

}  // namespace detail

/// Bayes rule: the region minimizing posterior expected loss. Only regions made
/// of the atom plus one interval centered at the slab mean are considered; the
/// slab is symmetric unimodal so nothing else can do better. Candidates are the
/// convex optimum h* of the slab term, and max(h*, |center|), which reaches zero
/// through the interval instead of through the atom.
inline CredibleRegion bayes_region(const Posterior& post, const LossParams& loss) {
  loss.validate();
  std::vector<CredibleRegion> candidates;
  if (post.w0 >= 1.0) {
    candidates.push_back(detail::centered_region(post, false, std::nullopt));
    candidates.push_back(detail::centered_region(post, true, std::nullopt));
    return detail::pick_minimum(candidates, post, loss);
  }
  std::vector<std::optional<double>> halves;
  if (post.spread2 <= 0.0) {
    halves = {std::nullopt, 0.0};
  } else {
    const double h = detail::slab_half_width(post, loss.k1);
    const auto as_half = [](double v) { return v > 0.0 ? std::optional<double>(v) : std::nullopt; };
    halves = {as_half(h), std::optional<double>(std::max(h, std::abs(post.center)))};
  }
  for (bool atom : {false, true})
    for (const auto& h : halves) candidates.push_back(detail::centered_region(post, atom, h));
  return detail::pick_minimum(candidates, post, loss);
}

/// Exhaustive minimizer over the atom flag and centered half-widths
/// 0, step, 2 step, ..., up to 10 posterior spreads, plus |center|.
/// Test oracle for bayes_region.
inline CredibleRegion oracle_region(const Posterior& post, const LossParams& loss, double grid_step) {
  if (!(grid_step > 0.0)) throw DomainError("oracle_region: grid_step must be positive");
  std::vector<CredibleRegion> candidates;
  if (post.spread2 <= 0.0) {
    // A zero-width interval only matters when the slab carries weight.
    for (bool atom : {false, true}) {
      candidates.push_back(detail::centered_region(post, atom, std::nullopt));
      if (post.w0 < 1.0) candidates.push_back(detail::centered_region(post, atom, 0.0));
    }
    return detail::pick_minimum(candidates, post, loss);
  }
  const double limit = 10.0 * post.spread();
  const auto steps = static_cast<std::size_t>(std::floor(limit / grid_step));
  // Half-widths on the grid plus the one where the interval first reaches
  // zero, the only jump in the loss; scanned in increasing size, strict
  // improvement keeps ties on the smaller region.
  std::vector<double> widths;
  widths.reserve(steps + 2);
  for (std::size_t j = 0; j <= steps; ++j) widths.push_back(static_cast<double>(j) * grid_step);
  const double reach = std::abs(post.center);
  if (reach > 0.0 && reach <= limit) widths.insert(std::upper_bound(widths.begin(), widths.end(), reach), reach);
  CredibleRegion best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double h : widths) {
    for (bool atom : {false, true}) {
      auto candidate = detail::centered_region(post, atom, h == 0.0 ? std::nullopt : std::optional<double>(h));
      const double l = expected_loss(candidate, post, loss);
      if (l < best_loss) {
        best = std::move(candidate);
        best_loss = l;
      }
    }
  }
  best.achieved_mass = posterior_region_mass(best, post);
  return best;
}

/// Half-width of the centered slab interval in the shortest level region, or
/// nullopt when the zero atom alone already carries the level.
inline std::optional<double> level_half_width(const Posterior& post, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("credible level must lie in (0, 1)");
  if (post.w0 >= level) return std::nullopt;
  const double slab_level = (level - post.w0) / (1.0 - post.w0);
  return normal_quantile(0.5 * (1.0 + slab_level)) * post.spread();
}

/// Shortest region with posterior mass >= level: the atom whenever w0 > 0, plus
/// a centered slab interval carrying the remaining (level - w0) / (1 - w0) of
/// the slab when the atom alone falls short.
inline CredibleRegion credible_region_at_level(const Posterior& post, double level) {
  auto r = detail::centered_region(post, post.w0 > 0.0, level_half_width(post, level));
  r.achieved_mass = posterior_region_mass(r, post);
  return r;
}

}  // namespace ebfcr
