#pragma once

// Rules choosing which populations receive an interval. All rules act on the
// two-sided statistic |x_i| / sigma.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "ebfcr/error.hpp"
#include "ebfcr/normal.hpp"

namespace ebfcr {

struct Batch {
  std::vector<std::string> ids;
  std::vector<double> x;
  double sigma2 = 1.0;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.empty()) throw ConfigError("batch: at least one observation is required");
    if (ids.size() != x.size()) throw ConfigError("batch: ids and x differ in length");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("batch: sigma2 must be finite and > 0");
    std::unordered_set<std::string> seen;
    seen.reserve(ids.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i])) throw ConfigError("batch: x[" + std::to_string(i) + "] is not finite");
      if (!seen.insert(ids[i]).second) throw ConfigError("batch: duplicate id '" + ids[i] + "'");
    }
  }
};

/// Batch with ids "0", "1", ... for in-memory use.
inline Batch make_batch(std::vector<double> x, double sigma2) {
  Batch b;
  b.ids.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) b.ids.push_back(std::to_string(i));
  b.x = std::move(x);
  b.sigma2 = sigma2;
  return b;
}

struct Threshold {
  double c = 0.0;
  friend bool operator==(const Threshold&, const Threshold&) = default;
};
struct TopK {
  std::size_t k = 1;
  friend bool operator==(const TopK&, const TopK&) = default;
};
struct BHLevel {
  double alpha = 0.05;
  friend bool operator==(const BHLevel&, const BHLevel&) = default;
};

using SelectionRule = std::variant<Threshold, TopK, BHLevel>;

inline std::string describe(const SelectionRule& rule) {
  struct {
    std::string operator()(const Threshold& r) const { return "threshold(c=" + std::to_string(r.c) + ")"; }
    std::string operator()(const TopK& r) const { return "topk(k=" + std::to_string(r.k) + ")"; }
    std::string operator()(const BHLevel& r) const { return "bh(alpha=" + std::to_string(r.alpha) + ")"; }
  } visitor;
  return std::visit(visitor, rule);
}

inline void validate_rule(const SelectionRule& rule, std::size_t m) {
  if (const auto* t = std::get_if<Threshold>(&rule)) {
    if (!(t->c >= 0.0) || !std::isfinite(t->c)) throw ConfigError("selection: threshold c must be finite and >= 0");
  } else if (const auto* k = std::get_if<TopK>(&rule)) {
    if (k->k < 1 || k->k > m) throw ConfigError("selection: top-k requires 1 <= k <= m");
  } else if (const auto* b = std::get_if<BHLevel>(&rule)) {
    if (!(b->alpha > 0.0 && b->alpha < 1.0)) throw ConfigError("selection: BH alpha must lie in (0, 1)");
  }
}

struct SelectionResult {
  SelectionRule rule;
  std::vector<std::size_t> selected;  // ascending
  std::size_t m = 0;

  std::size_t R() const { return selected.size(); }
};

/// Core of select(): writes the ascending selected indices into `out`, reusing
/// its storage. `order` is scratch space.
inline void select_indices(std::span<const double> x, double sigma, const SelectionRule& rule,
                           std::vector<std::size_t>& out, std::vector<std::size_t>& order) {
  const std::size_t m = x.size();
  validate_rule(rule, m);
  out.clear();
  if (const auto* t = std::get_if<Threshold>(&rule)) {
    const double cut = t->c * sigma;
    for (std::size_t i = 0; i < m; ++i)
      if (std::abs(x[i]) >= cut) out.push_back(i);
    return;
  }
  order.resize(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Larger |x| first, smaller index on ties.
  const auto more_extreme = [&x](std::size_t a, std::size_t b) {
    const double xa = std::abs(x[a]);
    const double xb = std::abs(x[b]);
    return xa != xb ? xa > xb : a < b;
  };
  if (const auto* k = std::get_if<TopK>(&rule)) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k->k - 1), order.end(),
                     more_extreme);
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k->k));
    std::sort(out.begin(), out.end());
    return;
  }
  // Benjamini-Hochberg step-up on p_i = 2(1 - Phi(|x_i| / sigma)). Ordering by
  // |x| descending is ordering by p ascending.
  const double alpha = std::get<BHLevel>(rule).alpha;
  std::sort(order.begin(), order.end(), more_extreme);
  std::size_t cutoff = 0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const double pv = two_sided_p(x[order[rank - 1]] / sigma);
    if (pv <= alpha * static_cast<double>(rank) / static_cast<double>(m)) {
      cutoff = rank;
      break;
    }
  }
  out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cutoff));
  std::sort(out.begin(), out.end());
}

inline SelectionResult select(const Batch& batch, const SelectionRule& rule) {
  batch.validate();
  SelectionResult result{rule, {}, batch.size()};
  std::vector<std::size_t> scratch;
  select_indices(batch.x, std::sqrt(batch.sigma2), rule, result.selected, scratch);
  return result;
}

}  // namespace ebfcr
