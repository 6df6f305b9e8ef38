#pragma once

// The three interval procedures for selected populations:
//   BY     frequentist FCR intervals x_i +- sigma z(1 - R q / (2m)),
//   QH     Bonferroni posterior regions at level 1 - q / R,
//   EBFCR  posterior regions at level 1 - q, centered at the shrunken mean.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ebfcr/decision.hpp"
#include "ebfcr/error.hpp"
#include "ebfcr/model.hpp"
#include "ebfcr/normal.hpp"
#include "ebfcr/selection.hpp"

namespace ebfcr {

enum class Procedure { BY, QH, EBFCR };

inline std::string_view to_string(Procedure p) {
  switch (p) {
    case Procedure::BY: return "BY";
    case Procedure::QH: return "QH";
    case Procedure::EBFCR: return "EBFCR";
  }
  return "?";
}

inline std::optional<Procedure> parse_procedure(std::string_view s) {
  if (s == "BY") return Procedure::BY;
  if (s == "QH") return Procedure::QH;
  if (s == "EBFCR") return Procedure::EBFCR;
  return std::nullopt;
}

// Error budget split for the Bonferroni regions: over the R selected (default)
// or over all m populations.
enum class BonferroniBase { Selected, Total };

struct ReportRow {
  std::size_t index = 0;
  std::string id;
  double x = 0.0;
  CredibleRegion region;
  double length = 0.0;
};

struct IntervalReport {
  Procedure procedure = Procedure::BY;
  double q = 0.05;
  std::size_t R = 0;
  std::size_t m = 0;
  std::vector<ReportRow> rows;
  double average_length = 0.0;
  bool empty_selection = false;
};

inline void validate_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("q must lie in (0, 1)");
}

/// Half-width multiplier (in units of sigma) of the B-Y intervals.
inline double by_quantile(std::size_t R, std::size_t m, double q) {
  return normal_quantile(1.0 - static_cast<double>(R) * q / (2.0 * static_cast<double>(m)));
}

inline CredibleRegion by_region(double x, double sigma, double z) {
  CredibleRegion r;
  r.intervals.push_back({x - z * sigma, x + z * sigma});
  r.includes_zero = r.intervals.front().contains(0.0);
  r.achieved_mass = 0.0;  // frequentist interval; no posterior attached
  return r;
}

inline double qh_level(std::size_t R, std::size_t m, double q, BonferroniBase base) {
  const double n = static_cast<double>(base == BonferroniBase::Selected ? R : m);
  return 1.0 - q / n;
}

inline double eb_fcr_level(double q) { return 1.0 - q; }

namespace detail {

inline void check_prior_matches(const Batch& batch, const MixturePrior& prior) {
  prior.validate();
  if (std::abs(prior.sigma2 - batch.sigma2) > 1e-12 * batch.sigma2)
    throw ConfigError("prior sigma2 differs from the batch sigma2");
}

template <class RegionFn>
IntervalReport build_report(Procedure proc, const Batch& batch, const SelectionResult& sel, double q,
                            RegionFn&& region_for) {
  IntervalReport rep;
  rep.procedure = proc;
  rep.q = q;
  rep.R = sel.R();
  rep.m = sel.m;
  rep.empty_selection = sel.selected.empty();
  rep.rows.reserve(sel.selected.size());
  double total = 0.0;
  for (std::size_t i : sel.selected) {
    if (i >= batch.size()) throw ConfigError("selection index out of range for batch");
    ReportRow row;
    row.index = i;
    row.id = batch.ids[i];
    row.x = batch.x[i];
    row.region = region_for(batch.x[i]);
    row.length = row.region.length();
    total += row.length;
    rep.rows.push_back(std::move(row));
  }
  rep.average_length = rep.rows.empty() ? 0.0 : total / static_cast<double>(rep.rows.size());
  return rep;
}

inline void check_selection(const Batch& batch, const SelectionResult& sel, double q) {
  validate_q(q);
  if (sel.m != batch.size()) throw ConfigError("selection was made on a batch of a different size");
}

}  // namespace detail

inline IntervalReport by_intervals(const Batch& batch, const SelectionResult& sel, double q) {
  detail::check_selection(batch, sel, q);
  const double sigma = std::sqrt(batch.sigma2);
  const double z = sel.R() == 0 ? 0.0 : by_quantile(sel.R(), sel.m, q);
  return detail::build_report(Procedure::BY, batch, sel, q, [&](double x) { return by_region(x, sigma, z); });
}

inline IntervalReport qh_intervals(const Batch& batch, const SelectionResult& sel, const MixturePrior& prior,
                                   double q, BonferroniBase base = BonferroniBase::Selected) {
  detail::check_selection(batch, sel, q);
  detail::check_prior_matches(batch, prior);
  const double level = sel.R() == 0 ? 0.0 : qh_level(sel.R(), sel.m, q, base);
  return detail::build_report(Procedure::QH, batch, sel, q, [&](double x) {
    return credible_region_at_level(posterior_at(x, prior), level);
  });
}

inline IntervalReport eb_fcr_intervals(const Batch& batch, const SelectionResult& sel, const MixturePrior& prior,
                                       double q) {
  detail::check_selection(batch, sel, q);
  detail::check_prior_matches(batch, prior);
  const double level = eb_fcr_level(q);
  return detail::build_report(Procedure::EBFCR, batch, sel, q, [&](double x) {
    return credible_region_at_level(posterior_at(x, prior), level);
  });
}

/// Dispatch by tag. `prior` is ignored by BY.
inline IntervalReport run_procedure(Procedure proc, const Batch& batch, const SelectionResult& sel,
                                    const MixturePrior& prior, double q,
                                    BonferroniBase base = BonferroniBase::Selected) {
  switch (proc) {
    case Procedure::BY: return by_intervals(batch, sel, q);
    case Procedure::QH: return qh_intervals(batch, sel, prior, q, base);
    case Procedure::EBFCR: return eb_fcr_intervals(batch, sel, prior, q);
  }
  throw ConfigError("unknown procedure");
}

}  // namespace ebfcr
