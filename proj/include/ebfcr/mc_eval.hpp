#pragma once

// Seeded Monte Carlo evaluation of the interval procedures under the
// spike-and-slab model: Bayes FCR, coverage among selected, average length.
//
// Replicate r of a scenario draws (theta, x) from KeyedStream(seed, r), so
// results do not depend on the worker count, and scenarios that share the
// generating fields see identical data.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ebfcr/compensated_sum.hpp"
#include "ebfcr/decision.hpp"
#include "ebfcr/error.hpp"
#include "ebfcr/estimation.hpp"
#include "ebfcr/model.hpp"
#include "ebfcr/procedures.hpp"
#include "ebfcr/rng.hpp"
#include "ebfcr/selection.hpp"

namespace ebfcr {

enum class EbMode { OraclePrior, EstimatedPrior };

inline std::string_view to_string(EbMode m) { return m == EbMode::OraclePrior ? "oracle" : "estimated"; }

struct Scenario {
  MixturePrior prior{0.1, 4.0, 1.0};
  std::size_t m = 1000;
  SelectionRule rule = Threshold{2.0};
  double q = 0.05;
  Procedure procedure = Procedure::EBFCR;
  EbMode eb_mode = EbMode::OraclePrior;
  std::size_t replicates = 10'000;
  std::uint64_t seed = 1;
  BonferroniBase bonferroni = BonferroniBase::Selected;
  FitMethod estimator = FitMethod::MarginalMLE;
  EmOptions fit_options{1e-7, 10'000, true, false};

  std::string label() const {
    std::string s(to_string(procedure));
    if (procedure != Procedure::BY) s += "/" + std::string(to_string(eb_mode));
    return s;
  }

  void validate() const {
    prior.validate();
    if (m < 2) throw ConfigError("scenario: m must be at least 2");
    if (replicates < 1) throw ConfigError("scenario: replicates must be at least 1");
    validate_q(q);
    validate_rule(rule, m);
    if (!(fit_options.tol > 0.0)) throw ConfigError("scenario: fit tol must be positive");
  }
};

struct ReplicateRow {
  std::size_t replicate = 0;
  std::size_t R = 0;
  std::size_t V = 0;  // selected regions missing their theta
  double sum_length = 0.0;
};

struct EvalReport {
  double fcr_hat = 0.0;                  // mean of V / max(R, 1)
  double fcr_se = 0.0;                   // sample sd of V / max(R, 1) over sqrt(replicates)
  double fcr_conditional = 0.0;          // mean of V / R over replicates with R >= 1
  double coverage_given_selected = 1.0;  // 1 - sum V / sum R
  double avg_length = 0.0;               // sum of lengths / sum R
  double avg_R = 0.0;
  double empty_selection_rate = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

struct EvalResult {
  Scenario scenario;
  EvalReport report;
  std::vector<ReplicateRow> rows;
};

namespace detail {

using ebfcr::CompensatedSum;

struct Workspace {
  SimulatedBatch data;
  std::vector<std::vector<std::size_t>> selected;  // per scenario
  std::vector<std::optional<MixturePrior>> fitted;  // per scenario
  std::vector<std::size_t> scratch;
};

inline bool uses_fit(const Scenario& s) { return s.procedure != Procedure::BY && s.eb_mode == EbMode::EstimatedPrior; }

inline bool same_fit(const Scenario& a, const Scenario& b) {
  if (a.estimator != b.estimator) return false;
  if (a.estimator == FitMethod::Moments) return true;
  return a.fit_options.tol == b.fit_options.tol && a.fit_options.max_iter == b.fit_options.max_iter &&
         a.fit_options.accelerate == b.fit_options.accelerate;
}

inline std::optional<MixturePrior> fit_prior(const Scenario& s, std::span<const double> x) {
  const double sigma2 = s.prior.sigma2;
  if (s.estimator == FitMethod::Moments) return fit_moments(x, sigma2).prior;
  return fit_marginal_mle(x, sigma2, default_start(x, sigma2), s.fit_options).prior;
}

inline ReplicateRow score_replicate(const Scenario& s, const SimulatedBatch& data,
                                    const std::vector<std::size_t>& selected, const MixturePrior& prior,
                                    std::size_t replicate) {
  ReplicateRow row;
  row.replicate = replicate;
  row.R = selected.size();
  if (row.R == 0) return row;
  const auto& theta = data.theta;
  const auto& x = data.x;
  CompensatedSum lengths;
  if (s.procedure == Procedure::BY) {
    const double sigma = std::sqrt(s.prior.sigma2);
    const double half = by_quantile(row.R, s.m, s.q) * sigma;
    for (std::size_t i : selected) {
      if (!(std::abs(x[i] - theta[i]) <= half)) ++row.V;
      lengths.add(2.0 * half);
    }
  } else {
    const double level =
        s.procedure == Procedure::QH ? qh_level(row.R, s.m, s.q, s.bonferroni) : eb_fcr_level(s.q);
    for (std::size_t i : selected) {
      const Posterior post = posterior_at(x[i], prior);
      const auto half = level_half_width(post, level);
      bool covered = theta[i] == 0.0 && post.w0 > 0.0;
      if (half) {
        // Closed-endpoint membership, evaluated on the same endpoints a
        // CredibleRegion would store.
        const double lo = post.center - *half;
        const double hi = post.center + *half;
        covered = covered || (lo <= theta[i] && theta[i] <= hi);
        lengths.add(hi - lo);
      }
      if (!covered) ++row.V;
    }
  }
  row.sum_length = lengths.value();
  if (!std::isfinite(row.sum_length)) throw NumericError("non-finite region length");
  return row;
}

// All scenarios must share prior, m, seed and replicates.
inline std::vector<std::vector<ReplicateRow>> run_paired(const std::vector<Scenario>& scenarios,
                                                         std::size_t threads) {
  const Scenario& base = scenarios.front();
  const std::size_t n = base.replicates;
  std::vector<std::vector<ReplicateRow>> rows(scenarios.size(), std::vector<ReplicateRow>(n));
  const double sigma = std::sqrt(base.prior.sigma2);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::size_t> failed_replicate;
  std::string failure;

  const auto worker = [&]() {
    Workspace ws;
    ws.selected.resize(scenarios.size());
    ws.fitted.resize(scenarios.size());
    constexpr std::size_t kChunk = 32;
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      for (std::size_t r = begin; r < end; ++r) {
        try {
          KeyedStream stream(base.seed, r);
          simulate_into(base.prior, base.m, stream, ws.data);
          for (auto& f : ws.fitted) f.reset();
          for (std::size_t k = 0; k < scenarios.size(); ++k) {
            const Scenario& s = scenarios[k];
            std::size_t same = 0;
            while (same < k && !(scenarios[same].rule == s.rule)) ++same;
            if (same == k) select_indices(ws.data.x, sigma, s.rule, ws.selected[k], ws.scratch);
            else ws.selected[k] = ws.selected[same];
            const MixturePrior* prior = &s.prior;
            if (uses_fit(s)) {
              std::size_t j = 0;
              while (j < k && !(uses_fit(scenarios[j]) && same_fit(scenarios[j], s))) ++j;
              if (j == k) ws.fitted[k] = fit_prior(s, ws.data.x);
              else ws.fitted[k] = ws.fitted[j];
              prior = &*ws.fitted[k];
            }
            rows[k][r] = score_replicate(s, ws.data, ws.selected[k], *prior, r);
          }
        } catch (const std::exception& e) {
          std::lock_guard lock(error_mutex);
          if (!failed_replicate || r < *failed_replicate) {
            failed_replicate = r;
            failure = e.what();
          }
          next.store(n);
          return;
        }
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (failed_replicate)
    throw NumericError("replicate " + std::to_string(*failed_replicate) + ": " + failure);
  return rows;
}

}  // namespace detail

/// Aggregates per-replicate rows in replicate order.
inline EvalReport aggregate(const std::vector<ReplicateRow>& rows, std::uint64_t seed) {
  EvalReport rep;
  rep.replicates = rows.size();
  rep.seed = seed;
  if (rows.empty()) return rep;
  const double n = static_cast<double>(rows.size());
  detail::CompensatedSum fcr, cond, lengths;
  std::size_t total_R = 0, total_V = 0, empty = 0;
  for (const auto& row : rows) {
    const double ratio = static_cast<double>(row.V) / static_cast<double>(std::max<std::size_t>(row.R, 1));
    fcr.add(ratio);
    if (row.R == 0)
      ++empty;
    else
      cond.add(ratio);
    lengths.add(row.sum_length);
    total_R += row.R;
    total_V += row.V;
  }
  rep.fcr_hat = fcr.value() / n;
  detail::CompensatedSum dev;
  for (const auto& row : rows) {
    const double ratio = static_cast<double>(row.V) / static_cast<double>(std::max<std::size_t>(row.R, 1));
    dev.add((ratio - rep.fcr_hat) * (ratio - rep.fcr_hat));
  }
  rep.fcr_se = rows.size() > 1 ? std::sqrt(dev.value() / (n - 1.0)) / std::sqrt(n) : 0.0;
  const std::size_t nonempty = rows.size() - empty;
  rep.fcr_conditional = nonempty > 0 ? cond.value() / static_cast<double>(nonempty) : 0.0;
  rep.coverage_given_selected =
      total_R > 0 ? 1.0 - static_cast<double>(total_V) / static_cast<double>(total_R) : 1.0;
  rep.avg_length = total_R > 0 ? lengths.value() / static_cast<double>(total_R) : 0.0;
  rep.avg_R = static_cast<double>(total_R) / n;
  rep.empty_selection_rate = static_cast<double>(empty) / n;
  return rep;
}

// Data generation is shared when prior, m, seed and replicates agree; with
// `same_selection` the rule and q must agree too.
inline void check_shared_generation(const std::vector<Scenario>& scenarios, bool same_selection) {
  if (scenarios.empty()) throw ConfigError("no scenarios given");
  const Scenario& base = scenarios.front();
  for (const auto& s : scenarios) {
    s.validate();
    if (!(s.prior == base.prior) || s.m != base.m || s.seed != base.seed || s.replicates != base.replicates)
      throw ConfigError("scenarios must share prior, m, seed and replicates");
    if (same_selection && (!(s.rule == base.rule) || s.q != base.q))
      throw ConfigError("compared scenarios must share the selection rule and q");
  }
}

/// Runs several scenarios over one shared stream of simulated replicates; they
/// may differ in rule, q and procedure settings. Each result equals what
/// run_scenario returns for that scenario alone.
inline std::vector<EvalResult> run_scenarios(const std::vector<Scenario>& scenarios, std::size_t threads = 1) {
  check_shared_generation(scenarios, false);
  auto rows = detail::run_paired(scenarios, threads);
  std::vector<EvalResult> out;
  out.reserve(scenarios.size());
  for (std::size_t k = 0; k < scenarios.size(); ++k)
    out.push_back({scenarios[k], aggregate(rows[k], scenarios[k].seed), std::move(rows[k])});
  return out;
}

inline EvalResult run_scenario(const Scenario& s, std::size_t threads = 1) {
  s.validate();
  auto rows = detail::run_paired({s}, threads);
  EvalResult out{s, aggregate(rows.front(), s.seed), std::move(rows.front())};
  return out;
}

struct ComparisonRow {
  std::string label;
  Procedure procedure = Procedure::BY;
  EbMode eb_mode = EbMode::OraclePrior;
  EvalReport report;
  double length_ratio_vs_by = 0.0;
};

struct Comparison {
  std::vector<EvalResult> results;
  std::vector<ComparisonRow> table;
  bool baseline_added = false;  // a BY run was appended to supply the ratio denominator
};

/// Runs scenarios that differ only in procedure settings on shared data and
/// tabulates each against B-Y.
inline Comparison compare_scenarios(std::vector<Scenario> scenarios, std::size_t threads = 1) {
  check_shared_generation(scenarios, true);
  const Scenario base = scenarios.front();
  Comparison cmp;
  const auto by = std::find_if(scenarios.begin(), scenarios.end(),
                               [](const Scenario& s) { return s.procedure == Procedure::BY; });
  std::size_t by_index = static_cast<std::size_t>(by - scenarios.begin());
  if (by == scenarios.end()) {
    Scenario extra = base;
    extra.procedure = Procedure::BY;
    scenarios.push_back(extra);
    cmp.baseline_added = true;
  }
  cmp.results = run_scenarios(scenarios, threads);
  const double by_length = cmp.results[by_index].report.avg_length;
  for (const auto& res : cmp.results) {
    ComparisonRow row{res.scenario.label(), res.scenario.procedure, res.scenario.eb_mode, res.report, 0.0};
    row.length_ratio_vs_by =
        by_length > 0.0 ? res.report.avg_length / by_length : std::numeric_limits<double>::quiet_NaN();
    cmp.table.push_back(std::move(row));
  }
  return cmp;
}

}  // namespace ebfcr
