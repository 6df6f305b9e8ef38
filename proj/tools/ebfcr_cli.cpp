// ebfcr: command-line front end.
//
//   ebfcr simulate  --config C --out DIR            synthetic dataset + truth sidecar
//   ebfcr estimate  --config C --data D --out DIR   empirical Bayes fit
//   ebfcr intervals --config C --data D --out DIR   select and build regions per procedure
//   ebfcr evaluate  --config C --out DIR            Monte Carlo report per procedure
//   ebfcr compare   --config C --out DIR            paired Monte Carlo comparison vs B-Y
//
// Exit codes: 0 success, 1 input or configuration error, 2 non-convergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ebfcr/ebfcr.hpp"
#include "ebfcr/io.hpp"

namespace fs = std::filesystem;
using namespace ebfcr;
using io::json;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

struct CommonOptions {
  std::string config;
  std::string data;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

io::RunConfig load(const CommonOptions& opt) {
  auto cfg = io::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

void prepare_out(const CommonOptions& opt) {
  std::error_code ec;
  fs::create_directories(opt.out, ec);
  if (ec) throw InputError("cannot create output directory '" + opt.out + "': " + ec.message());
}

// Dataset sigma column wins over the config value.
Batch load_batch(const CommonOptions& opt, const io::RunConfig& cfg) {
  auto ds = io::load_dataset(opt.data);
  Batch batch;
  batch.ids = std::move(ds.ids);
  batch.x = std::move(ds.x);
  if (ds.sigma) {
    const double from_file = *ds.sigma * *ds.sigma;
    if (cfg.sigma2 && std::abs(*cfg.sigma2 - from_file) > 1e-12 * from_file)
      std::cerr << "warning: dataset sigma column overrides config sigma2 (" << io::format_double(*cfg.sigma2)
                << " -> " << io::format_double(from_file) << ")\n";
    batch.sigma2 = from_file;
  } else if (cfg.sigma2) {
    batch.sigma2 = *cfg.sigma2;
  } else {
    throw ConfigError("invalid configuration:\n  sigma2: required when the dataset has no sigma column");
  }
  batch.validate();
  return batch;
}

FitResult run_fit(const Batch& batch, const io::RunConfig& cfg) {
  if (cfg.estimation == io::EstimationMethod::Moments) return fit_moments(batch);
  return fit_marginal_mle(batch, default_start(batch.x, batch.sigma2), cfg.em);
}

int cmd_simulate(const CommonOptions& opt) {
  const auto cfg = load(opt);
  if (!cfg.has_prior) throw ConfigError("invalid configuration:\n  prior: required for simulate");
  prepare_out(opt);
  const auto sim = simulate(cfg.prior, cfg.m, cfg.seed, 0);
  const std::size_t width = std::to_string(cfg.m).size();
  std::vector<std::string> ids;
  ids.reserve(cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    std::string n = std::to_string(i + 1);
    ids.push_back("g" + std::string(width - n.size(), '0') + n);
  }
  auto data = open_output(fs::path(opt.out) / "dataset.csv");
  io::write_dataset(data, ids, sim.x, std::sqrt(cfg.prior.sigma2));
  auto truth = open_output(fs::path(opt.out) / "truth.csv");
  io::write_truth(truth, ids, sim.theta);
  return kOk;
}

int cmd_estimate(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto batch = load_batch(opt, cfg);
  prepare_out(opt);
  if (cfg.estimation == io::EstimationMethod::None)
    throw ConfigError("invalid configuration:\n  estimation.method: 'none' has nothing to estimate");
  const auto fit = run_fit(batch, cfg);
  write_json(fs::path(opt.out) / "fit.json", io::to_json(fit));
  return fit.converged ? kOk : kNotConverged;
}

int cmd_intervals(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto batch = load_batch(opt, cfg);
  prepare_out(opt);

  int status = kOk;
  json summary;
  MixturePrior prior{cfg.prior.p, cfg.prior.tau2, batch.sigma2};
  const bool needs_prior = std::any_of(cfg.procedures.begin(), cfg.procedures.end(),
                                       [](Procedure p) { return p != Procedure::BY; });
  if (needs_prior) {
    if (cfg.estimation != io::EstimationMethod::None) {
      const auto fit = run_fit(batch, cfg);
      write_json(fs::path(opt.out) / "fit.json", io::to_json(fit));
      summary["fit"] = io::to_json(fit);
      prior = fit.prior;
      if (!fit.converged) status = kNotConverged;
    } else if (!cfg.has_prior) {
      throw ConfigError("invalid configuration:\n  prior: required when estimation.method is 'none'");
    }
  }

  const auto sel = select(batch, cfg.rule);
  summary["m"] = sel.m;
  summary["R"] = sel.R();
  summary["selection"] = io::rule_json(cfg.rule);
  summary["q"] = cfg.q;
  summary["prior"] = {{"p", prior.p}, {"tau2", prior.tau2}, {"sigma2", prior.sigma2}};
  summary["empty_selection"] = sel.selected.empty();
  if (sel.selected.empty()) std::cerr << "note: selection rule selected no populations\n";

  json averages = json::object();
  std::vector<IntervalReport> reports;
  for (Procedure proc : cfg.procedures) {
    auto rep = run_procedure(proc, batch, sel, prior, cfg.q, cfg.bonferroni);
    const std::string name(to_string(proc));
    auto csv = open_output(fs::path(opt.out) / ("intervals_" + name + ".csv"));
    io::write_interval_csv(csv, rep);
    write_json(fs::path(opt.out) / ("intervals_" + name + ".json"), io::to_json(rep));
    averages[name] = rep.average_length;
    reports.push_back(std::move(rep));
  }
  summary["average_length"] = averages;
  json ratios = json::object();
  for (const auto& a : reports)
    for (const auto& b : reports)
      if (a.procedure != b.procedure && b.average_length > 0.0)
        ratios[std::string(to_string(a.procedure)) + "/" + std::string(to_string(b.procedure))] =
            a.average_length / b.average_length;
  summary["length_ratios"] = ratios;
  write_json(fs::path(opt.out) / "summary.json", summary);
  return status;
}

std::vector<Scenario> scenarios_for(const io::RunConfig& cfg) {
  if (!cfg.has_prior) throw ConfigError("invalid configuration:\n  prior: required for Monte Carlo evaluation");
  std::vector<Scenario> out;
  for (Procedure proc : cfg.procedures) out.push_back(io::scenario_from(cfg, proc));
  return out;
}

std::string file_label(const Scenario& s) {
  auto label = s.label();
  std::replace(label.begin(), label.end(), '/', '_');
  return label;
}

void dump_replicates(const CommonOptions& opt, const std::vector<EvalResult>& results) {
  for (const auto& res : results) {
    auto out = open_output(fs::path(opt.out) / ("replicates_" + file_label(res.scenario) + ".csv"));
    io::write_replicate_csv(out, res.rows);
  }
}

int cmd_evaluate(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto scenarios = scenarios_for(cfg);
  prepare_out(opt);
  const auto results = run_scenarios(scenarios, opt.threads);
  json reports = json::array();
  for (const auto& res : results) reports.push_back({{"scenario", io::to_json(res.scenario)}, {"report", io::to_json(res.report)}});
  write_json(fs::path(opt.out) / "evaluate.json", json{{"results", reports}});
  auto long_csv = open_output(fs::path(opt.out) / "evaluate_long.csv");
  io::write_long_csv(long_csv, results);
  if (cfg.dump_replicates) dump_replicates(opt, results);
  return kOk;
}

int cmd_compare(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto scenarios = scenarios_for(cfg);
  prepare_out(opt);
  const auto cmp = compare_scenarios(scenarios, opt.threads);
  json rows = json::array();
  for (const auto& row : cmp.table)
    rows.push_back({{"procedure", row.label},
                    {"fcr_hat", row.report.fcr_hat},
                    {"fcr_se", row.report.fcr_se},
                    {"avg_length", row.report.avg_length},
                    {"avg_R", row.report.avg_R},
                    {"length_ratio_vs_BY", row.length_ratio_vs_by}});
  write_json(fs::path(opt.out) / "compare.json",
             json{{"scenario", io::to_json(cmp.results.front().scenario)},
                  {"baseline_added", cmp.baseline_added},
                  {"table", rows}});
  auto csv = open_output(fs::path(opt.out) / "compare.csv");
  io::write_compare_csv(csv, cmp);
  auto long_csv = open_output(fs::path(opt.out) / "compare_long.csv");
  io::write_long_csv(long_csv, cmp.results);
  if (cfg.dump_replicates) dump_replicates(opt, cmp.results);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interval estimates for selected parameters under a spike-and-slab normal model"};
  app.require_subcommand(1);

  CommonOptions opt;
  const auto add_common = [&opt](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", opt.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    if (needs_data) sub->add_option("--data", opt.data, "dataset CSV (id,x[,sigma])")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "override the configured seed");
    sub->add_option("--threads", opt.threads, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  };
  auto* simulate_cmd = app.add_subcommand("simulate", "write a synthetic dataset and its truth sidecar");
  add_common(simulate_cmd, false);
  auto* estimate_cmd = app.add_subcommand("estimate", "fit the prior hyperparameters to a dataset");
  add_common(estimate_cmd, true);
  auto* intervals_cmd = app.add_subcommand("intervals", "select populations and write regions per procedure");
  add_common(intervals_cmd, true);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Monte Carlo evaluation of each configured procedure");
  add_common(evaluate_cmd, false);
  auto* compare_cmd = app.add_subcommand("compare", "paired Monte Carlo comparison against B-Y");
  add_common(compare_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (simulate_cmd->parsed()) return cmd_simulate(opt);
    if (estimate_cmd->parsed()) return cmd_estimate(opt);
    if (intervals_cmd->parsed()) return cmd_intervals(opt);
    if (evaluate_cmd->parsed()) return cmd_evaluate(opt);
    if (compare_cmd->parsed()) return cmd_compare(opt);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNotConverged;
  }
  return kInputError;
}
