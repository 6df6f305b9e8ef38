// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--replicates N] [--threads T]
//
// The defaults (10^5 replicates, all hardware threads) are the gate; a smaller
// N is only for quick local runs and is flagged in the output.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ebfcr/ebfcr.hpp"

using namespace ebfcr;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& what) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... Args>
void note(const char* fmt, Args... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct GridCell {
  double p;
  double tau2;
  SelectionRule rule;
  EvalReport eb_oracle, eb_estimated, qh, by;
};

// One shared run per prior: the three rules and four procedure settings see
// the same replicates, and each replicate's fit is reused across rules.
std::vector<GridCell> run_grid(std::size_t replicates, std::size_t threads) {
  const SelectionRule rules[] = {Threshold{2.0}, TopK{50}, BHLevel{0.05}};
  std::vector<GridCell> cells;
  for (double p : {0.05, 0.1, 0.5})
    for (double tau2 : {1.0, 4.0}) {
      Scenario base;
      base.prior = {p, tau2, 1.0};
      base.m = 1000;
      base.q = 0.05;
      base.replicates = replicates;
      base.seed = 20260101;
      std::vector<Scenario> list;
      for (const auto& rule : rules) {
        base.rule = rule;
        for (int k = 0; k < 4; ++k) {
          Scenario s = base;
          s.procedure = k < 2 ? Procedure::EBFCR : (k == 2 ? Procedure::QH : Procedure::BY);
          s.eb_mode = k == 1 ? EbMode::EstimatedPrior : EbMode::OraclePrior;
          list.push_back(s);
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = run_scenarios(list, threads);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (std::size_t r = 0; r < 3; ++r) {
        const auto* four = &res[4 * r];
        cells.push_back({p, tau2, rules[r], four[0].report, four[1].report, four[2].report, four[3].report});
        const auto& c = cells.back();
        note("p=%-4g tau2=%g %-20s avg_R=%7.2f  fcr oracle %.4f (se %.4f)  estimated %.4f (se %.4f)", p, tau2,
             describe(c.rule).c_str(), c.by.avg_R, c.eb_oracle.fcr_hat, c.eb_oracle.fcr_se, c.eb_estimated.fcr_hat,
             c.eb_estimated.fcr_se);
      }
      note("[prior p=%g tau2=%g: %.0f s]", p, tau2, secs);
    }
  return cells;
}

void criterion_fcr(const std::vector<GridCell>& cells) {
  bool ok1 = true, ok2 = true;
  double worst1 = -1.0, worst2 = -1.0;
  for (const auto& c : cells) {
    ok1 = ok1 && c.eb_oracle.fcr_hat <= 0.05 + 3.0 * c.eb_oracle.fcr_se;
    ok2 = ok2 && c.eb_estimated.fcr_hat <= 0.05 + 0.01 + 3.0 * c.eb_estimated.fcr_se;
    worst1 = std::max(worst1, c.eb_oracle.fcr_hat - 3.0 * c.eb_oracle.fcr_se - 0.05);
    worst2 = std::max(worst2, c.eb_estimated.fcr_hat - 3.0 * c.eb_estimated.fcr_se - 0.05);
  }
  verdict(1, ok1, "EBFCR with the true prior: fcr_hat <= 0.05 + 3 se on all 18 cells (max fcr_hat - 3se - q = " +
                      fmt("%+.4f", worst1) + ")");
  verdict(2, ok2, "EBFCR with a per-replicate fit: fcr_hat <= 0.06 + 3 se on all 18 cells (max fcr_hat - 3se - q = " +
                      fmt("%+.4f", worst2) + ")");
}

void criterion_lengths(const std::vector<GridCell>& cells) {
  bool ok = true;
  std::size_t checked = 0;
  double lo_qh = INFINITY, hi_qh = 0.0, lo_by = INFINITY, hi_by = 0.0;
  for (const auto& c : cells) {
    if (!(c.by.avg_R > 1.0)) continue;
    ++checked;
    const double rq = c.eb_oracle.avg_length / c.qh.avg_length;
    const double rb = c.eb_oracle.avg_length / c.by.avg_length;
    ok = ok && c.eb_oracle.avg_length < c.qh.avg_length && c.eb_oracle.avg_length < c.by.avg_length;
    lo_qh = std::min(lo_qh, rq), hi_qh = std::max(hi_qh, rq);
    lo_by = std::min(lo_by, rb), hi_by = std::max(hi_by, rb);
    note("p=%-4g tau2=%g %-20s EBFCR/QH %.3f  EBFCR/BY %.3f", c.p, c.tau2, describe(c.rule).c_str(), rq, rb);
  }
  note("simulated ratio ranges: EBFCR/QH %.3f-%.3f, EBFCR/BY %.3f-%.3f; real-data reference values 0.57 and 0.66",
       lo_qh, hi_qh, lo_by, hi_by);
  verdict(4, ok && checked > 0,
          "EBFCR shorter than QH and BY in all " + std::to_string(checked) + " cells with avg_R > 1");
}

void criterion_no_selection(std::size_t replicates, std::size_t threads) {
  Scenario s;
  s.prior = {0.1, 4.0, 1.0};
  s.m = 1000;
  s.rule = TopK{1000};
  s.procedure = Procedure::BY;
  s.replicates = replicates;
  s.seed = 3;
  const auto rep = run_scenario(s, threads).report;
  verdict(3, std::abs(rep.fcr_hat - 0.05) <= 3.0 * rep.fcr_se,
          "BY with TopK{m}: |fcr_hat - 0.05| <= 3 se (fcr_hat " + fmt("%.5f", rep.fcr_hat) + ", se " +
              fmt("%.5f", rep.fcr_se) + ")");
}

void criterion_oracle() {
  std::mt19937_64 gen(5150);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_loss = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Posterior post{u(gen), 6.0 * (u(gen) - 0.5), 0.05 + 2.0 * u(gen)};
    const LossParams loss{0.02 + 0.4 * u(gen), u(gen)};
    const double fast = expected_loss(bayes_region(post, loss), post, loss);
    const double slow = expected_loss(oracle_region(post, loss, 1e-4), post, loss);
    worst_loss = std::max(worst_loss, std::abs(fast - slow));
  }
  double worst_mass = INFINITY, worst_echo = 0.0;
  for (int trial = 0; trial < 10'000; ++trial) {
    const Posterior post{u(gen), 10.0 * (u(gen) - 0.5), 0.01 + 4.0 * u(gen)};
    const double level = 0.001 + 0.998 * u(gen);
    const auto r = credible_region_at_level(post, level);
    const double mass = posterior_region_mass(r, post);
    worst_mass = std::min(worst_mass, mass - level);
    worst_echo = std::max(worst_echo, std::abs(mass - r.achieved_mass));
  }
  verdict(5, worst_loss <= 1e-6 && worst_mass >= -1e-10 && worst_echo <= 1e-10,
          "Bayes rule vs grid oracle max loss gap " + fmt("%.2e", worst_loss) + " (<= 1e-6); level regions min mass - level " +
              fmt("%.2e", worst_mass) + " over 1e4 inputs");
}

void criterion_degenerate(std::size_t threads) {
  const double sigma2 = 1.5, tau2 = 2.5, q = 0.05;
  const double b = tau2 / (tau2 + sigma2);
  const double z = 1.959963984540054;  // quantile at 0.975, computed independently
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sim = simulate({1.0, tau2, sigma2}, 500, seed);
    const auto batch = make_batch(sim.x, sigma2);
    for (SelectionRule rule : {SelectionRule{Threshold{1.0}}, SelectionRule{TopK{500}}}) {
      const auto rep = eb_fcr_intervals(batch, select(batch, rule), {1.0, tau2, sigma2}, q);
      for (const auto& row : rep.rows) {
        if (row.region.includes_zero || row.region.intervals.size() != 1) worst = INFINITY;
        else {
          const double half = z * std::sqrt(b * sigma2);
          worst = std::max(worst, std::abs(row.region.intervals[0].lower - (b * row.x - half)));
          worst = std::max(worst, std::abs(row.region.intervals[0].upper - (b * row.x + half)));
        }
      }
    }
  }
  bool zero_ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sim = simulate({0.0, 4.0, 1.0}, 1000, seed);
    const auto batch = make_batch(sim.x, 1.0);
    const auto rep = eb_fcr_intervals(batch, select(batch, TopK{100}), {0.0, 4.0, 1.0}, q);
    for (const auto& row : rep.rows) zero_ok = zero_ok && row.region.includes_zero && row.region.intervals.empty();
  }
  Scenario s;
  s.prior = {0.0, 4.0, 1.0};
  s.rule = TopK{100};
  s.replicates = 2000;
  const auto mc = run_scenario(s, threads).report;
  zero_ok = zero_ok && mc.coverage_given_selected == 1.0 && mc.avg_length == 0.0;
  verdict(6, worst <= 1e-10 && zero_ok,
          "p=1 endpoints vs closed form max error " + fmt("%.2e", worst) + " (<= 1e-10); p=0 regions are {0} with coverage " +
              fmt("%.3f", mc.coverage_given_selected));
}

void criterion_estimation() {
  const auto sim = simulate({0.1, 4.0, 1.0}, 100'000, 20240601);
  EmOptions opts;
  opts.record_trace = true;
  const auto fit = fit_marginal_mle(sim.x, 1.0, default_start(sim.x, 1.0), opts);
  bool monotone = true;
  std::size_t steps = 0;
  const auto check = [&](const FitResult& f) {
    for (std::size_t i = 1; i < f.loglik_trace.size(); ++i, ++steps)
      monotone = monotone && f.loglik_trace[i] >= f.loglik_trace[i - 1] - 1e-9;
  };
  check(fit);
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const MixturePrior truth{u(gen), 0.2 + 8.0 * u(gen), 1.0};
    const auto data = simulate(truth, 2000, 70 + trial);
    for (bool accelerate : {false, true}) {
      EmOptions o;
      o.accelerate = accelerate;
      o.record_trace = true;
      check(fit_marginal_mle(data.x, 1.0, {0.05 + 0.9 * u(gen), 0.1 + 10.0 * u(gen), 1.0}, o));
    }
  }
  const bool close = std::abs(fit.prior.p - 0.1) <= 0.01 && std::abs(fit.prior.tau2 - 4.0) <= 0.3;
  verdict(7, fit.converged && close && monotone,
          "m=1e5 fit p=" + fmt("%.4f", fit.prior.p) + " tau2=" + fmt("%.4f", fit.prior.tau2) +
              " (tolerances 0.01, 0.3); loglik monotone over " + std::to_string(steps) + " EM steps");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EBFCR_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_cli() {
  const fs::path dir = fs::temp_directory_path() / "ebfcr_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "sim.json") << R"({"prior": {"p": 0.1, "tau2": 4}, "sigma2": 1, "m": 1000, "seed": 9})";
  std::ofstream(dir / "run.json") << R"({"prior": {"p": 0.1, "tau2": 4}, "sigma2": 1, "m": 1000, "seed": 9,
    "replicates": 300, "eb_mode": "estimated", "procedures": ["BY", "QH", "EBFCR"], "dump_replicates": true})";
  const std::string sim = (dir / "sim.json").string(), cfg = (dir / "run.json").string();

  bool ok = run_cli("simulate --config " + sim + " --out " + (dir / "data").string()) == 0;
  const std::string data = (dir / "data" / "dataset.csv").string();
  const std::vector<std::string> commands{
      "simulate --config " + sim, "estimate --config " + cfg + " --data " + data,
      "intervals --config " + cfg + " --data " + data, "evaluate --config " + cfg, "compare --config " + cfg};
  std::size_t files = 0;
  for (std::size_t k = 0; k < commands.size(); ++k) {
    const fs::path a = dir / ("a" + std::to_string(k)), b = dir / ("b" + std::to_string(k));
    ok = ok && run_cli(commands[k] + " --threads 1 --out " + a.string()) == 0;
    ok = ok && run_cli(commands[k] + " --threads 3 --out " + b.string()) == 0;
    if (!ok) break;
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      ok = ok && fs::exists(b / entry.path().filename()) && slurp(entry.path()) == slurp(b / entry.path().filename());
    }
    ok = ok && std::distance(fs::directory_iterator(a), fs::directory_iterator{}) ==
                   std::distance(fs::directory_iterator(b), fs::directory_iterator{});
  }
  verdict(8, ok && files > 0,
          "all five commands byte-identical across --threads 1 and 3 (" + std::to_string(files) + " files compared)");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t replicates = 100'000;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--replicates") replicates = std::stoul(argv[i + 1]);
    else if (flag == "--threads") threads = std::stoul(argv[i + 1]);
  }
  if (replicates != 100'000) std::printf("note: %zu replicates per scenario, below the gate's 100000\n", replicates);
  const auto t0 = std::chrono::steady_clock::now();

  const auto cells = run_grid(replicates, threads);
  criterion_fcr(cells);
  criterion_no_selection(replicates, threads);
  criterion_lengths(cells);
  criterion_oracle();
  criterion_degenerate(threads);
  criterion_estimation();
  criterion_cli();

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s: %d criteria failed (%.0f s, %zu threads)\n", failures ? "FAILED" : "OK", failures, secs, threads);
  return failures ? 1 : 0;
}
