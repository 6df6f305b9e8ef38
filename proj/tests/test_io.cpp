#include <catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "ebfcr/io.hpp"

using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using namespace ebfcr;

namespace {

io::Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return io::parse_dataset(in);
}

std::size_t failing_line(const std::string& text) {
  try {
    parse(text);
  } catch (const InputError& e) {
    return e.line();
  }
  return 0;
}

std::string config_error(const std::string& text) {
  try {
    io::parse_config(io::json::parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("dataset parsing", "[io]") {
  const auto ds = parse("id,x\na,1.5\nb,-2\n\n c , 3e-1 \n");
  REQUIRE(ds.ids == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(ds.x == std::vector<double>{1.5, -2.0, 0.3});
  REQUIRE_FALSE(ds.sigma);

  const auto with_sigma = parse("x,sigma,id\n1,2,\"g1\"\n-1,2,g2\n");
  REQUIRE(with_sigma.ids == std::vector<std::string>{"g1", "g2"});
  REQUIRE(with_sigma.sigma == 2.0);
  // Equal within 1e-12 is accepted.
  REQUIRE(parse("id,x,sigma\na,1,1\nb,2,1.0000000000001\n").sigma == 1.0);
}

TEST_CASE("dataset errors carry line numbers", "[io]") {
  REQUIRE(failing_line("") == 1);
  REQUIRE(failing_line("id,x\n") == 1);
  REQUIRE(failing_line("name,value\na,1\n") == 1);
  REQUIRE(failing_line("id,x\na,1\nb\n") == 3);
  REQUIRE(failing_line("id,x\na,1\na,2\n") == 3);
  REQUIRE(failing_line("id,x\na,1\n,2\n") == 3);
  REQUIRE(failing_line("id,x\na,1\nb,abc\n") == 3);
  REQUIRE(failing_line("id,x\na,nan\n") == 2);
  REQUIRE(failing_line("id,x\na,inf\n") == 2);
  REQUIRE(failing_line("id,x\na,1.5x\n") == 2);
  REQUIRE(failing_line("id,x,sigma\na,1,1\nb,2,1.5\n") == 3);
  REQUIRE(failing_line("id,x,sigma\na,1,0\n") == 2);
  REQUIRE(failing_line("id,x,sigma\na,1,-1\n") == 2);
  REQUIRE_THROWS_WITH(parse("id,x\na,1\nb,2,3\n"), ContainsSubstring("line 3"));
  REQUIRE_THROWS_AS(io::load_dataset("/nonexistent/data.csv"), InputError);
}

TEST_CASE("dataset round trip", "[io]") {
  const std::vector<std::string> ids{"g1", "g2", "g3"};
  const std::vector<double> x{0.1, -1.0 / 3.0, 12345.678901234567};
  std::ostringstream out;
  io::write_dataset(out, ids, x, 1.25);
  REQUIRE(out.str().rfind("id,x,sigma\n", 0) == 0);
  const auto back = parse(out.str());
  REQUIRE(back.ids == ids);
  REQUIRE(back.x == x);  // 17 significant digits round-trip exactly
  REQUIRE(back.sigma == 1.25);

  std::ostringstream truth;
  io::write_truth(truth, ids, {0.0, 2.5, 0.0});
  REQUIRE(truth.str() == "id,theta\ng1,0\ng2,2.5\ng3,0\n");
}

TEST_CASE("configuration parsing", "[io]") {
  const auto cfg = io::parse_config(io::json::parse(R"({
    "sigma2": 2.0, "prior": {"p": 0.2, "tau2": 3.0}, "m": 500,
    "selection": {"rule": "topk", "k": 25}, "q": 0.1,
    "procedures": ["EBFCR", "BY"], "estimation": {"method": "moments"},
    "eb_mode": "estimated", "bonferroni": "total", "seed": 99, "replicates": 50,
    "dump_replicates": true})"));
  REQUIRE(cfg.sigma2 == 2.0);
  REQUIRE(cfg.has_prior);
  REQUIRE(cfg.prior == MixturePrior{0.2, 3.0, 2.0});
  REQUIRE(cfg.m == 500);
  REQUIRE(cfg.rule == SelectionRule{TopK{25}});
  REQUIRE(cfg.q == 0.1);
  REQUIRE(cfg.procedures == std::vector<Procedure>{Procedure::EBFCR, Procedure::BY});
  REQUIRE(cfg.estimation == io::EstimationMethod::Moments);
  REQUIRE(cfg.eb_mode == EbMode::EstimatedPrior);
  REQUIRE(cfg.bonferroni == BonferroniBase::Total);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.replicates == 50);
  REQUIRE(cfg.dump_replicates);

  const auto s = io::scenario_from(cfg, Procedure::QH);
  REQUIRE(s.procedure == Procedure::QH);
  REQUIRE(s.estimator == FitMethod::Moments);
  REQUIRE(s.prior == cfg.prior);
  REQUIRE_NOTHROW(s.validate());

  const auto defaults = io::parse_config(io::json::parse("{}"));
  REQUIRE_FALSE(defaults.has_prior);
  REQUIRE_FALSE(defaults.sigma2);
  REQUIRE(defaults.procedures.size() == 3);
}

TEST_CASE("configuration errors list every invalid field", "[io]") {
  const auto msg = config_error(R"({
    "q": 1.5, "replicates": 0, "procedures": ["BY", "XYZ"],
    "selection": {"rule": "bh", "alpha": 2}, "prior": {"p": -1},
    "eb_mode": "sometimes", "sigma2": "one", "colour": 3})");
  REQUIRE_THAT(msg, ContainsSubstring("invalid configuration:"));
  for (const char* field : {"q:", "replicates:", "XYZ", "selection.alpha", "prior.p", "prior.tau2: required",
                            "eb_mode", "sigma2: wrong type", "colour: unknown field"}) {
    INFO(field);
    REQUIRE_THAT(msg, ContainsSubstring(field));
  }
  REQUIRE_THAT(config_error(R"({"m": 10, "selection": {"rule": "topk", "k": 11}})"), ContainsSubstring("selection.k"));
  REQUIRE_THAT(config_error(R"({"selection": {"rule": "median"}})"), ContainsSubstring("unknown rule"));
  REQUIRE_THAT(config_error("[1, 2]"), ContainsSubstring("JSON object"));
  REQUIRE_THROWS_AS(io::load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("JSON serialization keys", "[io]") {
  FitResult fit;
  fit.prior = {0.1, 4.0, 1.0};
  fit.loglik = -12.5;
  fit.iterations = 7;
  fit.converged = true;
  fit.flags = {"clamped"};
  const auto j = io::to_json(fit);
  std::vector<std::string> keys;
  for (const auto& [key, value] : j.items()) keys.push_back(key);
  REQUIRE(keys == std::vector<std::string>{"p", "tau2", "sigma2", "loglik", "iterations", "converged", "method", "flags"});
  REQUIRE(j["method"] == "MarginalMLE");
  REQUIRE(j["flags"][0] == "clamped");
  REQUIRE(j["p"].get<double>() == 0.1);
}

TEST_CASE("interval CSV format", "[io]") {
  const auto batch = make_batch({3.0, -0.2, 0.5}, 1.0);
  const auto sel = select(batch, TopK{2});
  const auto rep = eb_fcr_intervals(batch, sel, {0.01, 1.0, 1.0}, 0.05);
  std::ostringstream out;
  io::write_interval_csv(out, rep);
  // Second row is {0} only: empty endpoints.
  REQUIRE(out.str() ==
          "procedure,id,x,lower,upper,includes_zero,length\n"
          "EBFCR,0," + io::format_double(3.0) + "," + io::format_double(rep.rows[0].region.intervals[0].lower) + "," +
              io::format_double(rep.rows[0].region.intervals[0].upper) + "," +
              (rep.rows[0].region.contains_zero() ? "true" : "false") + "," + io::format_double(rep.rows[0].length) +
              "\n"
              "EBFCR,2,0.5,,,true,0\n");
  REQUIRE(rep.rows[1].region.intervals.empty());
}

TEST_CASE("replicate CSV round trip and long format", "[io]") {
  Scenario s;
  s.m = 100;
  s.replicates = 30;
  s.procedure = Procedure::BY;
  const auto res = run_scenario(s);
  std::ostringstream out;
  io::write_replicate_csv(out, res.rows);
  REQUIRE(out.str().rfind("replicate,R,V,sum_length\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = io::parse_replicate_csv(in);
  REQUIRE(back.size() == res.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    REQUIRE(back[i].replicate == res.rows[i].replicate);
    REQUIRE(back[i].R == res.rows[i].R);
    REQUIRE(back[i].V == res.rows[i].V);
    REQUIRE(back[i].sum_length == res.rows[i].sum_length);
  }
  // The report is recomputable from the dump.
  const auto again = aggregate(back, s.seed);
  REQUIRE(std::abs(again.fcr_hat - res.report.fcr_hat) <= 1e-12);
  REQUIRE(std::abs(again.avg_length - res.report.avg_length) <= 1e-12);

  std::ostringstream long_csv;
  io::write_long_csv(long_csv, {res});
  std::istringstream lines(long_csv.str());
  std::string line;
  std::getline(lines, line);
  REQUIRE(line == "scenario,procedure,metric,value");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    REQUIRE(std::count(line.begin(), line.end(), ',') == 3);
  }
  REQUIRE(rows == 7);
}
