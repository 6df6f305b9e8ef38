#pragma once

// File formats: dataset and truth CSVs, run configuration, JSON and CSV
// serialization of fits, interval reports and evaluation reports.
//
// Dataset CSV: header with columns id, x and optionally sigma (any order).
// Fields are comma separated; surrounding whitespace and double quotes are
// stripped; embedded commas are not supported.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"  // nlohmann/json, vendored

#include "ebfcr/error.hpp"
#include "ebfcr/estimation.hpp"
#include "ebfcr/mc_eval.hpp"
#include "ebfcr/procedures.hpp"
#include "ebfcr/selection.hpp"

namespace ebfcr::io {

using json = nlohmann::ordered_json;

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

inline bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace detail

struct Dataset {
  std::vector<std::string> ids;
  std::vector<double> x;
  std::optional<double> sigma;  // common sigma column, when the file has one
};

inline Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> col_id, col_x, col_sigma;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto header = detail::split_fields(line);
    columns = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == "id") col_id = c;
      else if (header[c] == "x") col_x = c;
      else if (header[c] == "sigma") col_sigma = c;
    }
    break;
  }
  if (columns == 0) throw InputError("dataset is empty", line_no == 0 ? 1 : line_no);
  if (!col_id || !col_x) throw InputError("header must contain columns 'id' and 'x'", line_no);

  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != columns)
      throw InputError("expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    const std::string& id = fields[*col_id];
    if (id.empty()) throw InputError("empty id", line_no);
    if (!seen.insert(id).second) throw InputError("duplicate id '" + id + "'", line_no);
    const auto x = detail::parse_double(fields[*col_x]);
    if (!x || !std::isfinite(*x)) throw InputError("x is not a finite number: '" + fields[*col_x] + "'", line_no);
    if (col_sigma) {
      const auto s = detail::parse_double(fields[*col_sigma]);
      if (!s || !(*s > 0.0) || !std::isfinite(*s))
        throw InputError("sigma is not a positive number: '" + fields[*col_sigma] + "'", line_no);
      if (!ds.sigma) {
        ds.sigma = *s;
      } else if (std::abs(*s - *ds.sigma) > 1e-12 * std::max(1.0, *ds.sigma)) {
        throw InputError("sigma differs from earlier rows; the model needs one common sigma", line_no);
      }
    }
    ds.ids.push_back(id);
    ds.x.push_back(*x);
  }
  if (ds.x.empty()) throw InputError("dataset has no data rows", line_no);
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const std::vector<std::string>& ids, const std::vector<double>& x,
                          double sigma) {
  out << "id,x,sigma\n";
  for (std::size_t i = 0; i < x.size(); ++i) out << ids[i] << ',' << format_double(x[i]) << ',' << format_double(sigma) << '\n';
}

inline void write_truth(std::ostream& out, const std::vector<std::string>& ids, const std::vector<double>& theta) {
  out << "id,theta\n";
  for (std::size_t i = 0; i < theta.size(); ++i) out << ids[i] << ',' << format_double(theta[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration

enum class EstimationMethod { None, MarginalMLE, Moments };

struct RunConfig {
  std::optional<double> sigma2;
  MixturePrior prior{0.1, 4.0, 1.0};
  bool has_prior = false;
  std::size_t m = 1000;
  SelectionRule rule = Threshold{2.0};
  double q = 0.05;
  std::vector<Procedure> procedures{Procedure::BY, Procedure::QH, Procedure::EBFCR};
  EstimationMethod estimation = EstimationMethod::MarginalMLE;
  EmOptions em{};
  bool em_given = false;  // estimation.tol / max_iter / accelerate set explicitly
  EbMode eb_mode = EbMode::OraclePrior;
  BonferroniBase bonferroni = BonferroniBase::Selected;
  std::uint64_t seed = 1;
  std::size_t replicates = 10'000;
  bool dump_replicates = false;
};

namespace detail {

class FieldErrors {
 public:
  void add(std::string msg) { errors_.push_back(std::move(msg)); }
  bool empty() const { return errors_.empty(); }
  std::string joined() const {
    std::string s = "invalid configuration:";
    for (const auto& e : errors_) s += "\n  " + e;
    return s;
  }

 private:
  std::vector<std::string> errors_;
};

template <class T>
std::optional<T> get_field(const json& j, const std::string& key, FieldErrors& errs, const std::string& path) {
  if (!j.contains(key)) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    errs.add(path + key + ": wrong type");
    return std::nullopt;
  }
}

}  // namespace detail

/// Parses and validates a JSON configuration; every invalid field is reported
/// in one ConfigError.
inline RunConfig parse_config(const json& j) {
  RunConfig cfg;
  detail::FieldErrors errs;
  if (!j.is_object()) throw ConfigError("invalid configuration:\n  top level must be a JSON object");

  static const std::unordered_set<std::string> known{
      "sigma2", "prior", "m", "selection", "q", "procedures", "estimation", "eb_mode", "bonferroni",
      "seed", "replicates", "dump_replicates"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) errs.add(key + ": unknown field");

  if (auto v = detail::get_field<double>(j, "sigma2", errs, "")) {
    if (!(*v > 0.0) || !std::isfinite(*v)) errs.add("sigma2: must be finite and > 0");
    else cfg.sigma2 = *v;
  }
  if (j.contains("prior")) {
    const auto& pj = j["prior"];
    if (!pj.is_object()) {
      errs.add("prior: must be an object");
    } else {
      cfg.has_prior = true;
      if (auto v = detail::get_field<double>(pj, "p", errs, "prior.")) cfg.prior.p = *v;
      else if (!pj.contains("p")) errs.add("prior.p: required");
      if (auto v = detail::get_field<double>(pj, "tau2", errs, "prior.")) cfg.prior.tau2 = *v;
      else if (!pj.contains("tau2")) errs.add("prior.tau2: required");
      if (!(cfg.prior.p >= 0.0 && cfg.prior.p <= 1.0)) errs.add("prior.p: must lie in [0, 1]");
      if (!(cfg.prior.tau2 >= 0.0) || !std::isfinite(cfg.prior.tau2)) errs.add("prior.tau2: must be finite and >= 0");
    }
  }
  if (auto v = detail::get_field<long long>(j, "m", errs, "")) {
    if (*v < 1) errs.add("m: must be >= 1");
    else cfg.m = static_cast<std::size_t>(*v);
  }
  if (j.contains("selection")) {
    const auto& sj = j["selection"];
    const auto rule = sj.is_object() ? detail::get_field<std::string>(sj, "rule", errs, "selection.") : std::nullopt;
    if (!rule) {
      errs.add("selection.rule: required (threshold | topk | bh)");
    } else if (*rule == "threshold") {
      const auto c = detail::get_field<double>(sj, "c", errs, "selection.");
      if (!c || !(*c >= 0.0) || !std::isfinite(*c)) errs.add("selection.c: required, finite and >= 0");
      else cfg.rule = Threshold{*c};
    } else if (*rule == "topk") {
      const auto k = detail::get_field<long long>(sj, "k", errs, "selection.");
      if (!k || *k < 1) errs.add("selection.k: required and >= 1");
      else cfg.rule = TopK{static_cast<std::size_t>(*k)};
    } else if (*rule == "bh") {
      const auto a = detail::get_field<double>(sj, "alpha", errs, "selection.");
      if (!a || !(*a > 0.0 && *a < 1.0)) errs.add("selection.alpha: required and in (0, 1)");
      else cfg.rule = BHLevel{*a};
    } else {
      errs.add("selection.rule: unknown rule '" + *rule + "'");
    }
  }
  if (auto v = detail::get_field<double>(j, "q", errs, "")) {
    if (!(*v > 0.0 && *v < 1.0)) errs.add("q: must lie in (0, 1)");
    else cfg.q = *v;
  }
  if (j.contains("procedures")) {
    if (!j["procedures"].is_array() || j["procedures"].empty()) {
      errs.add("procedures: must be a non-empty array");
    } else {
      cfg.procedures.clear();
      for (const auto& pj : j["procedures"]) {
        const auto proc = pj.is_string() ? parse_procedure(pj.get<std::string>()) : std::nullopt;
        if (!proc) errs.add("procedures: unknown procedure " + pj.dump() + " (BY | QH | EBFCR)");
        else cfg.procedures.push_back(*proc);
      }
    }
  }
  if (j.contains("estimation")) {
    const auto& ej = j["estimation"];
    if (!ej.is_object()) {
      errs.add("estimation: must be an object");
    } else {
      if (auto v = detail::get_field<std::string>(ej, "method", errs, "estimation.")) {
        if (*v == "mle") cfg.estimation = EstimationMethod::MarginalMLE;
        else if (*v == "moments") cfg.estimation = EstimationMethod::Moments;
        else if (*v == "none") cfg.estimation = EstimationMethod::None;
        else errs.add("estimation.method: unknown method '" + *v + "' (mle | moments | none)");
      }
      if (auto v = detail::get_field<double>(ej, "tol", errs, "estimation.")) {
        if (!(*v > 0.0)) errs.add("estimation.tol: must be > 0");
        else cfg.em.tol = *v;
        cfg.em_given = true;
      }
      if (auto v = detail::get_field<long long>(ej, "max_iter", errs, "estimation.")) {
        if (*v < 1) errs.add("estimation.max_iter: must be >= 1");
        else cfg.em.max_iter = static_cast<std::size_t>(*v);
        cfg.em_given = true;
      }
      if (auto v = detail::get_field<bool>(ej, "accelerate", errs, "estimation.")) {
        cfg.em.accelerate = *v;
        cfg.em_given = true;
      }
    }
  }
  if (auto v = detail::get_field<std::string>(j, "eb_mode", errs, "")) {
    if (*v == "oracle") cfg.eb_mode = EbMode::OraclePrior;
    else if (*v == "estimated") cfg.eb_mode = EbMode::EstimatedPrior;
    else errs.add("eb_mode: unknown mode '" + *v + "' (oracle | estimated)");
  }
  if (auto v = detail::get_field<std::string>(j, "bonferroni", errs, "")) {
    if (*v == "selected") cfg.bonferroni = BonferroniBase::Selected;
    else if (*v == "total") cfg.bonferroni = BonferroniBase::Total;
    else errs.add("bonferroni: unknown base '" + *v + "' (selected | total)");
  }
  if (auto v = detail::get_field<unsigned long long>(j, "seed", errs, "")) cfg.seed = *v;
  if (auto v = detail::get_field<long long>(j, "replicates", errs, "")) {
    if (*v < 1) errs.add("replicates: must be >= 1");
    else cfg.replicates = static_cast<std::size_t>(*v);
  }
  if (auto v = detail::get_field<bool>(j, "dump_replicates", errs, "")) cfg.dump_replicates = *v;

  if (const auto* k = std::get_if<TopK>(&cfg.rule); k && j.contains("m") && k->k > cfg.m)
    errs.add("selection.k: must not exceed m");
  if (!errs.empty()) throw ConfigError(errs.joined());
  cfg.prior.sigma2 = cfg.sigma2.value_or(1.0);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Scenario for `proc` built from the configuration.
inline Scenario scenario_from(const RunConfig& cfg, Procedure proc) {
  Scenario s;
  s.prior = cfg.prior;
  s.m = cfg.m;
  s.rule = cfg.rule;
  s.q = cfg.q;
  s.procedure = proc;
  s.eb_mode = cfg.eb_mode;
  s.replicates = cfg.replicates;
  s.seed = cfg.seed;
  s.bonferroni = cfg.bonferroni;
  s.estimator = cfg.estimation == EstimationMethod::Moments ? FitMethod::Moments : FitMethod::MarginalMLE;
  if (cfg.em_given) {
    s.fit_options = cfg.em;
    s.fit_options.record_trace = false;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Serialization

inline json rule_json(const SelectionRule& rule) {
  if (const auto* t = std::get_if<Threshold>(&rule)) return json{{"rule", "threshold"}, {"c", t->c}};
  if (const auto* k = std::get_if<TopK>(&rule)) return json{{"rule", "topk"}, {"k", k->k}};
  return json{{"rule", "bh"}, {"alpha", std::get<BHLevel>(rule).alpha}};
}

inline json to_json(const FitResult& fit) {
  return json{{"p", fit.prior.p},
              {"tau2", fit.prior.tau2},
              {"sigma2", fit.prior.sigma2},
              {"loglik", fit.loglik},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"method", std::string(to_string(fit.method))},
              {"flags", fit.flags}};
}

inline json to_json(const EvalReport& r) {
  return json{{"fcr_hat", r.fcr_hat},
              {"fcr_se", r.fcr_se},
              {"fcr_conditional", r.fcr_conditional},
              {"coverage_given_selected", r.coverage_given_selected},
              {"avg_length", r.avg_length},
              {"avg_R", r.avg_R},
              {"empty_selection_rate", r.empty_selection_rate},
              {"replicates", r.replicates},
              {"seed", r.seed}};
}

inline json to_json(const Scenario& s) {
  return json{{"procedure", std::string(to_string(s.procedure))},
              {"eb_mode", std::string(to_string(s.eb_mode))},
              {"prior", {{"p", s.prior.p}, {"tau2", s.prior.tau2}, {"sigma2", s.prior.sigma2}}},
              {"m", s.m},
              {"selection", rule_json(s.rule)},
              {"q", s.q},
              {"bonferroni", s.bonferroni == BonferroniBase::Selected ? "selected" : "total"},
              {"replicates", s.replicates},
              {"seed", s.seed}};
}

inline json to_json(const IntervalReport& rep) {
  json rows = json::array();
  for (const auto& row : rep.rows) {
    json intervals = json::array();
    for (const auto& iv : row.region.intervals) intervals.push_back({iv.lower, iv.upper});
    rows.push_back({{"id", row.id},
                    {"x", row.x},
                    {"includes_zero", row.region.contains_zero()},
                    {"intervals", intervals},
                    {"length", row.length}});
  }
  return json{{"procedure", std::string(to_string(rep.procedure))},
              {"q", rep.q},
              {"R", rep.R},
              {"m", rep.m},
              {"average_length", rep.average_length},
              {"empty_selection", rep.empty_selection},
              {"regions", rows}};
}

inline constexpr std::string_view kIntervalHeader = "procedure,id,x,lower,upper,includes_zero,length";

/// One line per selected population. A region holding only {0} leaves
/// lower and upper empty.
inline void write_interval_csv(std::ostream& out, const IntervalReport& rep) {
  out << kIntervalHeader << '\n';
  const std::string proc(to_string(rep.procedure));
  for (const auto& row : rep.rows) {
    out << proc << ',' << row.id << ',' << format_double(row.x) << ',';
    if (!row.region.intervals.empty()) {
      out << format_double(row.region.intervals.front().lower) << ','
          << format_double(row.region.intervals.back().upper);
    } else {
      out << ',';
    }
    out << ',' << (row.region.contains_zero() ? "true" : "false") << ',' << format_double(row.length) << '\n';
  }
}

inline constexpr std::string_view kReplicateHeader = "replicate,R,V,sum_length";

inline void write_replicate_csv(std::ostream& out, const std::vector<ReplicateRow>& rows) {
  out << kReplicateHeader << '\n';
  for (const auto& r : rows) out << r.replicate << ',' << r.R << ',' << r.V << ',' << format_double(r.sum_length) << '\n';
}

inline std::vector<ReplicateRow> parse_replicate_csv(std::istream& in) {
  std::vector<ReplicateRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || detail::blank(line)) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 4) throw InputError("expected 4 fields", line_no);
    const auto sum = detail::parse_double(f[3]);
    if (!sum) throw InputError("bad sum_length", line_no);
    rows.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stoull(f[2]), *sum});
  }
  return rows;
}

inline constexpr std::string_view kLongHeader = "scenario,procedure,metric,value";

/// Comma-free scenario key, e.g. "p=0.1;tau2=4;sigma2=1;m=1000;threshold(c=2.000000);q=0.05".
inline std::string scenario_key(const Scenario& s) {
  return "p=" + format_double(s.prior.p) + ";tau2=" + format_double(s.prior.tau2) +
         ";sigma2=" + format_double(s.prior.sigma2) + ";m=" + std::to_string(s.m) + ";" + describe(s.rule) +
         ";q=" + format_double(s.q);
}

inline void write_long_csv(std::ostream& out, const std::vector<EvalResult>& results) {
  out << kLongHeader << '\n';
  for (const auto& res : results) {
    const std::string key = scenario_key(res.scenario);
    const std::string label = res.scenario.label();
    const auto& r = res.report;
    const std::pair<const char*, double> metrics[] = {
        {"fcr_hat", r.fcr_hat},
        {"fcr_se", r.fcr_se},
        {"fcr_conditional", r.fcr_conditional},
        {"coverage_given_selected", r.coverage_given_selected},
        {"avg_length", r.avg_length},
        {"avg_R", r.avg_R},
        {"empty_selection_rate", r.empty_selection_rate}};
    for (const auto& [name, value] : metrics) out << key << ',' << label << ',' << name << ',' << format_double(value) << '\n';
  }
}

inline constexpr std::string_view kCompareHeader = "procedure,fcr_hat,fcr_se,avg_length,avg_R,length_ratio_vs_BY";

inline void write_compare_csv(std::ostream& out, const Comparison& cmp) {
  out << kCompareHeader << '\n';
  for (const auto& row : cmp.table)
    out << row.label << ',' << format_double(row.report.fcr_hat) << ',' << format_double(row.report.fcr_se) << ','
        << format_double(row.report.avg_length) << ',' << format_double(row.report.avg_R) << ','
        << format_double(row.length_ratio_vs_by) << '\n';
}

}  // namespace ebfcr::io
