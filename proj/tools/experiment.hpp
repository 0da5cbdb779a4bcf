// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rptest/rptest.hpp"

namespace rptest::cli {

using json = nlohmann::ordered_json;

/// Invalid configuration or input; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitReject = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAborted = 3;

//---------------------------------------------------------------------------//
// Formatting
//---------------------------------------------------------------------------//

/// Six significant digits, "NA" for NaN.
inline std::string fmt6(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

//---------------------------------------------------------------------------//
// Config parsing helpers
//---------------------------------------------------------------------------//

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

template <typename T>
std::vector<T> get_list(const json& obj, const std::string& key, std::vector<T> fallback,
                        const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

inline Dgp dgp_from(const std::string& s) {
  if (s == "pdk-beta") return Dgp::PdkBeta;
  if (s == "edk-poly") return Dgp::EdkMultivariate;
  throw ConfigError("unknown dgp '" + s + "' (expected pdk-beta or edk-poly)");
}

inline TestProcedure test_from(const std::string& s) {
  if (s == "DT") return TestProcedure::DT;
  if (s == "AT") return TestProcedure::AT;
  if (s == "composite") return TestProcedure::CompositeLinear;
  throw ConfigError("unknown test '" + s + "' (expected DT, AT or composite)");
}

inline LambdaRule lambda_rule_from(const std::string& s) {
  if (s == "explicit") return LambdaRule::Explicit;
  if (s == "gcv") return LambdaRule::GCV;
  if (s == "rate-star") return LambdaRule::RateStar;
  if (s == "rate-dagger") return LambdaRule::RateDagger;
  throw ConfigError("unknown lambda_rule '" + s + "'");
}

inline SketchKind sketch_from(const std::string& s) {
  try {
    return sketch_kind_from_string(s);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

inline std::string s_rule_kind_name(SRule::Kind k) {
  switch (k) {
    case SRule::Kind::Explicit: return "explicit";
    case SRule::Kind::GammaRule: return "gamma";
    case SRule::Kind::LogPower: return "log-power";
  }
  return "unknown";
}

}  // namespace detail

//---------------------------------------------------------------------------//
// Simulation plans
//---------------------------------------------------------------------------//

struct RunSpec {
  MonteCarloConfig mc;
};

/// Exponent reported in the gamma column.
inline double reported_gamma(const MonteCarloConfig& mc) {
  if (mc.test == TestProcedure::AT) return mc.adaptive.gamma_numerator / 9.0;
  if (mc.s_rule.kind == SRule::Kind::Explicit) return std::numeric_limits<double>::quiet_NaN();
  return mc.s_rule.gamma;
}

inline json run_to_json(const MonteCarloConfig& mc) {
  json s_rule{{"kind", detail::s_rule_kind_name(mc.s_rule.kind)}};
  if (mc.s_rule.kind == SRule::Kind::Explicit) {
    s_rule["s"] = mc.s_rule.s;
  } else {
    s_rule["factor"] = mc.s_rule.factor;
    s_rule["gamma"] = mc.s_rule.gamma;
  }
  return json{{"dgp", std::string(to_string(mc.dgp))},
              {"c", mc.c},
              {"n", mc.n},
              {"reps", mc.reps},
              {"alpha", mc.alpha},
              {"test", std::string(to_string(mc.test))},
              {"sketch", std::string(to_string(mc.sketch_kind))},
              {"s_rule", s_rule},
              {"lambda_rule", std::string(to_string(mc.lambda_rule))},
              {"lambda", mc.lambda},
              {"lambda_grid", mc.lambda_grid},
              {"kernel_order", mc.kernel_order},
              {"kernel_scale", mc.kernel_scale},
              {"bandwidth", mc.bandwidth},
              {"polynomial_order", mc.polynomial_order},
              {"adaptive",
               {{"m_n", mc.adaptive.m_n},
                {"c_lambda", mc.adaptive.c_lambda},
                {"d_s", mc.adaptive.d_s},
                {"gamma_numerator", mc.adaptive.gamma_numerator}}}};
}

inline MonteCarloConfig run_from_json(const json& j, const std::string& where) {
  using detail::get;
  detail::check_keys(j,
                     {"dgp", "c", "n", "reps", "alpha", "test", "sketch", "s_rule", "lambda_rule", "lambda",
                      "lambda_grid", "kernel_order", "kernel_scale", "bandwidth", "polynomial_order", "adaptive"},
                     where);
  MonteCarloConfig mc;
  mc.dgp = detail::dgp_from(get<std::string>(j, "dgp", "pdk-beta", where));
  mc.c = get<double>(j, "c", 0.0, where);
  mc.n = get<Eigen::Index>(j, "n", 512, where);
  mc.reps = get<int>(j, "reps", 500, where);
  mc.alpha = get<double>(j, "alpha", 0.05, where);
  mc.test = detail::test_from(get<std::string>(j, "test", "DT", where));
  mc.sketch_kind = detail::sketch_from(get<std::string>(j, "sketch", "gaussian", where));
  if (j.contains("s_rule")) {
    const auto& r = j.at("s_rule");
    detail::check_keys(r, {"kind", "s", "factor", "gamma"}, where + ".s_rule");
    const auto kind = get<std::string>(r, "kind", "gamma", where + ".s_rule");
    if (kind == "explicit") {
      mc.s_rule = SRule::explicit_size(get<Eigen::Index>(r, "s", 0, where + ".s_rule"));
    } else if (kind == "gamma") {
      mc.s_rule = SRule::gamma_rule(get<double>(r, "factor", 2.0, where), get<double>(r, "gamma", 2.0 / 9.0, where));
    } else if (kind == "log-power") {
      mc.s_rule = SRule::log_power(get<double>(r, "factor", 1.2, where), get<double>(r, "gamma", 1.0, where));
    } else {
      throw ConfigError(where + ".s_rule: unknown kind '" + kind + "'");
    }
  }
  mc.lambda_rule = detail::lambda_rule_from(get<std::string>(j, "lambda_rule", "gcv", where));
  mc.lambda = get<double>(j, "lambda", 0.0, where);
  mc.lambda_grid = detail::get_list<double>(j, "lambda_grid", {}, where);
  mc.kernel_order = get<int>(j, "kernel_order", 2, where);
  mc.kernel_scale = get<double>(j, "kernel_scale", 1.0, where);
  mc.bandwidth = get<double>(j, "bandwidth", 1.0, where);
  mc.polynomial_order = get<int>(j, "polynomial_order", 1, where);
  if (j.contains("adaptive")) {
    const auto& a = j.at("adaptive");
    const std::string w = where + ".adaptive";
    detail::check_keys(a, {"m_n", "c_lambda", "d_s", "gamma_numerator"}, w);
    mc.adaptive.m_n = get<int>(a, "m_n", 0, w);
    mc.adaptive.c_lambda = get<double>(a, "c_lambda", 1.0, w);
    mc.adaptive.d_s = get<double>(a, "d_s", 2.0, w);
    mc.adaptive.gamma_numerator = get<double>(a, "gamma_numerator", 2.0, w);
  }
  if (mc.kernel_order < 1) throw ConfigError(where + ": kernel_order must be >= 1");
  if (!(mc.kernel_scale > 0.0) || !(mc.bandwidth > 0.0)) {
    throw ConfigError(where + ": kernel_scale and bandwidth must be positive");
  }
  for (double l : mc.lambda_grid) {
    if (!(l > 0.0)) throw ConfigError(where + ": lambda_grid entries must be positive");
  }
  return mc;
}

struct SimulationPlan {
  std::string preset;  ///< empty when the runs were given explicitly
  std::uint64_t seed = 20240101;
  unsigned workers = 1;
  std::vector<MonteCarloConfig> runs;
};

inline json plan_to_json(const SimulationPlan& plan) {
  json runs = json::array();
  for (const auto& r : plan.runs) runs.push_back(run_to_json(r));
  return json{{"preset", plan.preset}, {"seed", plan.seed}, {"workers", plan.workers}, {"runs", runs}};
}

namespace detail {

inline const std::vector<Eigen::Index> kDefaultSizes{512, 1024, 2048, 4096};

inline MonteCarloConfig pdk_run(Eigen::Index n, double c, double k, TestProcedure test, int reps, double alpha) {
  MonteCarloConfig mc;
  mc.dgp = Dgp::PdkBeta;
  mc.n = n;
  mc.c = c;
  mc.reps = reps;
  mc.alpha = alpha;
  mc.test = test;
  mc.lambda_rule = LambdaRule::GCV;
  mc.kernel_order = 2;
  if (test == TestProcedure::AT) {
    mc.adaptive.gamma_numerator = k;
  } else {
    mc.s_rule = SRule::gamma_rule(2.0, k / 9.0);
  }
  return mc;
}

}  // namespace detail

/// Expands a simulation document (preset or explicit runs) into a plan.
inline SimulationPlan expand_simulation(const json& doc, std::optional<std::uint64_t> seed_override = {},
                                        std::optional<unsigned> workers_override = {}) {
  using detail::get;
  const std::string where = "config";
  detail::check_keys(doc, {"preset", "seed", "workers", "reps", "alpha", "n", "c", "gamma", "runs"}, where);
  SimulationPlan plan;
  plan.preset = get<std::string>(doc, "preset", "", where);
  plan.seed = seed_override.value_or(get<std::uint64_t>(doc, "seed", plan.seed, where));
  plan.workers = workers_override.value_or(get<unsigned>(doc, "workers", 1u, where));
  if (plan.workers < 1) throw ConfigError("workers must be >= 1");
  const int reps = get<int>(doc, "reps", 500, where);
  const double alpha = get<double>(doc, "alpha", 0.05, where);

  if (plan.preset.empty()) {
    if (!doc.contains("runs") || !doc.at("runs").is_array() || doc.at("runs").empty()) {
      throw ConfigError("config: either 'preset' or a non-empty 'runs' list is required");
    }
    for (const std::string key : {"n", "c", "gamma"}) {
      if (doc.contains(key)) throw ConfigError("config: key '" + key + "' is only valid together with a preset");
    }
    std::size_t i = 0;
    for (const auto& r : doc.at("runs")) {
      auto mc = run_from_json(r, "runs[" + std::to_string(i++) + "]");
      if (!r.contains("reps") && doc.contains("reps")) mc.reps = reps;
      if (!r.contains("alpha") && doc.contains("alpha")) mc.alpha = alpha;
      plan.runs.push_back(mc);
    }
  } else {
    if (doc.contains("runs")) throw ConfigError("config: 'runs' cannot be combined with a preset");
    const auto sizes = detail::get_list<Eigen::Index>(doc, "n", detail::kDefaultSizes, where);
    const std::string& p = plan.preset;
    if (p == "size-dt" || p == "size-at" || p == "power") {
      const auto cs = detail::get_list<double>(doc, "c", p == "power" ? std::vector<double>{0.01, 0.02, 0.03}
                                                                      : std::vector<double>{0.0}, where);
      const auto ks = detail::get_list<double>(doc, "gamma", {1.0, 2.0, 3.0}, where);
      std::vector<TestProcedure> tests;
      if (p == "size-dt") tests = {TestProcedure::DT};
      if (p == "size-at") tests = {TestProcedure::AT};
      if (p == "power") tests = {TestProcedure::DT, TestProcedure::AT};
      for (auto test : tests) {
        for (double c : cs) {
          for (double k : ks) {
            for (auto n : sizes) plan.runs.push_back(detail::pdk_run(n, c, k, test, reps, alpha));
          }
        }
      }
    } else if (p == "edk") {
      const auto cs = detail::get_list<double>(doc, "c", {0.0, 0.05, 0.1, 0.15}, where);
      const auto gs = detail::get_list<double>(doc, "gamma", {1.0, 1.5, 2.0}, where);
      for (double c : cs) {
        for (double g : gs) {
          for (auto n : sizes) {
            MonteCarloConfig mc;
            mc.dgp = Dgp::EdkMultivariate;
            mc.n = n;
            mc.c = c;
            mc.reps = reps;
            mc.alpha = alpha;
            mc.test = TestProcedure::DT;
            mc.s_rule = SRule::log_power(1.2, g);
            mc.lambda_rule = LambdaRule::GCV;
            plan.runs.push_back(mc);
          }
        }
      }
    } else {
      throw ConfigError("unknown preset '" + p + "' (expected size-dt, size-at, power or edk)");
    }
  }
  for (auto& mc : plan.runs) {
    mc.seed = plan.seed;
    mc.workers = plan.workers;
    try {
      validate(mc);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("invalid run: ") + e.what());
    }
  }
  return plan;
}

//---------------------------------------------------------------------------//
// Phase grid plans
//---------------------------------------------------------------------------//

struct PhasePlan {
  std::string preset;
  std::uint64_t seed = 20240101;
  unsigned workers = 1;
  Eigen::Index n = 512;
  int kernel_order = 2;
  double kernel_scale = 1.0;
  int reps = 100;
  std::vector<double> lambda_grid;
  std::vector<Eigen::Index> s_grid;
  std::vector<double> c_grid;
};

inline json plan_to_json(const PhasePlan& plan) {
  return json{{"preset", plan.preset},     {"seed", plan.seed},
              {"workers", plan.workers},   {"n", plan.n},
              {"kernel_order", plan.kernel_order}, {"kernel_scale", plan.kernel_scale},
              {"reps", plan.reps},         {"lambda", plan.lambda_grid},
              {"s", plan.s_grid},          {"c", plan.c_grid}};
}

inline PhasePlan expand_phase_grid(const json& doc, std::optional<std::uint64_t> seed_override = {},
                                   std::optional<unsigned> workers_override = {}) {
  using detail::get;
  const std::string where = "config";
  detail::check_keys(doc, {"preset", "seed", "workers", "n", "kernel_order", "kernel_scale", "reps", "lambda", "s", "c"},
                     where);
  PhasePlan plan;
  plan.preset = get<std::string>(doc, "preset", "", where);
  if (!plan.preset.empty() && plan.preset != "phase-grid") {
    throw ConfigError("unknown preset '" + plan.preset + "' for phase-grid");
  }
  plan.seed = seed_override.value_or(get<std::uint64_t>(doc, "seed", plan.seed, where));
  plan.workers = workers_override.value_or(get<unsigned>(doc, "workers", 1u, where));
  plan.n = get<Eigen::Index>(doc, "n", plan.n, where);
  plan.kernel_order = get<int>(doc, "kernel_order", 2, where);
  plan.kernel_scale = get<double>(doc, "kernel_scale", 1.0, where);
  plan.reps = get<int>(doc, "reps", plan.reps, where);
  if (plan.n < 16) throw ConfigError("phase-grid: n must be >= 16");
  if (plan.kernel_order < 1 || !(plan.kernel_scale > 0.0)) throw ConfigError("phase-grid: invalid kernel");
  if (plan.reps < 1) throw ConfigError("phase-grid: reps must be >= 1");
  if (plan.workers < 1) throw ConfigError("workers must be >= 1");
  std::vector<double> lambdas;
  std::vector<Eigen::Index> sizes;
  std::vector<double> cs;
  if (plan.preset == "phase-grid") {
    const auto spec = KernelSpec::periodic_sobolev(plan.kernel_order, plan.kernel_scale);
    const auto rates = rate_table(spec, static_cast<double>(plan.n));
    lambdas = log_grid(rates.lambda_star / 100.0, 100.0 * rates.lambda_dagger, 5);
    sizes = {2, 4, 8, 16, 32};
    cs = {0.01, 0.02, 0.05, 0.1, 0.2};
  }
  plan.lambda_grid = detail::get_list<double>(doc, "lambda", lambdas, where);
  plan.s_grid = detail::get_list<Eigen::Index>(doc, "s", sizes, where);
  plan.c_grid = detail::get_list<double>(doc, "c", cs, where);
  if (plan.lambda_grid.empty() || plan.s_grid.empty() || plan.c_grid.empty()) {
    throw ConfigError("phase-grid: lambda, s and c grids must be non-empty");
  }
  for (double l : plan.lambda_grid) {
    if (!(l > 0.0)) throw ConfigError("phase-grid: lambda values must be positive");
  }
  for (auto s : plan.s_grid) {
    if (s < 1 || s > plan.n) throw ConfigError("phase-grid: s values must lie in [1, n]");
  }
  for (double c : plan.c_grid) {
    if (!(c >= 0.0)) throw ConfigError("phase-grid: c values must be non-negative");
  }
  return plan;
}

//---------------------------------------------------------------------------//
// Diagnose plans
//---------------------------------------------------------------------------//

struct DiagnosePlan {
  std::uint64_t seed = 20240101;
  int kernel_order = 2;
  double kernel_scale = 0.0;  ///< 0 selects the unit-leading-eigenvalue scale (2 pi)^{2m}
  std::vector<Eigen::Index> n_grid;
  std::vector<double> lambda_grid;  ///< empty: lambda_dagger and lambda_star of each n
  std::vector<double> s_factors;    ///< s = ceil(factor * s_lambda)
  double tail_constant = 10.0;
  double sat_constant = 3.0;
  int draws = 100;
};

inline json plan_to_json(const DiagnosePlan& plan) {
  return json{{"seed", plan.seed},
              {"kernel_order", plan.kernel_order},
              {"kernel_scale", plan.kernel_scale},
              {"n", plan.n_grid},
              {"lambda", plan.lambda_grid},
              {"s_factor", plan.s_factors},
              {"tail_constant", plan.tail_constant},
              {"sat_constant", plan.sat_constant},
              {"draws", plan.draws}};
}

inline DiagnosePlan expand_diagnose(const json& doc, std::optional<std::uint64_t> seed_override = {}) {
  using detail::get;
  const std::string where = "config";
  detail::check_keys(doc,
                     {"seed", "workers", "kernel_order", "kernel_scale", "n", "lambda", "s_factor", "tail_constant",
                      "sat_constant", "draws"},
                     where);
  DiagnosePlan plan;
  plan.seed = seed_override.value_or(get<std::uint64_t>(doc, "seed", plan.seed, where));
  plan.kernel_order = get<int>(doc, "kernel_order", 2, where);
  plan.kernel_scale = get<double>(doc, "kernel_scale", 0.0, where);
  plan.n_grid = detail::get_list<Eigen::Index>(doc, "n", {512}, where);
  plan.lambda_grid = detail::get_list<double>(doc, "lambda", {}, where);
  plan.s_factors = detail::get_list<double>(doc, "s_factor", {4.0}, where);
  plan.tail_constant = get<double>(doc, "tail_constant", 10.0, where);
  plan.sat_constant = get<double>(doc, "sat_constant", 3.0, where);
  plan.draws = get<int>(doc, "draws", 100, where);
  if (plan.n_grid.empty() || plan.s_factors.empty() || (doc.contains("lambda") && plan.lambda_grid.empty())) {
    throw ConfigError("diagnose: the (n, lambda, s) grid is empty");
  }
  if (plan.kernel_order < 1 || plan.kernel_scale < 0.0) throw ConfigError("diagnose: invalid kernel");
  if (plan.draws < 1) throw ConfigError("diagnose: draws must be >= 1");
  for (auto n : plan.n_grid) {
    if (n < 3) throw ConfigError("diagnose: n must be >= 3");
  }
  for (double l : plan.lambda_grid) {
    if (!(l > 0.0)) throw ConfigError("diagnose: lambda values must be positive");
  }
  for (double f : plan.s_factors) {
    if (!(f > 0.0)) throw ConfigError("diagnose: s_factor values must be positive");
  }
  return plan;
}

inline KernelSpec diagnose_kernel(const DiagnosePlan& plan) {
  return plan.kernel_scale == 0.0 ? KernelSpec::unit_periodic_sobolev(plan.kernel_order)
                                  : KernelSpec::periodic_sobolev(plan.kernel_order, plan.kernel_scale);
}

//---------------------------------------------------------------------------//
// Results CSV
//---------------------------------------------------------------------------//

struct ResultRow {
  std::string preset;
  Eigen::Index n = 0;
  Eigen::Index s = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  double c = 0.0;
  std::string test;
  int reps = 0;
  double rejection_rate = 0.0;
  double se = 0.0;
  double mean_z = 0.0;
  double var_z = 0.0;
  std::uint64_t seed = 0;
};

inline const char* kResultsHeader =
    "preset,n,s,gamma,lambda,c,test,reps,rejection_rate,se,mean_z,var_z,seed";

inline std::string config_comment(const json& expanded) { return "# config: " + expanded.dump(); }

inline std::string results_csv(const std::vector<ResultRow>& rows, const json& expanded) {
  std::ostringstream out;
  out << config_comment(expanded) << '\n' << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << (r.preset.empty() ? "custom" : r.preset) << ',' << r.n << ',' << r.s << ',' << fmt6(r.gamma) << ','
        << fmt6(r.lambda) << ',' << fmt6(r.c) << ',' << r.test << ',' << r.reps << ',' << fmt6(r.rejection_rate)
        << ',' << fmt6(r.se) << ',' << fmt6(r.mean_z) << ',' << fmt6(r.var_z) << ',' << r.seed << '\n';
  }
  return out.str();
}

inline ResultRow result_row(const std::string& preset, const MonteCarloConfig& mc, const MonteCarloResult& res) {
  ResultRow row;
  row.preset = preset;
  row.n = mc.n;
  row.s = res.s;
  row.gamma = reported_gamma(mc);
  row.lambda = res.median_lambda;
  row.c = mc.c;
  row.test = std::string(to_string(mc.test));
  row.reps = mc.reps;
  row.rejection_rate = res.rejection_rate;
  row.se = res.standard_error;
  row.mean_z = res.mean_z;
  row.var_z = res.var_z;
  row.seed = mc.seed;
  return row;
}

//---------------------------------------------------------------------------//
// SVG
//---------------------------------------------------------------------------//

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// XML comments may not contain "--".
inline std::string comment_safe(std::string s) {
  for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--", p)) s.replace(p, 2, "- -");
  return s;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

}  // namespace detail

/// Line plot with log2 x axis (sample size) and y in [0, 1].
inline std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label, const json& expanded) {
  constexpr double w = 720, h = 440, left = 70, right = 200, top = 40, bottom = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& s : series) {
    for (double x : s.x) {
      xmin = std::min(xmin, std::log2(x));
      xmax = std::max(xmax, std::log2(x));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  auto px = [&](double x) { return left + (std::log2(x) - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, 1.0)) * (h - top - bottom); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<!-- " << detail::comment_safe(config_comment(expanded)) << " -->\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << detail::xml_escape(title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = t / 4.0;
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt6(y)
      << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << py(y) << "\" x2=\"" << w - right << "\" y2=\"" << py(y)
      << "\" stroke=\"#ddd\"/>\n";
  }
  for (int e = static_cast<int>(std::ceil(xmin)); e <= static_cast<int>(std::floor(xmax)); ++e) {
    const double x = std::ldexp(1.0, e);
    o << "<text x=\"" << px(x) << "\" y=\"" << h - bottom + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
      << fmt6(x) << "</text>\n";
  }
  o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 18 << "\" font-size=\"12\" text-anchor=\"middle\">"
    << detail::xml_escape(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << (top + h - bottom) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 18 "
    << (top + h - bottom) / 2 << ")\" text-anchor=\"middle\">" << detail::xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    o << "<polyline fill=\"none\" stroke=\"" << detail::palette(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) o << (k ? " " : "") << px(s.x[k]) << ',' << py(s.y[k]);
    o << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      o << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"3\" fill=\"" << detail::palette(i)
        << "\"/>\n";
    }
    const double ly = top + 16.0 * static_cast<double>(i);
    o << "<rect x=\"" << w - right + 12 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
      << detail::palette(i) << "\"/>\n";
    o << "<text x=\"" << w - right + 28 << "\" y=\"" << ly + 9 << "\" font-size=\"11\">"
      << detail::xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Heatmap of values in [0, 1] over (row label, column label); NaN cells are grey.
inline std::string svg_heatmap(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels,
                               const std::vector<double>& values, double vmax, const std::string& title,
                               const std::string& row_title, const std::string& col_title, const json& expanded) {
  constexpr double cell = 56, left = 110, top = 50;
  const double w = left + cell * static_cast<double>(col_labels.size()) + 30;
  const double h = top + cell * static_cast<double>(row_labels.size()) + 60;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<!-- " << detail::comment_safe(config_comment(expanded)) << " -->\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"10\" y=\"24\" font-size=\"14\">" << detail::xml_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < row_labels.size(); ++i) {
    const double y = top + cell * static_cast<double>(i);
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
      << detail::xml_escape(row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < col_labels.size(); ++j) {
      const double v = values[i * col_labels.size() + j];
      const double x = left + cell * static_cast<double>(j);
      std::string fill = "#cccccc";
      if (!std::isnan(v)) {
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v / vmax, 0.0, 1.0))));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02xff", shade, shade);
        fill = buf;
      }
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
        << fill << "\" stroke=\"white\"/>\n";
      o << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
        << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt6(v) << "</text>\n";
    }
  }
  const double by = top + cell * static_cast<double>(row_labels.size());
  for (std::size_t j = 0; j < col_labels.size(); ++j) {
    o << "<text x=\"" << left + cell * (static_cast<double>(j) + 0.5) << "\" y=\"" << by + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << detail::xml_escape(col_labels[j]) << "</text>\n";
  }
  o << "<text x=\"" << left << "\" y=\"" << by + 40 << "\" font-size=\"12\">" << detail::xml_escape(col_title)
    << " (columns), " << detail::xml_escape(row_title) << " (rows)</text>\n";
  o << "</svg>\n";
  return o.str();
}

//---------------------------------------------------------------------------//
// Data CSV
//---------------------------------------------------------------------------//

struct DataTable {
  std::vector<std::string> x_names;
  Eigen::MatrixXd xs;
  Eigen::VectorXd y;
};

/// Reads a header row x1..xd,y followed by numeric rows.
inline DataTable read_data_csv(std::istream& in, const std::string& name = "data") {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(name + ": empty file");
  const auto header = split(line);
  int y_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "y") y_col = static_cast<int>(j);
  }
  if (y_col < 0) throw ConfigError(name + ": header has no 'y' column");
  DataTable table;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (static_cast<int>(j) != y_col) table.x_names.push_back(header[j]);
  }
  if (table.x_names.empty()) throw ConfigError(name + ": header has no covariate columns");
  std::vector<std::vector<double>> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ConfigError(name + ": row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[j].size() || !std::isfinite(v)) {
        throw ConfigError(name + ": non-numeric cell at row " + std::to_string(row_no) + ", column " +
                          std::to_string(j + 1) + " ('" + header[j] + "')");
      }
      values[j] = v;
    }
    rows.push_back(std::move(values));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(table.x_names.size());
  table.xs.resize(n, d);
  table.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (static_cast<int>(j) == y_col) {
        table.y[i] = rows[static_cast<std::size_t>(i)][j];
      } else {
        table.xs(i, col++) = rows[static_cast<std::size_t>(i)][j];
      }
    }
  }
  return table;
}

inline DataTable read_data_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file " + path.string());
  return read_data_csv(in, path.string());
}

/// Maps each column affinely onto [0, 1) when it leaves that interval.
inline Eigen::MatrixXd to_unit_interval(const Eigen::MatrixXd& xs) {
  Eigen::MatrixXd out = xs;
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double lo = xs.col(j).minCoeff();
    const double hi = xs.col(j).maxCoeff();
    if (lo >= 0.0 && hi < 1.0) continue;
    const double span = hi > lo ? hi - lo : 1.0;
    out.col(j) = ((xs.col(j).array() - lo) / span * (1.0 - 1e-9)).matrix();
  }
  return out;
}

//---------------------------------------------------------------------------//
// Output
//---------------------------------------------------------------------------//

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline void append_record(const std::filesystem::path& dir, const json& record) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "records.jsonl", std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to " + (dir / "records.jsonl").string());
  out << record.dump() << '\n';
}

}  // namespace rptest::cli
