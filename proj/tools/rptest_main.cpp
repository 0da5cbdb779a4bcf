// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"

namespace fs = std::filesystem;
using namespace rptest;
using namespace rptest::cli;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out = "rptest-out";
  bool record = false;
};

json load_config(const std::string& path, const json& fallback) {
  if (path.empty()) return fallback;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config ") + path + ": " + e.what());
  }
}

void write_expanded(const fs::path& dir, const json& expanded) {
  write_file(dir / "config.expanded.json", expanded.dump(2) + "\n");
}

//---------------------------------------------------------------------------//

int run_simulate(const CommonOptions& opt) {
  if (opt.config.empty()) throw ConfigError("simulate requires --config");
  const auto plan = expand_simulation(load_config(opt.config, {}), opt.seed, opt.workers);
  const json expanded = plan_to_json(plan);

  std::vector<ResultRow> rows;
  std::map<std::string, Series> series;
  bool failed = false;
  std::vector<json> records;
  for (std::size_t i = 0; i < plan.runs.size(); ++i) {
    const auto& mc = plan.runs[i];
    std::cerr << "[" << i + 1 << "/" << plan.runs.size() << "] " << to_string(mc.test) << " n=" << mc.n
              << " c=" << fmt6(mc.c) << " gamma=" << fmt6(reported_gamma(mc)) << " ... " << std::flush;
    const auto res = monte_carlo(mc);
    std::cerr << "rate=" << fmt6(res.rejection_rate) << (res.aborted ? " aborted=" + std::to_string(res.aborted) : "")
              << "\n";
    if (res.failed) {
      failed = true;
      std::cerr << "  more than 1% of replications aborted; first error: " << res.first_error << "\n";
    }
    rows.push_back(result_row(plan.preset, mc, res));
    const std::string key = std::string(to_string(mc.test)) + " gamma=" + fmt6(reported_gamma(mc)) +
                            " c=" + fmt6(mc.c);
    auto& s = series[key];
    s.label = key;
    s.x.push_back(static_cast<double>(mc.n));
    s.y.push_back(res.rejection_rate);
    if (opt.record) {
      records.push_back(json{{"command", "simulate"},
                             {"config", run_to_json(mc)},
                             {"seed", mc.seed},
                             {"rejection_rate", res.rejection_rate},
                             {"se", res.standard_error},
                             {"mean_z", res.mean_z},
                             {"var_z", res.var_z},
                             {"median_lambda", res.median_lambda},
                             {"s", res.s},
                             {"completed", res.completed},
                             {"aborted", res.aborted}});
    }
  }

  const fs::path dir(opt.out);
  fs::create_directories(dir);
  write_file(dir / "results.csv", results_csv(rows, expanded));
  write_expanded(dir, expanded);
  std::vector<Series> lines;
  for (auto& [k, s] : series) lines.push_back(s);
  write_file(dir / "plot.svg", svg_line_plot(lines, "Rejection rate" + (plan.preset.empty() ? "" : " (" + plan.preset + ")"),
                                             "n", "rejection rate", expanded));
  for (const auto& r : records) append_record(dir, r);
  std::cout << results_csv(rows, expanded);
  return failed ? kExitAborted : kExitOk;
}

//---------------------------------------------------------------------------//

int run_phase_grid(const CommonOptions& opt) {
  const auto plan = expand_phase_grid(load_config(opt.config, json{{"preset", "phase-grid"}}), opt.seed, opt.workers);
  const json expanded = plan_to_json(plan);
  const auto spec = KernelSpec::periodic_sobolev(plan.kernel_order, plan.kernel_scale);
  const auto grid = phase_grid(spec, plan.n, plan.lambda_grid, plan.s_grid, plan.c_grid, plan.reps, plan.seed,
                               plan.workers);

  std::vector<ResultRow> rows;
  std::ostringstream swds;
  swds << config_comment(expanded) << "\n# swds_proxy: empirical, smallest c with power >= 0.5\n";
  swds << "n,lambda,s,swds_proxy\n";
  std::vector<std::string> row_labels, col_labels;
  for (auto s : plan.s_grid) col_labels.push_back(std::to_string(s));
  for (std::size_t i = 0; i < plan.lambda_grid.size(); ++i) {
    row_labels.push_back(fmt6(plan.lambda_grid[i]));
    for (std::size_t j = 0; j < plan.s_grid.size(); ++j) {
      for (std::size_t k = 0; k < plan.c_grid.size(); ++k) {
        ResultRow r;
        r.preset = plan.preset.empty() ? "custom" : plan.preset;
        r.n = plan.n;
        r.s = plan.s_grid[j];
        r.gamma = std::numeric_limits<double>::quiet_NaN();
        r.lambda = plan.lambda_grid[i];
        r.c = plan.c_grid[k];
        r.test = "DT";
        r.reps = plan.reps;
        r.rejection_rate = grid.at(i, j, k);
        r.se = stats::binomial_standard_error(r.rejection_rate, plan.reps);
        r.mean_z = std::numeric_limits<double>::quiet_NaN();
        r.var_z = std::numeric_limits<double>::quiet_NaN();
        r.seed = plan.seed;
        rows.push_back(r);
      }
      swds << plan.n << ',' << fmt6(plan.lambda_grid[i]) << ',' << plan.s_grid[j] << ',' << fmt6(grid.proxy(i, j))
           << '\n';
    }
  }
  const double cmax = *std::max_element(plan.c_grid.begin(), plan.c_grid.end());

  const fs::path dir(opt.out);
  fs::create_directories(dir);
  write_file(dir / "results.csv", results_csv(rows, expanded));
  write_file(dir / "swds.csv", swds.str());
  write_expanded(dir, expanded);
  write_file(dir / "plot.svg",
             svg_heatmap(row_labels, col_labels, grid.swds_proxy, cmax > 0.0 ? cmax : 1.0,
                         "Empirical SWDS proxy (smallest c with power >= 0.5; grey: none)", "lambda", "s", expanded));
  if (opt.record) {
    append_record(dir, json{{"command", "phase-grid"},
                            {"config", expanded},
                            {"power", grid.power},
                            {"swds_proxy", grid.swds_proxy},
                            {"aborted", grid.aborted}});
  }
  std::cout << swds.str();
  const double total = static_cast<double>(plan.reps) * static_cast<double>(grid.power.size());
  if (static_cast<double>(grid.aborted) > 0.01 * total) {
    std::cerr << "more than 1% of replications aborted (" << grid.aborted << ")\n";
    return kExitAborted;
  }
  return kExitOk;
}

//---------------------------------------------------------------------------//

int run_diagnose(const CommonOptions& opt) {
  const auto plan = expand_diagnose(load_config(opt.config, json::object()), opt.seed);
  const json expanded = plan_to_json(plan);
  const auto spec = diagnose_kernel(plan);
  const auto a1 = verify_assumption_a1(spec, 50);

  std::ostringstream csv;
  csv << config_comment(expanded) << '\n';
  csv << "n,lambda,s,s_hat_lambda,s_lambda,kappa,tail_sum,tail_bound,tail_pass,r_hat,lambda_dagger,s_dagger,"
         "lambda_star,s_star,d_star_sq,sat_gaussian,sat_rademacher,dd_tail_energy,a1_ratio,seed\n";
  std::vector<std::string> row_labels, col_labels;
  std::vector<double> heat;
  for (double f : plan.s_factors) col_labels.push_back(fmt6(f) + "x");
  for (auto n : plan.n_grid) {
    const auto rates = rate_table(spec, static_cast<double>(n));
    const auto lambdas =
        plan.lambda_grid.empty() ? std::vector<double>{rates.lambda_dagger, rates.lambda_star} : plan.lambda_grid;
    RandomStream rng(StreamKey{plan.seed, 0, StreamRole::Design});
    const auto eig = eigendecompose(kernel_matrix(spec, draw_design(spec, n, rng)));
    for (double lambda : lambdas) {
      const auto split = lambda_split(eig, spec, lambda, n);
      const auto spectrum = theoretical_eigenvalues(spec, static_cast<std::size_t>(std::max<Eigen::Index>(split.s_lambda, 1)));
      const auto tail = tail_sum_check(eig, split, spectrum, plan.tail_constant);
      const double r_hat = split.kappa > 0.0 ? lrc_fixed_point(eig, split, n).r_hat
                                             : std::numeric_limits<double>::quiet_NaN();
      row_labels.push_back("n=" + std::to_string(n) + " l=" + fmt6(lambda));
      for (double f : plan.s_factors) {
        const auto s = std::clamp<Eigen::Index>(
            static_cast<Eigen::Index>(std::ceil(f * static_cast<double>(split.s_lambda))), 1, n);
        const auto gauss = satisfiability_pass_rate(eig, lambda, s, SketchKind::GaussianIid, plan.sat_constant,
                                                    plan.draws, plan.seed);
        const auto rad = satisfiability_pass_rate(eig, lambda, s, SketchKind::RademacherIid, plan.sat_constant,
                                                  plan.draws, plan.seed);
        const auto dd = check_k_satisfiability(data_dependent_sketch(eig, s), eig, lambda, plan.sat_constant);
        heat.push_back(gauss.rate());
        csv << n << ',' << fmt6(lambda) << ',' << s << ',' << split.s_hat_lambda << ',' << split.s_lambda << ','
            << fmt6(split.kappa) << ',' << fmt6(tail.tail) << ',' << fmt6(tail.bound) << ','
            << (tail.regime_valid ? (tail.pass ? "pass" : "fail") : "invalid") << ',' << fmt6(r_hat) << ','
            << fmt6(rates.lambda_dagger) << ',' << fmt6(rates.s_dagger) << ',' << fmt6(rates.lambda_star) << ','
            << fmt6(rates.s_star) << ',' << fmt6(rates.d_star_sq) << ',' << fmt6(gauss.rate()) << ','
            << fmt6(rad.rate()) << ',' << fmt6(dd.tail_energy) << ',' << fmt6(a1.max_ratio) << ',' << plan.seed
            << '\n';
      }
    }
  }
  const fs::path dir(opt.out);
  fs::create_directories(dir);
  write_file(dir / "diagnostics.csv", csv.str());
  write_expanded(dir, expanded);
  write_file(dir / "plot.svg", svg_heatmap(row_labels, col_labels, heat, 1.0,
                                           "Gaussian-sketch K-satisfiability pass rate", "(n, lambda)",
                                           "s / s_lambda", expanded));
  if (opt.record) append_record(dir, json{{"command", "diagnose"}, {"config", expanded}});
  std::cout << csv.str();
  return kExitOk;
}

//---------------------------------------------------------------------------//

struct DataOptions {
  std::string data;
  std::string kernel = "pdk";
  int order = 2;
  double bandwidth = 1.0;
  double kernel_scale = 1.0;
  std::string lambda = "gcv";
  std::string kind = "simple";
  int poly_order = 1;
  double alpha = 0.05;
  Eigen::Index s = 0;
  std::string sketch = "gaussian";
  double noise_variance = 1.0;
  int m_n = 0;
  double c_lambda = 1.0;
  double d_s = 2.0;
};

json report_json(const TestReport& r, std::uint64_t seed) {
  return json{{"statistic", r.statistic}, {"mu_null", r.mu_null}, {"sigma_null", r.sigma_null},
              {"z", r.z},                 {"p_value", r.p_value}, {"reject", r.reject},
              {"alpha", r.alpha},         {"lambda", r.lambda},   {"s", r.s},
              {"kind", std::string(to_string(r.kind))},           {"polynomial_order", r.polynomial_order},
              {"seed", seed}};
}

int run_test(const CommonOptions& opt, const DataOptions& d) {
  if (d.data.empty()) throw ConfigError("test requires --data");
  auto table = read_data_csv(fs::path(d.data));
  const Eigen::Index n = table.xs.rows();
  if (n < 2) throw ConfigError("test: need at least two observations");
  if (!(d.alpha > 0.0 && d.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const std::uint64_t seed = opt.seed.value_or(20240101);
  KernelSpec spec = KernelSpec::periodic_sobolev(2);
  Eigen::MatrixXd xs = table.xs;
  if (d.kernel == "pdk") {
    if (xs.cols() != 1) throw ConfigError("the periodic Sobolev kernel takes a single covariate");
    if (d.order < 1) throw ConfigError("--order must be >= 1");
    spec = KernelSpec::periodic_sobolev(d.order, d.kernel_scale);
    xs = to_unit_interval(xs);
  } else if (d.kernel == "gaussian") {
    spec = KernelSpec::gaussian(static_cast<int>(xs.cols()), d.bandwidth);
  } else {
    throw ConfigError("unknown kernel '" + d.kernel + "' (expected pdk or gaussian)");
  }
  const double nd = static_cast<double>(n);
  Eigen::Index s = d.s;
  if (s == 0) {
    s = spec.is_pdk() ? static_cast<Eigen::Index>(std::round(2.0 * std::pow(nd, 2.0 / (4.0 * d.order + 1.0))))
                      : static_cast<Eigen::Index>(std::round(1.2 * std::pow(std::log(nd), 2.0)));
    s = std::clamp<Eigen::Index>(s, 1, n);
  }
  if (s < 1 || s > n) throw ConfigError("--s must lie in [1, n]");
  SketchKind kind;
  try {
    kind = sketch_kind_from_string(d.sketch);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (d.kind != "simple" && d.kind != "composite") throw ConfigError("--kind must be simple or composite");

  const auto k = kernel_matrix(spec, xs);
  const SketchMatrix sketch = kind == SketchKind::DataDependentTopEigen
                                  ? data_dependent_sketch(eigendecompose(k), s)
                                  : draw_sketch(kind, s, n, StreamKey{seed, 0, StreamRole::Sketch});
  const SketchedProjection projection(k, sketch);
  double lambda = 0.0;
  if (d.lambda == "gcv") {
    lambda = gcv(projection, table.y, default_lambda_grid(spec, nd)).best_lambda;
  } else if (d.lambda == "star") {
    lambda = rate_table(spec, nd).lambda_star;
  } else if (d.lambda == "dagger") {
    lambda = rate_table(spec, nd).lambda_dagger;
  } else {
    try {
      std::size_t used = 0;
      lambda = std::stod(d.lambda, &used);
      if (used != d.lambda.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("--lambda must be gcv, star, dagger or a positive number");
    }
    if (!(lambda > 0.0)) throw ConfigError("--lambda must be positive");
  }
  const auto op = projection.at(lambda);
  const TestReport r = d.kind == "simple"
                           ? simple_test(op, table.y, d.alpha, d.noise_variance)
                           : composite_linear_test(op, polynomial_design(xs, d.poly_order), table.y, d.alpha,
                                                   d.noise_variance, d.poly_order);
  std::cout << "test        " << to_string(r.kind) << "\n"
            << "n           " << n << "\n"
            << "s           " << r.s << "\n"
            << "lambda      " << fmt6(r.lambda) << (d.lambda == "gcv" ? " (gcv)" : "") << "\n"
            << "statistic   " << fmt6(r.statistic) << "\n"
            << "mu_null     " << fmt6(r.mu_null) << "\n"
            << "sigma_null  " << fmt6(r.sigma_null) << "\n"
            << "z           " << fmt6(r.z) << "\n"
            << "p_value     " << fmt6(r.p_value) << "\n"
            << "seed        " << seed << "\n"
            << "decision    " << (r.reject ? "reject" : "retain") << " at alpha=" << fmt6(r.alpha) << "\n";
  if (opt.record) {
    json rec = report_json(r, seed);
    rec["command"] = "test";
    rec["data"] = d.data;
    rec["kernel"] = spec.name();
    append_record(fs::path(opt.out), rec);
  }
  return r.reject ? kExitReject : kExitOk;
}

int run_adaptive(const CommonOptions& opt, const DataOptions& d) {
  if (d.data.empty()) throw ConfigError("adaptive requires --data");
  const auto table = read_data_csv(fs::path(d.data));
  if (table.xs.cols() != 1) throw ConfigError("the adaptive test takes a single covariate");
  if (table.xs.rows() < 16) throw ConfigError("the adaptive test requires n >= 16");
  if (!(d.alpha > 0.0 && d.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (d.m_n != 0 && d.m_n < 2) throw ConfigError("--m-n must be >= 2");
  AdaptiveOptions a;
  a.alpha = d.alpha;
  a.m_n = d.m_n;
  a.c_lambda = d.c_lambda;
  a.d_s = d.d_s;
  a.kernel_scale = d.kernel_scale;
  try {
    a.sketch_kind = sketch_kind_from_string(d.sketch);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const std::uint64_t seed = opt.seed.value_or(20240101);
  const auto r = adaptive_test(to_unit_interval(table.xs), table.y, a, seed);
  std::cout << "m     lambda_m      s_m   tau_m\n";
  for (std::size_t i = 0; i < r.m_list.size(); ++i) {
    std::cout << r.m_list[i] << "     " << fmt6(r.schedule[i].lambda) << "   " << r.schedule[i].s << "   "
              << fmt6(r.tau[i]) << "\n";
  }
  std::cout << "tau_star    " << fmt6(r.tau_star) << "\n"
            << "B_n         " << fmt6(r.b_n) << "\n"
            << "tau_final   " << fmt6(r.tau_final) << "\n"
            << "c_alpha     " << fmt6(r.c_alpha) << "\n"
            << "seed        " << seed << "\n"
            << "decision    " << (r.reject ? "reject" : "retain") << " at alpha=" << fmt6(r.alpha) << "\n";
  if (opt.record) {
    json per_m = json::array();
    for (std::size_t i = 0; i < r.m_list.size(); ++i) {
      per_m.push_back({{"m", r.m_list[i]}, {"lambda", r.schedule[i].lambda}, {"s", r.schedule[i].s}, {"tau", r.tau[i]}});
    }
    append_record(fs::path(opt.out), json{{"command", "adaptive"},
                                          {"data", d.data},
                                          {"orders", per_m},
                                          {"tau_star", r.tau_star},
                                          {"b_n", r.b_n},
                                          {"tau_final", r.tau_final},
                                          {"c_alpha", r.c_alpha},
                                          {"reject", r.reject},
                                          {"alpha", r.alpha},
                                          {"seed", seed}});
  }
  return r.reject ? kExitReject : kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config, "JSON experiment config");
  cmd->add_option("--seed", opt.seed, "Base seed (overrides the config)");
  cmd->add_option("--workers", opt.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", opt.out, "Output directory")->capture_default_str();
  cmd->add_flag("--record", opt.record, "Append JSON-lines records to <out>/records.jsonl");
}

void add_data(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.data, "CSV with header x1..xd,y")->required();
  cmd->add_option("--alpha", d.alpha, "Significance level")->capture_default_str();
  cmd->add_option("--sketch", d.sketch, "gaussian, rademacher or data-dependent")->capture_default_str();
  cmd->add_option("--kernel-scale", d.kernel_scale, "Periodic Sobolev kernel scale")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketched kernel ridge regression tests"};
  app.require_subcommand(1);
  CommonOptions opt;
  DataOptions data;

  auto* sim = app.add_subcommand("simulate", "Monte Carlo size/power experiments");
  add_common(sim, opt);
  auto* grid = app.add_subcommand("phase-grid", "Empirical power over a (lambda, s) grid");
  add_common(grid, opt);
  auto* diag = app.add_subcommand("diagnose", "Spectral and sketch diagnostics over an (n, lambda, s) grid");
  add_common(diag, opt);

  auto* test = app.add_subcommand("test", "Distance test on a data file");
  add_common(test, opt);
  add_data(test, data);
  test->add_option("--kernel", data.kernel, "pdk or gaussian")->capture_default_str();
  test->add_option("--order", data.order, "Periodic Sobolev order m")->capture_default_str();
  test->add_option("--bandwidth", data.bandwidth, "Gaussian kernel bandwidth")->capture_default_str();
  test->add_option("--lambda", data.lambda, "gcv, star, dagger or a number")->capture_default_str();
  test->add_option("--kind", data.kind, "simple or composite")->capture_default_str();
  test->add_option("--poly-order", data.poly_order, "Polynomial order of the composite null")->capture_default_str();
  test->add_option("--s", data.s, "Sketch dimension (default from the rate rule)");
  test->add_option("--noise-variance", data.noise_variance, "Known noise variance")->capture_default_str();

  auto* adaptive = app.add_subcommand("adaptive", "Smoothness-adaptive test on a data file");
  add_common(adaptive, opt);
  add_data(adaptive, data);
  adaptive->add_option("--m-n", data.m_n, "Largest order (default floor(sqrt(log n)))");
  adaptive->add_option("--c-lambda", data.c_lambda, "lambda_m constant")->capture_default_str();
  adaptive->add_option("--d-s", data.d_s, "s_m constant")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return run_simulate(opt);
    if (grid->parsed()) return run_phase_grid(opt);
    if (diag->parsed()) return run_diagnose(opt);
    if (test->parsed()) return run_test(opt, data);
    if (adaptive->parsed()) return run_adaptive(opt, data);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return kExitConfig;
}
