// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rptest/adaptive.hpp"
#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/krr.hpp"
#include "rptest/random.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"
#include "rptest/stats.hpp"
#include "rptest/testing.hpp"

namespace rptest {

struct Dataset {
  Eigen::MatrixXd xs;
  Eigen::VectorXd y;
  Eigen::VectorXd f_true;
};

/// Beta(a, b) density, evaluated in log space.
inline double beta_density(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) {
    if (x == 0.0 && a == 1.0) return b;
    if (x == 1.0 && b == 1.0) return a;
    return 0.0;
  }
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

/// f(x) / c for the univariate Beta-mixture signal.
inline double pdk_signal(double x) { return 3.0 * beta_density(x, 30.0, 17.0) + 2.0 * beta_density(x, 3.0, 11.0); }

/// f(x) / c for the trivariate polynomial signal.
inline double edk_signal(double x1, double x2, double x3) { return x1 * x1 + 2.0 * x1 * x2 + 4.0 * x1 * x2 * x3; }

/// x ~ Unif[0, 1), y = c (3 beta_{30,17}(x) + 2 beta_{3,11}(x)) + N(0, 1).
inline Dataset gen_pdk_data(Eigen::Index n, double c, RandomStream& design, RandomStream& noise) {
  detail::require(n >= 1, "gen_pdk_data: n must be >= 1");
  detail::require(c >= 0.0, "gen_pdk_data: c must be non-negative");
  Dataset d{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) d.xs(i, 0) = design.uniform();
  for (Eigen::Index i = 0; i < n; ++i) {
    d.f_true[i] = c == 0.0 ? 0.0 : c * pdk_signal(d.xs(i, 0));
    d.y[i] = d.f_true[i] + noise.normal();
  }
  return d;
}

inline Dataset gen_pdk_data(Eigen::Index n, double c, RandomStream& rng) { return gen_pdk_data(n, c, rng, rng); }

/// x ~ N(0, I_3), y = c (x1^2 + 2 x1 x2 + 4 x1 x2 x3) + N(0, 1).
inline Dataset gen_edk_data(Eigen::Index n, double c, RandomStream& design, RandomStream& noise) {
  detail::require(n >= 1, "gen_edk_data: n must be >= 1");
  detail::require(c >= 0.0, "gen_edk_data: c must be non-negative");
  Dataset d{Eigen::MatrixXd(n, 3), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) d.xs(i, j) = design.normal();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    d.f_true[i] = c * edk_signal(d.xs(i, 0), d.xs(i, 1), d.xs(i, 2));
    d.y[i] = d.f_true[i] + noise.normal();
  }
  return d;
}

inline Dataset gen_edk_data(Eigen::Index n, double c, RandomStream& rng) { return gen_edk_data(n, c, rng, rng); }

//---------------------------------------------------------------------------//
// Adversarial alternatives in the RKHS ball of radius sqrt(C)
//---------------------------------------------------------------------------//

struct AdversarialTruth {
  Eigen::VectorXd f_vec;      ///< f at the design points, n K w
  Eigen::VectorXd alpha_vec;  ///< coefficients in the eigenbasis, w = U alpha
  Eigen::VectorXd weights;    ///< w
  double rkhs_norm_sq = 0.0;  ///< n alpha^T D alpha
};

namespace detail {

inline AdversarialTruth build_truth(const EigenSystem& eig, Eigen::Index first, Eigen::Index count,
                                    double scale) {
  const Eigen::Index n = eig.n();
  AdversarialTruth out;
  out.alpha_vec = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = first; i < first + count; ++i) {
    const double mu = eig.mu_hat[i];
    if (!(mu > 0.0)) {
      throw DegenerateError("adversarial truth: zero eigenvalue at index " + std::to_string(i + 1));
    }
    out.alpha_vec[i] = std::sqrt(scale / mu);
  }
  const double nd = static_cast<double>(n);
  out.weights = eig.U * out.alpha_vec;
  out.f_vec = nd * (eig.U * eig.mu_hat.cwiseProduct(out.alpha_vec));
  out.rkhs_norm_sq = nd * out.alpha_vec.dot(eig.mu_hat.cwiseProduct(out.alpha_vec));
  return out;
}

}  // namespace detail

/// alpha_i^2 = C / (n s mu_hat_i) for i = s+1..2s (1-based), zero elsewhere.
inline AdversarialTruth adversarial_truth_estimation(const EigenSystem& eig, Eigen::Index s, double c = 1.0) {
  detail::require(s >= 1, "adversarial_truth_estimation: s must be >= 1");
  detail::require(2 * s <= eig.n(), "adversarial_truth_estimation: requires 2s <= n");
  detail::require(c > 0.0, "adversarial_truth_estimation: C must be positive");
  const double nd = static_cast<double>(eig.n());
  return detail::build_truth(eig, s, s, c / (nd * static_cast<double>(s)));
}

/// alpha_{gs+k}^2 = C / (n (s-1) mu_hat_{gs+k}) for k = 1..s-1, zero elsewhere.
inline AdversarialTruth adversarial_truth_testing(const EigenSystem& eig, Eigen::Index s, Eigen::Index g,
                                                  double c = 1.0) {
  detail::require(s >= 2, "adversarial_truth_testing: s must be >= 2");
  detail::require(g >= 1, "adversarial_truth_testing: g must be >= 1 so the support avoids 1..s");
  detail::require((g + 1) * s <= eig.n(), "adversarial_truth_testing: requires (g+1)s <= n");
  detail::require(c > 0.0, "adversarial_truth_testing: C must be positive");
  const double nd = static_cast<double>(eig.n());
  return detail::build_truth(eig, g * s, s - 1, c / (nd * static_cast<double>(s - 1)));
}

//---------------------------------------------------------------------------//
// Monte Carlo engine
//---------------------------------------------------------------------------//

enum class Dgp { PdkBeta, EdkMultivariate, Custom };
enum class TestProcedure { DT, AT, CompositeLinear };
enum class LambdaRule { Explicit, GCV, RateStar, RateDagger };

inline std::string_view to_string(Dgp d) {
  switch (d) {
    case Dgp::PdkBeta: return "pdk-beta";
    case Dgp::EdkMultivariate: return "edk-poly";
    case Dgp::Custom: return "custom";
  }
  return "unknown";
}

inline std::string_view to_string(TestProcedure t) {
  switch (t) {
    case TestProcedure::DT: return "DT";
    case TestProcedure::AT: return "AT";
    case TestProcedure::CompositeLinear: return "composite";
  }
  return "unknown";
}

inline std::string_view to_string(LambdaRule r) {
  switch (r) {
    case LambdaRule::Explicit: return "explicit";
    case LambdaRule::GCV: return "gcv";
    case LambdaRule::RateStar: return "rate-star";
    case LambdaRule::RateDagger: return "rate-dagger";
  }
  return "unknown";
}

/// How the sketch dimension depends on n.
struct SRule {
  enum class Kind { Explicit, GammaRule, LogPower };
  Kind kind = Kind::GammaRule;
  Eigen::Index s = 0;   ///< Explicit
  double factor = 2.0;  ///< GammaRule: round(factor n^gamma); LogPower: round(factor (log n)^gamma)
  double gamma = 2.0 / 9.0;

  static SRule explicit_size(Eigen::Index s) { return {Kind::Explicit, s, 0.0, 0.0}; }
  static SRule gamma_rule(double factor, double gamma) { return {Kind::GammaRule, 0, factor, gamma}; }
  static SRule log_power(double factor, double gamma) { return {Kind::LogPower, 0, factor, gamma}; }

  [[nodiscard]] Eigen::Index resolve(Eigen::Index n) const {
    double raw = 0.0;
    switch (kind) {
      case Kind::Explicit: raw = static_cast<double>(s); break;
      case Kind::GammaRule: raw = std::round(factor * std::pow(static_cast<double>(n), gamma)); break;
      case Kind::LogPower: raw = std::round(factor * std::pow(std::log(static_cast<double>(n)), gamma)); break;
    }
    detail::require(raw >= 1.0, "sketch rule yields s < 1");
    detail::require(raw <= static_cast<double>(n), "sketch rule yields s > n");
    return static_cast<Eigen::Index>(raw);
  }
};

struct MonteCarloConfig {
  Dgp dgp = Dgp::PdkBeta;
  double c = 0.0;
  Eigen::Index n = 512;
  int reps = 500;
  double alpha = 0.05;
  SketchKind sketch_kind = SketchKind::GaussianIid;
  SRule s_rule;
  LambdaRule lambda_rule = LambdaRule::GCV;
  double lambda = 0.0;  ///< LambdaRule::Explicit
  std::vector<double> lambda_grid;  ///< GCV grid; empty selects default_lambda_grid
  std::uint64_t seed = 0;
  TestProcedure test = TestProcedure::DT;
  int kernel_order = 2;
  double kernel_scale = 1.0;
  double bandwidth = 1.0;
  int polynomial_order = 1;
  AdaptiveOptions adaptive;  ///< alpha and sketch kind are taken from this config
  unsigned workers = 1;
  bool keep_decisions = false;
  /// Dgp::Custom: builds the dataset of one replication from its design and noise streams.
  std::function<Dataset(Eigen::Index n, RandomStream& design, RandomStream& noise)> custom;
};

inline KernelSpec kernel_for(const MonteCarloConfig& cfg) {
  if (cfg.dgp == Dgp::EdkMultivariate) return KernelSpec::gaussian(3, cfg.bandwidth);
  return KernelSpec::periodic_sobolev(cfg.kernel_order, cfg.kernel_scale);
}

inline void validate(const MonteCarloConfig& cfg) {
  detail::require(cfg.reps >= 1, "reps must be >= 1");
  detail::require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "alpha must lie in (0, 1)");
  detail::require(cfg.n >= 2, "n must be >= 2");
  detail::require(cfg.c >= 0.0, "c must be non-negative");
  detail::require(cfg.workers >= 1, "workers must be >= 1");
  detail::require(cfg.dgp != Dgp::Custom || static_cast<bool>(cfg.custom),
                  "custom DGP requires a generator");
  detail::require(cfg.lambda_rule != LambdaRule::Explicit || cfg.lambda > 0.0,
                  "explicit lambda must be positive");
  detail::require(cfg.test != TestProcedure::AT || cfg.dgp != Dgp::EdkMultivariate,
                  "the adaptive test is defined for periodic Sobolev kernels only");
  detail::require(cfg.test != TestProcedure::AT || cfg.n >= 16, "the adaptive test requires n >= 16");
  if (cfg.test != TestProcedure::AT) (void)cfg.s_rule.resolve(cfg.n);
}

/// Result of one replication.
struct ReplicationOutcome {
  bool ok = false;
  bool reject = false;
  double z = 0.0;  ///< standardized statistic; tau_final for the adaptive test
  double lambda = 0.0;
  Eigen::Index s = 0;
  std::string error;
};

inline Dataset generate(const MonteCarloConfig& cfg, std::uint32_t rep) {
  RandomStream design(StreamKey{cfg.seed, rep, StreamRole::Design});
  RandomStream noise(StreamKey{cfg.seed, rep, StreamRole::Noise});
  switch (cfg.dgp) {
    case Dgp::PdkBeta: return gen_pdk_data(cfg.n, cfg.c, design, noise);
    case Dgp::EdkMultivariate: return gen_edk_data(cfg.n, cfg.c, design, noise);
    case Dgp::Custom: return cfg.custom(cfg.n, design, noise);
  }
  throw ArgumentError("unknown DGP");
}

inline double choose_lambda(const MonteCarloConfig& cfg, const KernelSpec& spec,
                            const SketchedProjection& projection, const Eigen::VectorXd& y) {
  switch (cfg.lambda_rule) {
    case LambdaRule::Explicit: return cfg.lambda;
    case LambdaRule::RateStar: return rate_table(spec, static_cast<double>(cfg.n)).lambda_star;
    case LambdaRule::RateDagger: return rate_table(spec, static_cast<double>(cfg.n)).lambda_dagger;
    case LambdaRule::GCV: {
      const auto grid = cfg.lambda_grid.empty() ? default_lambda_grid(spec, static_cast<double>(cfg.n))
                                                : cfg.lambda_grid;
      return gcv(projection, y, grid).best_lambda;
    }
  }
  throw ArgumentError("unknown lambda rule");
}

/// Runs replication `rep`; a pure function of (config, rep).
inline ReplicationOutcome run_replication(const MonteCarloConfig& cfg, std::uint32_t rep) {
  ReplicationOutcome out;
  try {
    const Dataset data = generate(cfg, rep);
    const StreamKey sketch_key{cfg.seed, rep, StreamRole::Sketch};
    if (cfg.test == TestProcedure::AT) {
      AdaptiveOptions opts = cfg.adaptive;
      opts.alpha = cfg.alpha;
      opts.sketch_kind = cfg.sketch_kind;
      opts.kernel_scale = cfg.kernel_scale;
      const auto report = adaptive_test(data.xs, data.y, opts, sketch_key);
      out.reject = report.reject;
      out.z = report.tau_final;
      out.lambda = report.schedule.front().lambda;
      out.s = report.schedule.front().s;
    } else {
      const auto spec = kernel_for(cfg);
      const auto k = kernel_matrix(spec, data.xs);
      const Eigen::Index s = cfg.s_rule.resolve(cfg.n);
      const SketchMatrix sketch = cfg.sketch_kind == SketchKind::DataDependentTopEigen
                                      ? data_dependent_sketch(eigendecompose(k), s)
                                      : draw_sketch(cfg.sketch_kind, s, cfg.n, sketch_key);
      const SketchedProjection projection(k, sketch);
      const double lambda = choose_lambda(cfg, spec, projection, data.y);
      const auto op = projection.at(lambda);
      const TestReport report =
          cfg.test == TestProcedure::DT
              ? simple_test(op, data.y, cfg.alpha)
              : composite_linear_test(op, polynomial_design(data.xs, cfg.polynomial_order), data.y,
                                      cfg.alpha, 1.0, cfg.polynomial_order);
      out.reject = report.reject;
      out.z = report.z;
      out.lambda = lambda;
      out.s = s;
    }
    out.ok = std::isfinite(out.z);
    if (!out.ok) out.error = "non-finite statistic";
  } catch (const ComputationError& e) {
    out.error = e.what();
  } catch (const ArgumentError& e) {
    out.error = e.what();
  }
  return out;
}

struct MonteCarloResult {
  double rejection_rate = 0.0;
  double standard_error = 0.0;
  double mean_z = 0.0;
  double var_z = 0.0;
  double median_lambda = 0.0;
  Eigen::Index s = 0;  ///< sketch size of the first completed replication
  int completed = 0;
  int aborted = 0;
  bool failed = false;  ///< more than 1% of replications aborted
  std::string first_error;
  std::vector<std::uint8_t> decisions;  ///< per replication, when requested; 2 marks an abort
  std::vector<double> z_values;         ///< per completed replication, when requested
};

/// Evaluates fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline MonteCarloResult aggregate(const std::vector<ReplicationOutcome>& outcomes, bool keep) {
  MonteCarloResult res;
  std::vector<double> zs, lambdas;
  int rejects = 0;
  for (const auto& o : outcomes) {
    if (keep) res.decisions.push_back(o.ok ? static_cast<std::uint8_t>(o.reject) : std::uint8_t{2});
    if (!o.ok) {
      ++res.aborted;
      if (res.first_error.empty()) res.first_error = o.error;
      continue;
    }
    if (res.completed == 0) res.s = o.s;
    ++res.completed;
    rejects += o.reject ? 1 : 0;
    zs.push_back(o.z);
    lambdas.push_back(o.lambda);
  }
  const auto total = static_cast<double>(outcomes.size());
  res.failed = static_cast<double>(res.aborted) > 0.01 * total;
  if (res.completed > 0) {
    res.rejection_rate = static_cast<double>(rejects) / res.completed;
    res.standard_error = stats::binomial_standard_error(res.rejection_rate, res.completed);
    res.mean_z = stats::mean(zs);
    res.var_z = zs.size() > 1 ? stats::variance(zs) : 0.0;
    res.median_lambda = stats::median(lambdas);
  }
  if (keep) res.z_values = std::move(zs);
  return res;
}

/// Size or power of the configured test over independent replications.
inline MonteCarloResult monte_carlo(const MonteCarloConfig& cfg) {
  validate(cfg);
  std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(cfg.reps));
  parallel_for(outcomes.size(), cfg.workers,
               [&](std::size_t i) { outcomes[i] = run_replication(cfg, static_cast<std::uint32_t>(i)); });
  return aggregate(outcomes, cfg.keep_decisions);
}

//---------------------------------------------------------------------------//
// (lambda, s) phase grid
//---------------------------------------------------------------------------//

struct PhaseGridResult {
  std::vector<double> lambda_grid;
  std::vector<Eigen::Index> s_grid;
  std::vector<double> c_grid;
  /// power[(i * s_grid.size() + j) * c_grid.size() + k] for (lambda_i, s_j, c_k)
  std::vector<double> power;
  /// Smallest c with power >= 0.5 per (lambda_i, s_j); NaN when none qualifies.
  std::vector<double> swds_proxy;
  int aborted = 0;
  int reps = 0;

  [[nodiscard]] double at(std::size_t i, std::size_t j, std::size_t k) const {
    return power[(i * s_grid.size() + j) * c_grid.size() + k];
  }
  [[nodiscard]] double proxy(std::size_t i, std::size_t j) const { return swds_proxy[i * s_grid.size() + j]; }
};

/// Empirical power of the DT over every (lambda, s, c); every cell reuses the same seed.
inline PhaseGridResult phase_grid(const KernelSpec& spec, Eigen::Index n, const std::vector<double>& lambda_grid,
                                  const std::vector<Eigen::Index>& s_grid, const std::vector<double>& c_grid,
                                  int reps, std::uint64_t seed, unsigned workers = 1,
                                  SketchKind kind = SketchKind::GaussianIid) {
  detail::require(!lambda_grid.empty() && !s_grid.empty() && !c_grid.empty(), "phase_grid: grids must be non-empty");
  detail::require(reps >= 1, "phase_grid: reps must be >= 1");
  MonteCarloConfig base;
  base.dgp = spec.is_pdk() ? Dgp::PdkBeta : Dgp::EdkMultivariate;
  detail::require(spec.is_pdk() || spec.dimension() == 3, "phase_grid: Gaussian kernels use the trivariate signal");
  base.n = n;
  base.reps = reps;
  base.seed = seed;
  base.sketch_kind = kind;
  base.lambda_rule = LambdaRule::Explicit;
  base.test = TestProcedure::DT;
  base.kernel_order = spec.is_pdk() ? spec.order() : 2;
  base.kernel_scale = spec.scale();
  base.bandwidth = spec.bandwidth();
  base.workers = workers;

  PhaseGridResult out;
  out.lambda_grid = lambda_grid;
  out.s_grid = s_grid;
  out.c_grid = c_grid;
  out.reps = reps;
  for (double lambda : lambda_grid) {
    for (Eigen::Index s : s_grid) {
      double proxy = std::numeric_limits<double>::quiet_NaN();
      for (double c : c_grid) {
        MonteCarloConfig cfg = base;
        cfg.lambda = lambda;
        cfg.s_rule = SRule::explicit_size(s);
        cfg.c = c;
        const auto res = monte_carlo(cfg);
        out.aborted += res.aborted;
        out.power.push_back(res.rejection_rate);
        if (res.rejection_rate >= 0.5 && !(c >= proxy)) proxy = c;
      }
      out.swds_proxy.push_back(proxy);
    }
  }
  return out;
}

}  // namespace rptest
