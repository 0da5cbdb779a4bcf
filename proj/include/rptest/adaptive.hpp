// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/krr.hpp"
#include "rptest/random.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"

namespace rptest {

struct Schedule {
  int m = 2;
  double lambda = 0.0;
  Eigen::Index s = 0;
};

/*!
 * lambda_m = c_lambda n^{-4m/(4m+1)} (log log n)^{2m/(4m+1)}
 * s_m      = ceil(d_s n^{k/(4m+1)} (log log n)^{-1/(4m+1)}), clamped to [1, n]
 *
 * k is the sketch-growth numerator; k = 2 gives the usual n^{2/(4m+1)}.
 */
inline Schedule schedules(int m, Eigen::Index n, double c_lambda = 1.0, double d_s = 2.0,
                          double gamma_numerator = 2.0) {
  detail::require(m >= 2, "schedules: m must be >= 2");
  detail::require(n >= 16, "schedules: n must be >= 16 so that log log n > 0");
  detail::require(c_lambda > 0.0 && d_s > 0.0, "schedules: c_lambda and d_s must be positive");
  const double nd = static_cast<double>(n);
  const double denom = 4.0 * m + 1.0;
  const double loglog = std::log(std::log(nd));
  Schedule out;
  out.m = m;
  out.lambda = c_lambda * std::pow(nd, -4.0 * m / denom) * std::pow(loglog, 2.0 * m / denom);
  const double raw = d_s * std::pow(nd, gamma_numerator / denom) * std::pow(loglog, -1.0 / denom);
  out.s = static_cast<Eigen::Index>(std::clamp(std::ceil(raw), 1.0, nd));
  return out;
}

/// Positive root of 2 pi B^2 exp(B^2) = m_n^2, found by bisection on B^2.
inline double solve_bn(int m_n) {
  detail::require(m_n >= 2, "solve_bn: m_n must be >= 2");
  const double target = static_cast<double>(m_n) * m_n;
  auto f = [&](double x) { return 2.0 * std::numbers::pi * x * std::exp(x) - target; };
  double lo = 0.0;
  double hi = 2.0 * std::log(static_cast<double>(m_n)) + 10.0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    x = 0.5 * (lo + hi);
    const double r = f(x);
    if (std::abs(r) <= 1e-12 * target || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    (r > 0.0 ? hi : lo) = x;
  }
  return std::sqrt(x);
}

/// sqrt(2 log m) - (log log m + log 4 pi) / (2 sqrt(2 log m))
inline double bn_expansion(int m_n) {
  detail::require(m_n >= 2, "bn_expansion: m_n must be >= 2");
  const double l = std::log(static_cast<double>(m_n));
  const double r = std::sqrt(2.0 * l);
  return r - (std::log(l) + std::log(4.0 * std::numbers::pi)) / (2.0 * r);
}

/// Gumbel quantile c_alpha = -log(-log(1 - alpha)).
inline double critical_value(double alpha) {
  detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  return -std::log(-std::log1p(-alpha));
}

inline int default_m_n(Eigen::Index n) {
  detail::require(n >= 16, "default_m_n: n must be >= 16");
  return std::max(2, static_cast<int>(std::floor(std::sqrt(std::log(static_cast<double>(n))))));
}

/// tau = (y^T Delta^2 y - tr(Delta^2)) / sqrt(2 tr(Delta^4)); equals the simple-test z.
inline double standardized_stat(const SketchedProjection::Operator& op, const Eigen::VectorXd& y) {
  const double tr4 = op.trace_power(4);
  if (!(tr4 > std::numeric_limits<double>::min()) || !std::isfinite(tr4)) {
    throw DegenerateError("standardized_stat: tr(Delta^4) vanished");
  }
  return (op.apply(y).squaredNorm() - op.trace_power(2)) / std::sqrt(2.0 * tr4);
}

inline double standardized_stat(const KernelMatrix& k, const SketchMatrix& sketch, double lambda,
                                const Eigen::VectorXd& y) {
  return standardized_stat(SketchedProjection(k, sketch).at(lambda), y);
}

struct AdaptiveOptions {
  double alpha = 0.05;
  int m_n = 0;  ///< 0 selects default_m_n(n)
  SketchKind sketch_kind = SketchKind::GaussianIid;
  double c_lambda = 1.0;
  double d_s = 2.0;
  double gamma_numerator = 2.0;
  double kernel_scale = 1.0;
};

struct AdaptiveReport {
  std::vector<int> m_list;
  std::vector<double> tau;
  std::vector<Schedule> schedule;
  double tau_star = 0.0;
  double b_n = 0.0;
  double tau_final = 0.0;
  double c_alpha = 0.0;
  double alpha = 0.05;
  bool reject = false;
  std::uint64_t seed = 0;
};

/*!
 * Smoothness-adaptive test over periodic Sobolev orders m = 2..m_n.
 *
 * Each order draws its own sketch from the Sketch stream of `key` with
 * substream m.
 */
inline AdaptiveReport adaptive_test(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y,
                                    const AdaptiveOptions& opts, StreamKey key) {
  const Eigen::Index n = xs.rows();
  detail::require(n >= 16, "adaptive_test: n must be >= 16");
  detail::require(y.size() == n, "adaptive_test: y length must equal the number of design rows");
  detail::require(opts.alpha > 0.0 && opts.alpha < 1.0, "alpha must lie in (0, 1)");
  AdaptiveReport out;
  out.alpha = opts.alpha;
  out.seed = key.seed;
  const int m_n = opts.m_n == 0 ? default_m_n(n) : opts.m_n;
  detail::require(m_n >= 2, "adaptive_test: m_n must be >= 2");
  out.tau_star = -std::numeric_limits<double>::infinity();
  for (int m = 2; m <= m_n; ++m) {
    const auto sched = schedules(m, n, opts.c_lambda, opts.d_s, opts.gamma_numerator);
    const auto spec = KernelSpec::periodic_sobolev(m, opts.kernel_scale);
    const auto k = kernel_matrix(spec, xs);
    const SketchMatrix sketch =
        opts.sketch_kind == SketchKind::DataDependentTopEigen
            ? data_dependent_sketch(eigendecompose(k), sched.s)
            : draw_sketch(opts.sketch_kind, sched.s, n,
                          key.with_role(StreamRole::Sketch).with_substream(static_cast<std::uint32_t>(m)));
    double tau = 0.0;
    try {
      tau = standardized_stat(SketchedProjection(k, sketch).at(sched.lambda), y);
    } catch (const DegenerateError& e) {
      throw DegenerateError("adaptive_test: order m=" + std::to_string(m) + ": " + e.what());
    }
    out.m_list.push_back(m);
    out.tau.push_back(tau);
    out.schedule.push_back(sched);
    out.tau_star = std::max(out.tau_star, tau);
  }
  out.b_n = solve_bn(m_n);
  out.tau_final = out.b_n * (out.tau_star - out.b_n);
  out.c_alpha = critical_value(opts.alpha);
  out.reject = out.tau_final >= out.c_alpha;
  return out;
}

inline AdaptiveReport adaptive_test(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y,
                                    const AdaptiveOptions& opts, std::uint64_t seed) {
  return adaptive_test(xs, y, opts, StreamKey{seed, 0, StreamRole::Sketch});
}

}  // namespace rptest
