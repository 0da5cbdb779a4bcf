// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/krr.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"
#include "rptest/stats.hpp"

namespace rptest {

enum class TestKind { SimpleNull, CompositeLinear };

inline std::string_view to_string(TestKind kind) {
  return kind == TestKind::SimpleNull ? "simple" : "composite";
}

/// Outcome of the distance test |T - mu| >= z_{1-alpha/2} sigma.
struct TestReport {
  double statistic = 0.0;   ///< T = ||f_hat||_n^2
  double mu_null = 0.0;
  double sigma_null = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  double lambda = 0.0;
  Eigen::Index s = 0;
  TestKind kind = TestKind::SimpleNull;
  int polynomial_order = 0;  ///< composite tests only
};

namespace detail {

inline void finish_report(TestReport& r, double tr2, double tr4, double n, double noise_variance) {
  if (!(tr4 > std::numeric_limits<double>::min()) || !std::isfinite(tr4)) {
    throw DegenerateError("distance test: tr(Delta^4) vanished, the null variance is zero");
  }
  r.mu_null = noise_variance * tr2 / n;
  r.sigma_null = noise_variance * std::sqrt(2.0 * tr4) / n;
  r.z = (r.statistic - r.mu_null) / r.sigma_null;
  r.p_value = stats::two_sided_p_value(r.z);
  r.reject = std::abs(r.z) >= stats::normal_quantile(1.0 - r.alpha / 2.0);
}

inline void check_test_args(double alpha, double noise_variance) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(noise_variance > 0.0 && std::isfinite(noise_variance), "noise variance must be positive");
}

}  // namespace detail

/// Simple-null test H0: f = 0 for an already-factored Delta(lambda).
/// Under noise variance sigma^2, mu_null and sigma_null are scaled by sigma^2.
inline TestReport simple_test(const SketchedProjection::Operator& op, const Eigen::VectorXd& y,
                              double alpha, double noise_variance = 1.0) {
  detail::check_test_args(alpha, noise_variance);
  const double n = static_cast<double>(op.n());
  TestReport r;
  r.alpha = alpha;
  r.lambda = op.lambda();
  r.s = op.s();
  r.kind = TestKind::SimpleNull;
  r.statistic = op.apply(y).squaredNorm() / n;
  detail::finish_report(r, op.trace_power(2), op.trace_power(4), n, noise_variance);
  return r;
}

inline TestReport simple_test(const KernelMatrix& k, const SketchMatrix& sketch, double lambda,
                              const Eigen::VectorXd& y, double alpha, double noise_variance = 1.0) {
  return simple_test(SketchedProjection(k, sketch).at(lambda), y, alpha, noise_variance);
}

/// Columns [1, x_j, x_j^2, ..., x_j^q] for each coordinate j (no interactions).
inline Eigen::MatrixXd polynomial_design(const Eigen::MatrixXd& xs, int order) {
  detail::require(order >= 0, "polynomial order must be non-negative");
  const Eigen::Index d = xs.cols();
  Eigen::MatrixXd x(xs.rows(), 1 + d * order);
  x.col(0).setOnes();
  for (Eigen::Index j = 0; j < d; ++j) {
    for (int q = 1; q <= order; ++q) {
      x.col(1 + j * order + (q - 1)) = xs.col(j).array().pow(static_cast<double>(q));
    }
  }
  return x;
}

/// Orthonormal basis of col(X); rejects rank-deficient X.
inline Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& x) {
  detail::require(x.rows() > x.cols(), "design must have more rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  detail::require(qr.rank() == x.cols(), "design matrix is rank deficient");
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
  return q;
}

//---------------------------------------------------------------------------//
/*!
 * Composite test of H0: f lies in col(X).
 *
 * y* = (I - H) y with H the hat matrix of X; T* = ||Delta y*||^2 / n,
 * mu* = tr((I-H) Delta^2 (I-H)) / n, sigma*^2 = 2 tr((I-H) Delta^4 (I-H)) / n^2.
 * The traces use tr(Delta^2) - ||Delta Q||_F^2 and tr(Delta^4) - ||Delta^2 Q||_F^2
 * with Q an orthonormal basis of col(X).
 */
inline TestReport composite_linear_test(const SketchedProjection::Operator& op, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, double alpha,
                                        double noise_variance = 1.0, int polynomial_order = 1) {
  detail::check_test_args(alpha, noise_variance);
  detail::require(x.rows() == op.n() && y.size() == op.n(), "design and response must have n rows");
  const Eigen::MatrixXd q = orthonormal_columns(x);
  const double n = static_cast<double>(op.n());
  const Eigen::VectorXd ystar = y - q * (q.transpose() * y);
  const Eigen::MatrixXd dq = op.apply(q);
  const Eigen::MatrixXd d2q = op.apply(dq);
  TestReport r;
  r.alpha = alpha;
  r.lambda = op.lambda();
  r.s = op.s();
  r.kind = TestKind::CompositeLinear;
  r.polynomial_order = polynomial_order;
  r.statistic = op.apply(ystar).squaredNorm() / n;
  const double tr2 = std::max(0.0, op.trace_power(2) - dq.squaredNorm());
  const double tr4 = std::max(0.0, op.trace_power(4) - d2q.squaredNorm());
  detail::finish_report(r, tr2, tr4, n, noise_variance);
  return r;
}

inline TestReport composite_linear_test(const KernelMatrix& k, const SketchMatrix& sketch,
                                        double lambda, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, double alpha,
                                        double noise_variance = 1.0) {
  return composite_linear_test(SketchedProjection(k, sketch).at(lambda), x, y, alpha, noise_variance);
}

/// d_{n,lambda} = sqrt(lambda + sigma_{n,lambda})
inline double separation_rate(double lambda, double sigma_null) {
  detail::require(lambda >= 0.0 && sigma_null >= 0.0, "separation_rate: inputs must be non-negative");
  return std::sqrt(lambda + sigma_null);
}

//---------------------------------------------------------------------------//
/// Medians of mu/(s_lambda/n) and sigma^2/(s_lambda/n^2) over design draws.
struct MomentOrderReport {
  Eigen::Index n = 0;
  double lambda = 0.0;
  Eigen::Index s = 0;
  Eigen::Index s_lambda = 0;
  double median_mean_ratio = 0.0;
  double median_variance_ratio = 0.0;
  bool regime_valid = false;  ///< lambda in (1/n, 1), s_lambda >= 1 and s >= 4 s_lambda
  std::vector<double> mean_ratios;
  std::vector<double> variance_ratios;
};

inline MomentOrderReport null_moment_orders_check(const KernelSpec& spec, Eigen::Index n,
                                                  double lambda, Eigen::Index s, int reps,
                                                  std::uint64_t seed,
                                                  SketchKind kind = SketchKind::GaussianIid) {
  detail::require(reps >= 1, "null_moment_orders_check requires reps >= 1");
  detail::require(lambda > 0.0, "lambda must be positive");
  detail::require(s >= 1 && s <= n, "sketch dimension must lie in [1, n]");
  MomentOrderReport out;
  out.n = n;
  out.lambda = lambda;
  out.s = s;
  out.s_lambda = static_cast<Eigen::Index>(theoretical_count_above(spec, lambda));
  const double nd = static_cast<double>(n);
  out.regime_valid = lambda > 1.0 / nd && lambda < 1.0 && out.s_lambda >= 1 && s >= 4 * out.s_lambda;
  if (out.s_lambda == 0) return out;
  const double sl = static_cast<double>(out.s_lambda);
  for (int rep = 0; rep < reps; ++rep) {
    const StreamKey key{seed, static_cast<std::uint32_t>(rep), StreamRole::Design};
    RandomStream design(key);
    const auto k = kernel_matrix(spec, draw_design(spec, n, design));
    SketchMatrix sketch = kind == SketchKind::DataDependentTopEigen
                              ? data_dependent_sketch(eigendecompose(k), s)
                              : draw_sketch(kind, s, n, key.with_role(StreamRole::Sketch));
    const auto op = SketchedProjection(k, sketch).at(lambda);
    const double mu = op.trace_power(2) / nd;
    const double var = 2.0 * op.trace_power(4) / (nd * nd);
    out.mean_ratios.push_back(mu / (sl / nd));
    out.variance_ratios.push_back(var / (sl / (nd * nd)));
  }
  out.median_mean_ratio = stats::median(out.mean_ratios);
  out.median_variance_ratio = stats::median(out.variance_ratios);
  return out;
}

/// Ratio-median drift between n and 2n; the constant-free pass condition is drift <= 2.
struct MomentDrift {
  MomentOrderReport at_n;
  MomentOrderReport at_2n;
  double mean_drift = 0.0;
  double variance_drift = 0.0;
  bool pass = false;
};

/// lambda(n) = n^{-lambda_exponent}, s(n) = max(ceil(s_factor * s_lambda), 1).
inline MomentDrift moment_order_drift(const KernelSpec& spec, Eigen::Index n, double lambda_exponent,
                                      double s_factor, int reps, std::uint64_t seed) {
  auto run = [&](Eigen::Index size) {
    const double lambda = std::pow(static_cast<double>(size), -lambda_exponent);
    const auto sl = static_cast<double>(theoretical_count_above(spec, lambda));
    const auto s = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(s_factor * sl)), 1, size);
    return null_moment_orders_check(spec, size, lambda, s, reps, seed);
  };
  MomentDrift out;
  out.at_n = run(n);
  out.at_2n = run(2 * n);
  auto drift = [](double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) return std::numeric_limits<double>::infinity();
    return std::max(a / b, b / a);
  };
  out.mean_drift = drift(out.at_n.median_mean_ratio, out.at_2n.median_mean_ratio);
  out.variance_drift = drift(out.at_n.median_variance_ratio, out.at_2n.median_variance_ratio);
  out.pass = out.mean_drift <= 2.0 && out.variance_drift <= 2.0;
  return out;
}

}  // namespace rptest
