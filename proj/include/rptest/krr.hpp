// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"

namespace rptest {

//---------------------------------------------------------------------------//
/*!
 * Reduced form of the sketched smoother for a fixed (K, S).
 *
 * With B = K S^T (n x s), G = S K^2 S^T = B^T B and C = S K S^T, the smoothing
 * matrix is
 *
 *   Delta(lambda) = B M^{-1} B^T,   M = G + lambda C.
 *
 * Writing C = R_C^T R_C, M = A^T A for the stacked A = [B; sqrt(lambda) R_C].
 * A pivoted QR of A, A P = Q R, gives Delta = Q_1 Q_1^T with Q_1 the first n
 * rows of Q, so nothing is formed from G and the conditioning is that of A.
 * A numerically rank-deficient A uses the pseudo-inverse of M.
 */
class SketchedProjection {
 public:
  SketchedProjection(const KernelMatrix& k, const SketchMatrix& sketch) {
    detail::require(sketch.cols() == k.size(), "sketch column count must equal n");
    detail::require(sketch.rows() <= k.size(), "sketch dimension s must not exceed n");
    auto data = std::make_shared<Data>();
    data->b = k.values() * sketch.values.transpose();
    Eigen::MatrixXd c = sketch.values * data->b;
    c = 0.5 * (c + c.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    if (eig.info() != Eigen::Success) {
      throw ComputationError("S K S^T eigendecomposition did not converge");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    data->c_root = root.asDiagonal() * eig.eigenvectors().transpose();
    data_ = std::move(data);
  }

  [[nodiscard]] Eigen::Index n() const noexcept { return data_->b.rows(); }
  [[nodiscard]] Eigen::Index s() const noexcept { return data_->b.cols(); }
  [[nodiscard]] const Eigen::MatrixXd& basis() const noexcept { return data_->b; }

  class Operator;
  [[nodiscard]] Operator at(double lambda) const;

 private:
  struct Data {
    Eigen::MatrixXd b;
    Eigen::MatrixXd c_root;  ///< R_C with R_C^T R_C = S K S^T
  };
  std::shared_ptr<const Data> data_;
};

/// Delta(lambda) for a fixed (K, S), in factored form.
class SketchedProjection::Operator {
 public:
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] Eigen::Index n() const noexcept { return data_->b.rows(); }
  [[nodiscard]] Eigen::Index s() const noexcept { return data_->b.cols(); }
  /// Numerical rank of M; below s when the pseudo-inverse was used.
  [[nodiscard]] Eigen::Index rank() const noexcept { return q1_.cols(); }

  /// Non-zero spectrum of Delta, sorted non-increasing.
  [[nodiscard]] const Eigen::VectorXd& spectrum() const noexcept { return theta_; }

  /// tr(Delta^power)
  [[nodiscard]] double trace_power(int power) const {
    return theta_.array().pow(static_cast<double>(power)).sum();
  }

  /// Delta y
  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
    detail::require(y.size() == n(), "vector length must equal n");
    return q1_ * (q1_.transpose() * y);
  }

  /// Delta Y for an n x k block.
  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& y) const {
    detail::require(y.rows() == n(), "block row count must equal n");
    return q1_ * (q1_.transpose() * y);
  }

  /// beta_hat = (1/n) M^{-1} S K y = (1/n) M^{-1} B^T y.
  [[nodiscard]] Eigen::VectorXd beta(const Eigen::VectorXd& y) const {
    detail::require(y.size() == n(), "vector length must equal n");
    const Eigen::Index r = rank();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(s());
    z.head(r) = r_.topLeftCorner(r, r).triangularView<Eigen::Upper>().solve(q1_.transpose() * y);
    return (perm_ * z) / static_cast<double>(n());
  }

  /// Dense n x n Delta.
  [[nodiscard]] Eigen::MatrixXd dense() const {
    Eigen::MatrixXd d = q1_ * q1_.transpose();
    return 0.5 * (d + d.transpose());
  }

 private:
  friend class SketchedProjection;
  Operator(std::shared_ptr<const SketchedProjection::Data> data, double lambda)
      : data_(std::move(data)), lambda_(lambda) {
    detail::require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive and finite");
    const Eigen::Index nn = data_->b.rows();
    const Eigen::Index ss = data_->b.cols();
    Eigen::MatrixXd a(nn + ss, ss);
    a.topRows(nn) = data_->b;
    a.bottomRows(ss) = std::sqrt(lambda) * data_->c_root;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::Index r = qr.rank();
    if (r == 0) {
      std::ostringstream msg;
      msg << "sketched system S K^2 S^T + lambda S K S^T is singular (s=" << ss << ", lambda=" << lambda
          << ", max |B|=" << data_->b.cwiseAbs().maxCoeff() << ")";
      throw ComputationError(msg.str());
    }
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nn + ss, r);
    q1_ = q.topRows(nn);
    r_ = qr.matrixR().topLeftCorner(r, ss).template triangularView<Eigen::Upper>();
    perm_ = qr.colsPermutation();
    // Singular values of Q_1 squared are the non-zero eigenvalues of Delta.
    Eigen::MatrixXd gram = q1_.transpose() * q1_;
    gram = 0.5 * (gram + gram.transpose());
    Eigen::VectorXd theta =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues();
    std::sort(theta.data(), theta.data() + theta.size(), std::greater<>());
    // Q_1 carries absolute rounding error, so eigenvalues below this floor are zero.
    const double floor = static_cast<double>(nn + ss) * std::numeric_limits<double>::epsilon();
    theta_ = theta.unaryExpr([floor](double t) { return t > floor ? t : 0.0; });
  }

  std::shared_ptr<const SketchedProjection::Data> data_;
  double lambda_ = 0.0;
  Eigen::MatrixXd q1_;
  Eigen::MatrixXd r_;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic> perm_;
  Eigen::VectorXd theta_;
};

inline SketchedProjection::Operator SketchedProjection::at(double lambda) const {
  return Operator(data_, lambda);
}

//---------------------------------------------------------------------------//
/// Fitted sketched (or full) kernel ridge regression.
struct SketchedKRRFit {
  Eigen::VectorXd beta_hat;  ///< s coefficients
  Eigen::VectorXd omega;     ///< S^T beta_hat
  double lambda = 0.0;
  Eigen::VectorXd fitted;    ///< Delta y
  Eigen::MatrixXd delta;     ///< n x n smoothing matrix
  SketchMatrix sketch;
};

/// Classical KRR: omega = (1/n)(K + lambda I)^{-1} y.
inline SketchedKRRFit fit_full(const KernelMatrix& k, const Eigen::VectorXd& y, double lambda) {
  detail::require(lambda > 0.0, "fit_full: lambda must be positive");
  detail::require(y.size() == k.size(), "fit_full: y length must equal n");
  const Eigen::Index n = k.size();
  Eigen::MatrixXd reg = k.values();
  reg.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw ComputationError("fit_full: K + lambda I is not positive definite");
  }
  SketchedKRRFit fit;
  fit.lambda = lambda;
  fit.omega = llt.solve(y) / static_cast<double>(n);
  fit.beta_hat = fit.omega;
  fit.fitted = static_cast<double>(n) * (k.values() * fit.omega);
  // K (K + lambda I)^{-1}, symmetric because K and (K + lambda I) commute.
  Eigen::MatrixXd delta = llt.solve(k.values()).transpose();
  fit.delta = 0.5 * (delta + delta.transpose());
  fit.sketch = SketchMatrix::identity(n);
  return fit;
}

/// beta_hat = (1/n)(S K^2 S^T + lambda S K S^T)^{-1} S K y.
inline SketchedKRRFit fit_sketched(const KernelMatrix& k, const Eigen::VectorXd& y, double lambda,
                                   const SketchMatrix& sketch) {
  detail::require(lambda > 0.0, "fit_sketched: lambda must be positive");
  detail::require(y.size() == k.size(), "fit_sketched: y length must equal n");
  const auto op = SketchedProjection(k, sketch).at(lambda);
  SketchedKRRFit fit;
  fit.lambda = lambda;
  fit.beta_hat = op.beta(y);
  fit.omega = sketch.values.transpose() * fit.beta_hat;
  fit.fitted = op.apply(y);
  fit.delta = op.dense();
  fit.sketch = sketch;
  return fit;
}

/// Delta = K S^T (S K^2 S^T + lambda S K S^T)^{-1} S K, dense.
inline Eigen::MatrixXd delta_matrix(const KernelMatrix& k, const SketchMatrix& sketch, double lambda) {
  return SketchedProjection(k, sketch).at(lambda).dense();
}

/// Out-of-sample evaluation f(x) = sum_i omega_i K(x, x_i) with the raw kernel.
inline Eigen::VectorXd predict(const SketchedKRRFit& fit, const KernelSpec& spec,
                               const Eigen::MatrixXd& xs_train, const Eigen::MatrixXd& xs_new) {
  detail::require(xs_train.rows() == fit.omega.size(), "training design does not match the fit");
  detail::require(xs_new.cols() == spec.dimension(), "new points do not match kernel dimension");
  return cross_kernel(spec, xs_new, xs_train) * fit.omega;
}

//---------------------------------------------------------------------------//
/// Sketched generalized cross-validation over a lambda grid.
struct GCVReport {
  std::vector<double> lambda_grid;
  std::vector<double> scores;
  double best_lambda = 0.0;
  std::size_t best_index = 0;
};

/// V(lambda) = (1/n) ||(I - Delta) y||^2 / ((1/n) tr(I - Delta))^2
inline double gcv_score(const SketchedProjection::Operator& op, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(op.n());
  const double residual_trace = (n - op.trace_power(1)) / n;
  if (!(residual_trace > 0.0)) {
    throw ComputationError("gcv: tr(I - Delta) vanished");
  }
  const Eigen::VectorXd resid = y - op.apply(y);
  return (resid.squaredNorm() / n) / (residual_trace * residual_trace);
}

inline GCVReport gcv(const SketchedProjection& projection, const Eigen::VectorXd& y,
                     const std::vector<double>& lambda_grid) {
  detail::require(!lambda_grid.empty(), "gcv: lambda grid is empty");
  for (double l : lambda_grid) detail::require(l > 0.0, "gcv: grid values must be positive");
  detail::require(y.size() == projection.n(), "gcv: y length must equal n");
  GCVReport report;
  report.lambda_grid = lambda_grid;
  report.scores.reserve(lambda_grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    const double score = gcv_score(projection.at(lambda_grid[i]), y);
    report.scores.push_back(score);
    const bool better = score < best ||
                        (score == best && lambda_grid[i] < report.lambda_grid[report.best_index]);
    if (better) {
      best = score;
      report.best_index = i;
    }
  }
  report.best_lambda = lambda_grid[report.best_index];
  return report;
}

inline GCVReport gcv(const KernelMatrix& k, const Eigen::VectorXd& y, const SketchMatrix& sketch,
                     const std::vector<double>& lambda_grid) {
  return gcv(SketchedProjection(k, sketch), y, lambda_grid);
}

/// `count` log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  detail::require(lo > 0.0 && hi >= lo, "log_grid: need 0 < lo <= hi");
  detail::require(count >= 1, "log_grid: count must be >= 1");
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = lo;
    return grid;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

/// 30 log-spaced values spanning [lambda_star / 100, 100 lambda_dagger].
inline std::vector<double> default_lambda_grid(const KernelSpec& spec, double n) {
  const auto rates = rate_table(spec, n);
  const double lo = rates.lambda_star / 100.0;
  const double hi = 100.0 * rates.lambda_dagger;
  return log_grid(std::min(lo, hi), std::max(lo, hi), 30);
}

}  // namespace rptest
