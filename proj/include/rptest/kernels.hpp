// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/bernoulli.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/factorials.hpp>

#include "rptest/errors.hpp"

namespace rptest {

enum class KernelFamily { PeriodicSobolev, Gaussian };

/// Polynomial eigen-decay mu_i ~ i^{-2m}.
struct PdkDecay {
  int order = 1;
};

/// Exponential eigen-decay mu_i ~ exp(-gamma i^p).
struct EdkDecay {
  double gamma = std::numbers::pi;
  double p = 2.0;
};

using DecayDescriptor = std::variant<PdkDecay, EdkDecay>;

//---------------------------------------------------------------------------//
/*!
 * A kernel family together with the Mercer decay model that drives the rate
 * calculations.
 *
 * The periodic Sobolev kernel of order m on [0, 1) is
 *
 *   K_m(x, y) = scale * (-1)^{m+1} B_{2m}({x - y}) / (2m)!
 *             = scale * sum_{k>=1} 2 (2 pi k)^{-2m} cos(2 pi k (x - y)),
 *
 * with B_{2m} the Bernoulli polynomial and {.} the fractional part. Its
 * penalized eigenvalues are mu_{2k-1} = mu_{2k} = scale * (2 pi k)^{-2m}; the
 * constant direction is not part of the space. `scale = 1` is the textbook
 * normalization; `unit_periodic_sobolev` picks scale = (2 pi)^{2m} so that
 * mu_{2k} = k^{-2m} and mu_1 = 1.
 *
 * The Gaussian kernel is exp(-|x - x'|^2 / (2 h^2)). Its EDK (gamma, p) pair
 * is descriptive metadata only; matrix computations never read it.
 */
class KernelSpec {
 public:
  static KernelSpec periodic_sobolev(int order, double scale = 1.0) {
    detail::require(order >= 1, "periodic Sobolev kernel requires order m >= 1");
    detail::require(std::isfinite(scale) && scale > 0.0, "kernel scale must be positive");
    KernelSpec spec;
    spec.family_ = KernelFamily::PeriodicSobolev;
    spec.order_ = order;
    spec.dimension_ = 1;
    spec.scale_ = scale;
    spec.build_bernoulli_coefficients();
    return spec;
  }

  static KernelSpec unit_periodic_sobolev(int order) {
    detail::require(order >= 1, "periodic Sobolev kernel requires order m >= 1");
    return periodic_sobolev(order, std::pow(2.0 * std::numbers::pi, 2.0 * order));
  }

  static KernelSpec gaussian(int dimension, double bandwidth = 1.0, EdkDecay model = {}) {
    detail::require(dimension >= 1, "Gaussian kernel requires dimension >= 1");
    detail::require(std::isfinite(bandwidth) && bandwidth > 0.0, "bandwidth must be positive");
    detail::require(model.gamma > 0.0 && model.p >= 1.0, "EDK model requires gamma > 0, p >= 1");
    KernelSpec spec;
    spec.family_ = KernelFamily::Gaussian;
    spec.dimension_ = dimension;
    spec.bandwidth_ = bandwidth;
    spec.edk_ = model;
    return spec;
  }

  [[nodiscard]] KernelFamily family() const noexcept { return family_; }
  [[nodiscard]] int order() const noexcept { return order_; }
  [[nodiscard]] int dimension() const noexcept { return dimension_; }
  [[nodiscard]] double scale() const noexcept { return scale_; }
  [[nodiscard]] double bandwidth() const noexcept { return bandwidth_; }
  [[nodiscard]] bool is_pdk() const noexcept { return family_ == KernelFamily::PeriodicSobolev; }

  [[nodiscard]] DecayDescriptor decay() const {
    if (is_pdk()) return PdkDecay{order_};
    return edk_;
  }

  [[nodiscard]] std::string name() const {
    if (is_pdk()) return "periodic-sobolev(m=" + std::to_string(order_) + ")";
    return "gaussian(d=" + std::to_string(dimension_) + ")";
  }

  /// Kernel value as a function of the wrapped difference t in [0, 1).
  [[nodiscard]] double periodic_profile(double t) const noexcept {
    double acc = 0.0;
    for (double c : poly_) acc = acc * t + c;
    return acc;
  }

 private:
  KernelSpec() = default;

  void build_bernoulli_coefficients() {
    // B_n(t) = sum_k C(n, k) B_k t^{n-k}, stored highest power first and
    // pre-multiplied by scale * (-1)^{m+1} / (2m)!.
    const unsigned n = 2u * static_cast<unsigned>(order_);
    const double sign = (order_ % 2 == 1) ? 1.0 : -1.0;
    const double factor = sign * scale_ / boost::math::factorial<double>(n);
    poly_.assign(n + 1, 0.0);
    for (unsigned k = 0; k <= n; ++k) {
      double bk = 0.0;
      if (k == 1) {
        bk = -0.5;
      } else if (k % 2 == 0) {
        bk = boost::math::bernoulli_b2n<double>(static_cast<int>(k / 2));
      }
      poly_[k] = factor * boost::math::binomial_coefficient<double>(n, k) * bk;
    }
  }

  KernelFamily family_ = KernelFamily::PeriodicSobolev;
  int order_ = 0;
  int dimension_ = 1;
  double scale_ = 1.0;
  double bandwidth_ = 1.0;
  EdkDecay edk_{};
  std::vector<double> poly_;
};

namespace detail {

inline double wrapped_difference(double x, double y) {
  const double t = x - y;
  double frac = t - std::floor(t);
  if (frac >= 1.0) frac = 0.0;  // t slightly below an integer can round up
  return frac;
}

inline double eval_unchecked(const KernelSpec& spec, const double* x, const double* y) {
  if (spec.is_pdk()) {
    return spec.periodic_profile(wrapped_difference(x[0], y[0]));
  }
  double sq = 0.0;
  for (int j = 0; j < spec.dimension(); ++j) {
    const double d = x[j] - y[j];
    sq += d * d;
  }
  const double h = spec.bandwidth();
  return std::exp(-0.5 * sq / (h * h));
}

inline void check_point(const KernelSpec& spec, std::span<const double> x) {
  require(static_cast<int>(x.size()) == spec.dimension(),
          "point dimension " + std::to_string(x.size()) + " does not match kernel dimension " +
              std::to_string(spec.dimension()));
  for (double v : x) require(std::isfinite(v), "kernel argument is not finite");
  if (spec.is_pdk()) {
    require(x[0] >= 0.0 && x[0] < 1.0, "periodic Sobolev points must lie in [0, 1)");
  }
}

}  // namespace detail

/// K(x, x2) for one pair of points.
inline double eval_kernel(const KernelSpec& spec, std::span<const double> x,
                          std::span<const double> x2) {
  detail::check_point(spec, x);
  detail::check_point(spec, x2);
  return detail::eval_unchecked(spec, x.data(), x2.data());
}

//---------------------------------------------------------------------------//
/*!
 * Scaled empirical kernel matrix [K(x_i, x_j) / n].
 */
class KernelMatrix {
 public:
  KernelMatrix() = default;

  /// Wraps an already 1/n-scaled symmetric matrix.
  explicit KernelMatrix(Eigen::MatrixXd scaled) : values_(std::move(scaled)) {
    detail::require(values_.rows() == values_.cols(), "kernel matrix must be square");
    detail::require(values_.rows() >= 1, "kernel matrix must be non-empty");
    detail::require(values_.allFinite(), "kernel matrix has non-finite entries");
    const double peak = values_.cwiseAbs().maxCoeff();
    const double asym = (values_ - values_.transpose()).cwiseAbs().maxCoeff();
    detail::require(asym <= 1e-12 * std::max(peak, std::numeric_limits<double>::min()),
                    "kernel matrix is not symmetric");
  }

  /// Tag for matrices built symmetric by construction.
  struct Trusted {};
  static constexpr Trusted trusted{};
  KernelMatrix(Eigen::MatrixXd scaled, Trusted) noexcept : values_(std::move(scaled)) {}

  [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
  [[nodiscard]] Eigen::Index size() const noexcept { return values_.rows(); }
  [[nodiscard]] double trace() const { return values_.trace(); }

 private:
  Eigen::MatrixXd values_;
};

/// Builds [K(x_i, x_j) / n] from an n x d design (one point per row).
inline KernelMatrix kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& xs) {
  const Eigen::Index n = xs.rows();
  detail::require(n >= 2, "kernel_matrix requires at least two points");
  detail::require(xs.cols() == spec.dimension(), "design dimension does not match kernel");
  detail::require(xs.allFinite(), "design has non-finite coordinates");
  if (spec.is_pdk()) {
    detail::require((xs.array() >= 0.0).all() && (xs.array() < 1.0).all(),
                    "periodic Sobolev points must lie in [0, 1)");
  }
  // Row-major copy so each point's coordinates are contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pts = xs;
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double* pj = pts.row(j).data();
    for (Eigen::Index i = j; i < n; ++i) {
      k(i, j) = detail::eval_unchecked(spec, pts.row(i).data(), pj) * inv_n;
    }
  }
  constexpr Eigen::Index block = 64;
  for (Eigen::Index jb = 0; jb < n; jb += block) {
    for (Eigen::Index ib = jb; ib < n; ib += block) {
      const Eigen::Index jend = std::min(jb + block, n);
      const Eigen::Index iend = std::min(ib + block, n);
      for (Eigen::Index i = ib; i < iend; ++i) {
        for (Eigen::Index j = jb; j < std::min(jend, i); ++j) k(j, i) = k(i, j);
      }
    }
  }
  return KernelMatrix(std::move(k), KernelMatrix::trusted);
}

/// Raw (unscaled) cross-kernel [K(a_i, b_j)].
inline Eigen::MatrixXd cross_kernel(const KernelSpec& spec, const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b) {
  detail::require(a.cols() == spec.dimension() && b.cols() == spec.dimension(),
                  "design dimension does not match kernel");
  for (const auto* m : {&a, &b}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      const Eigen::VectorXd row = m->row(i).transpose();
      detail::check_point(spec, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
  }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pa = a, pb = b;
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = detail::eval_unchecked(spec, pa.row(i).data(), pb.row(j).data());
    }
  }
  return out;
}

/// Theoretical Mercer eigenvalues mu_1 >= mu_2 >= ... of a kernel family.
struct SpectrumDescriptor {
  std::vector<double> mu;
  KernelFamily family = KernelFamily::PeriodicSobolev;

  /// Number of entries strictly greater than lambda.
  [[nodiscard]] std::size_t count_above(double lambda) const {
    std::size_t count = 0;
    while (count < mu.size() && mu[count] > lambda) ++count;
    return count;
  }
};

namespace detail {

/// mu_i for 1-based index i.
inline double theoretical_eigenvalue(const KernelSpec& spec, std::size_t i) {
  if (spec.is_pdk()) {
    const double k = static_cast<double>((i + 1) / 2);
    return spec.scale() * std::pow(2.0 * std::numbers::pi * k, -2.0 * spec.order());
  }
  const auto edk = std::get<EdkDecay>(spec.decay());
  return std::exp(-edk.gamma * std::pow(static_cast<double>(i), edk.p));
}

}  // namespace detail

inline SpectrumDescriptor theoretical_eigenvalues(const KernelSpec& spec, std::size_t count) {
  detail::require(count >= 1, "theoretical_eigenvalues requires count >= 1");
  SpectrumDescriptor out;
  out.family = spec.family();
  out.mu.resize(count);
  for (std::size_t i = 1; i <= count; ++i) out.mu[i - 1] = detail::theoretical_eigenvalue(spec, i);
  return out;
}

/// s_lambda = #{i : mu_i > lambda} for the theoretical spectrum of `spec`.
inline std::size_t theoretical_count_above(const KernelSpec& spec, double lambda) {
  detail::require(lambda > 0.0, "lambda must be positive");
  if (spec.is_pdk()) {
    // mu_{2k} > lambda  <=>  k < (scale / lambda)^{1/(2m)} / (2 pi)
    const double guess =
        std::pow(spec.scale() / lambda, 1.0 / (2.0 * spec.order())) / (2.0 * std::numbers::pi);
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor(guess)));
    while (detail::theoretical_eigenvalue(spec, 2 * (k + 1)) > lambda) ++k;
    while (k > 0 && detail::theoretical_eigenvalue(spec, 2 * k) <= lambda) --k;
    return 2 * k;
  }
  const auto edk = std::get<EdkDecay>(spec.decay());
  if (lambda >= 1.0) return 0;
  const double guess = std::pow(-std::log(lambda) / edk.gamma, 1.0 / edk.p);
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor(guess)));
  while (detail::theoretical_eigenvalue(spec, i + 1) > lambda) ++i;
  while (i > 0 && detail::theoretical_eigenvalue(spec, i) <= lambda) --i;
  return i;
}

/// Tail-sum diagnostic sup_k (sum_{i>k} mu_i) / (k mu_k).
struct AssumptionA1Diagnostic {
  double max_ratio = 0.0;
  std::size_t argmax_k = 0;
  bool pass = false;
};

/// Evaluates the ratio for k = 1..k_max against the supplied (capped) spectrum.
inline AssumptionA1Diagnostic verify_assumption_a1(std::span<const double> mu, std::size_t k_max,
                                                   double ceiling = 10.0) {
  detail::require(k_max >= 2, "verify_assumption_a1 requires k_max >= 2");
  detail::require(mu.size() > k_max, "spectrum must extend beyond k_max");
  // suffix[k] = sum_{i > k} mu_i (1-based), accumulated from the smallest terms.
  std::vector<double> suffix(mu.size() + 1, 0.0);
  for (std::size_t i = mu.size(); i-- > 0;) suffix[i] = suffix[i + 1] + mu[i];
  AssumptionA1Diagnostic out;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double mu_k = mu[k - 1];
    const double ratio = mu_k > 0.0 ? suffix[k] / (static_cast<double>(k) * mu_k)
                                    : std::numeric_limits<double>::infinity();
    if (ratio > out.max_ratio || k == 1) {
      out.max_ratio = ratio;
      out.argmax_k = k;
    }
  }
  out.pass = std::isfinite(out.max_ratio) && out.max_ratio <= ceiling;
  return out;
}

/// Uses a tail cap of 100 * k_max theoretical eigenvalues.
inline AssumptionA1Diagnostic verify_assumption_a1(const KernelSpec& spec, std::size_t k_max,
                                                   double ceiling = 10.0) {
  detail::require(k_max >= 2, "verify_assumption_a1 requires k_max >= 2");
  const auto spectrum = theoretical_eigenvalues(spec, 100 * k_max);
  return verify_assumption_a1(spectrum.mu, k_max, ceiling);
}

}  // namespace rptest
