// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "rptest/errors.hpp"
#include "rptest/kernels.hpp"
#include "rptest/random.hpp"

namespace rptest {

//---------------------------------------------------------------------------//
/*!
 * K = U diag(mu_hat) U^T with mu_hat sorted non-increasing.
 *
 * Negative eigenvalues produced by round-off are clamped to zero; the largest
 * clamped magnitude is kept in `clamp_magnitude`.
 */
struct EigenSystem {
  Eigen::MatrixXd U;
  Eigen::VectorXd mu_hat;
  double clamp_magnitude = 0.0;

  [[nodiscard]] Eigen::Index n() const noexcept { return mu_hat.size(); }

  /// Number of mu_hat strictly greater than lambda.
  [[nodiscard]] Eigen::Index count_above(double lambda) const noexcept {
    Eigen::Index count = 0;
    while (count < mu_hat.size() && mu_hat[count] > lambda) ++count;
    return count;
  }
};

inline EigenSystem eigendecompose(const KernelMatrix& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k.values());
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "eigendecompose: solver did not converge (n=" << k.size()
        << ", trace=" << k.trace() << ", max |entry|=" << k.values().cwiseAbs().maxCoeff()
        << ")";
    throw ComputationError(msg.str());
  }
  const Eigen::Index n = k.size();
  EigenSystem out;
  out.U.resize(n, n);
  out.mu_hat.resize(n);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < n; ++i) {
    double value = solver.eigenvalues()[n - 1 - i];
    if (value < 0.0) {
      out.clamp_magnitude = std::max(out.clamp_magnitude, -value);
      value = 0.0;
    }
    out.mu_hat[i] = value;
    out.U.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

/// Lambda-indexed effective dimensions.
struct LambdaSplit {
  Eigen::Index s_hat_lambda = 0;  ///< #{i : mu_hat_i > lambda}
  Eigen::Index s_lambda = 0;      ///< #{i : mu_i > lambda}, or the empirical count on fallback
  bool empirical_fallback = false;
  double kappa = 0.0;  ///< s_lambda / (n lambda)
  double lambda = 0.0;
};

inline LambdaSplit lambda_split(const EigenSystem& eig, std::optional<std::size_t> s_lambda_theory,
                                double lambda, Eigen::Index n) {
  detail::require(lambda > 0.0, "lambda_split: lambda must be positive");
  detail::require(n >= 1, "lambda_split: n must be positive");
  LambdaSplit out;
  out.lambda = lambda;
  out.s_hat_lambda = eig.count_above(lambda);
  if (s_lambda_theory) {
    out.s_lambda = static_cast<Eigen::Index>(*s_lambda_theory);
  } else {
    out.s_lambda = out.s_hat_lambda;
    out.empirical_fallback = true;
  }
  out.kappa = static_cast<double>(out.s_lambda) / (static_cast<double>(n) * lambda);
  return out;
}

inline LambdaSplit lambda_split(const EigenSystem& eig, const SpectrumDescriptor& spectrum,
                                double lambda, Eigen::Index n) {
  return lambda_split(eig, spectrum.count_above(lambda), lambda, n);
}

inline LambdaSplit lambda_split(const EigenSystem& eig, const KernelSpec& spec, double lambda,
                                Eigen::Index n) {
  return lambda_split(eig, theoretical_count_above(spec, lambda), lambda, n);
}

/// Empirical-only split (s_lambda falls back to s_hat_lambda).
inline LambdaSplit lambda_split(const EigenSystem& eig, double lambda, Eigen::Index n) {
  return lambda_split(eig, std::nullopt, lambda, n);
}

struct TailSumCheck {
  double tail = 0.0;   ///< sum_{i > s_hat} mu_hat_i
  double bound = 0.0;  ///< C * s_lambda * mu_{s_lambda}
  bool regime_valid = false;
  bool pass = false;
};

/// Compares the empirical tail sum with C s_lambda mu_{s_lambda}.
inline TailSumCheck tail_sum_check(const EigenSystem& eig, const LambdaSplit& split,
                                   const SpectrumDescriptor& spectrum, double c) {
  detail::require(c >= 0.0, "tail_sum_check: C must be non-negative");
  TailSumCheck out;
  for (Eigen::Index i = eig.n() - 1; i >= split.s_hat_lambda; --i) out.tail += eig.mu_hat[i];
  if (split.s_lambda == 0) {
    out.regime_valid = false;
    out.pass = false;
    out.bound = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  detail::require(static_cast<std::size_t>(split.s_lambda) <= spectrum.mu.size(),
                  "tail_sum_check: spectrum shorter than s_lambda");
  out.regime_valid = true;
  out.bound = c * static_cast<double>(split.s_lambda) *
              spectrum.mu[static_cast<std::size_t>(split.s_lambda) - 1];
  out.pass = out.tail <= out.bound;
  return out;
}

struct FixedPoint {
  double r_hat = 0.0;
  int iterations = 0;
};

/// Psi_hat(r) = sqrt((1/n) sum_i kappa min(r / kappa, mu_hat_i)).
inline double lrc_surrogate(const EigenSystem& eig, double kappa, Eigen::Index n, double r) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.n(); ++i) acc += std::min(r, kappa * eig.mu_hat[i]);
  return std::sqrt(acc / static_cast<double>(n));
}

/// Unique positive fixed point of the empirical local Rademacher surrogate.
inline FixedPoint lrc_fixed_point(const EigenSystem& eig, const LambdaSplit& split, Eigen::Index n) {
  detail::require(split.kappa > 0.0, "lrc_fixed_point: kappa must be positive");
  if (eig.n() == 0 || eig.mu_hat.maxCoeff() <= 0.0) {
    throw DegenerateError("lrc_fixed_point: all empirical eigenvalues are zero");
  }
  // Psi_hat(r) / r is non-increasing (sub-root), so the sign of Psi_hat(r) - r
  // changes exactly once on (0, inf).
  double lo = 1e-15;
  double hi = split.kappa * eig.mu_hat[0] + 1.0;
  FixedPoint out;
  while (hi - lo > 1e-10 * lo && out.iterations < 400) {
    const double mid = 0.5 * (lo + hi);
    if (lrc_surrogate(eig, split.kappa, n, mid) > mid) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++out.iterations;
  }
  out.r_hat = 0.5 * (lo + hi);
  return out;
}

/// Order-level choices of (lambda, s) for optimal estimation (dagger) and testing (star).
struct RateRow {
  double lambda_dagger = 0.0;
  double s_dagger = 0.0;
  double r_dagger = 0.0;
  double lambda_star = 0.0;
  double s_star = 0.0;
  double d_star_sq = 0.0;
};

inline RateRow rate_table(const KernelSpec& spec, double n) {
  detail::require(n >= 3, "rate_table requires n >= 3");
  RateRow row;
  if (spec.is_pdk()) {
    const double m = spec.order();
    row.lambda_dagger = std::pow(n, -2.0 * m / (2.0 * m + 1.0));
    row.s_dagger = std::pow(n, 1.0 / (2.0 * m + 1.0));
    row.r_dagger = row.lambda_dagger;
    row.lambda_star = std::pow(n, -4.0 * m / (4.0 * m + 1.0));
    row.s_star = std::pow(n, 2.0 / (4.0 * m + 1.0));
    row.d_star_sq = row.lambda_star;
  } else {
    const double p = std::get<EdkDecay>(spec.decay()).p;
    const double logn = std::log(n);
    row.lambda_dagger = std::pow(logn, 1.0 / p) / n;
    row.s_dagger = std::pow(logn, 1.0 / p);
    row.r_dagger = row.lambda_dagger;
    row.lambda_star = std::pow(logn, 1.0 / (2.0 * p)) / n;
    row.s_star = row.s_dagger;
    row.d_star_sq = row.lambda_star;
  }
  return row;
}

/// Draws an n x d design from the distribution a kernel family is paired with:
/// Unif[0, 1) for the periodic kernel, N(0, I_d) for the Gaussian kernel.
inline Eigen::MatrixXd draw_design(const KernelSpec& spec, Eigen::Index n, RandomStream& rng) {
  Eigen::MatrixXd xs(n, spec.dimension());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
      xs(i, j) = spec.is_pdk() ? rng.uniform() : rng.normal();
    }
  }
  return xs;
}

struct ConcentrationReport {
  std::vector<std::size_t> indices;  ///< indices inside the regime (1-based)
  std::vector<double> pass_rate;     ///< fraction of reps with |mu_hat_i - mu_i| <= mu_i / 2
  std::vector<std::size_t> flagged;  ///< requested indices outside the regime
  int reps = 0;
};

/// Monte Carlo pass rate of |mu_hat_i - mu_i| <= mu_i / 2 over independent designs.
inline ConcentrationReport eigen_concentration_check(const KernelSpec& spec, Eigen::Index n,
                                                     const std::vector<std::size_t>& indices,
                                                     int reps, std::uint64_t seed) {
  detail::require(reps >= 1, "eigen_concentration_check requires reps >= 1");
  detail::require(n >= 2, "eigen_concentration_check requires n >= 2");
  ConcentrationReport out;
  out.reps = reps;
  const double nd = static_cast<double>(n);
  const double limit = spec.is_pdk() ? std::pow(nd, 1.0 / (2.0 * spec.order())) : std::sqrt(nd);
  for (std::size_t i : indices) {
    const bool inside = i >= 1 && static_cast<double>(i) <= limit &&
                        (spec.is_pdk() || static_cast<double>(i) < limit);
    (inside ? out.indices : out.flagged).push_back(i);
  }
  out.pass_rate.assign(out.indices.size(), 0.0);
  if (out.indices.empty()) return out;
  const auto spectrum = theoretical_eigenvalues(spec, *std::max_element(out.indices.begin(), out.indices.end()));
  std::vector<int> hits(out.indices.size(), 0);
  for (int rep = 0; rep < reps; ++rep) {
    RandomStream rng(StreamKey{seed, static_cast<std::uint32_t>(rep), StreamRole::Design});
    const auto eig = eigendecompose(kernel_matrix(spec, draw_design(spec, n, rng)));
    for (std::size_t j = 0; j < out.indices.size(); ++j) {
      const std::size_t i = out.indices[j];
      const double mu = spectrum.mu[i - 1];
      if (std::abs(eig.mu_hat[static_cast<Eigen::Index>(i) - 1] - mu) <= 0.5 * mu) ++hits[j];
    }
  }
  for (std::size_t j = 0; j < hits.size(); ++j) out.pass_rate[j] = static_cast<double>(hits[j]) / reps;
  return out;
}

}  // namespace rptest
