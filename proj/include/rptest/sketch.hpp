// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rptest/errors.hpp"
#include "rptest/random.hpp"
#include "rptest/spectral.hpp"

namespace rptest {

enum class SketchKind {
  GaussianIid,
  RademacherIid,
  DataDependentTopEigen,
  Explicit,  ///< caller-supplied values (identity, injected test matrices)
};

inline std::string_view to_string(SketchKind kind) {
  switch (kind) {
    case SketchKind::GaussianIid: return "gaussian";
    case SketchKind::RademacherIid: return "rademacher";
    case SketchKind::DataDependentTopEigen: return "data-dependent";
    case SketchKind::Explicit: return "explicit";
  }
  return "unknown";
}

inline SketchKind sketch_kind_from_string(std::string_view name) {
  if (name == "gaussian") return SketchKind::GaussianIid;
  if (name == "rademacher" || name == "bernoulli") return SketchKind::RademacherIid;
  if (name == "data-dependent") return SketchKind::DataDependentTopEigen;
  throw ArgumentError("unknown sketch kind '" + std::string(name) + "'");
}

/// An s x n projection matrix with its provenance.
struct SketchMatrix {
  Eigen::MatrixXd values;
  SketchKind kind = SketchKind::Explicit;
  std::optional<std::uint64_t> seed;

  [[nodiscard]] Eigen::Index rows() const noexcept { return values.rows(); }
  [[nodiscard]] Eigen::Index cols() const noexcept { return values.cols(); }

  static SketchMatrix identity(Eigen::Index n) {
    return SketchMatrix{Eigen::MatrixXd::Identity(n, n), SketchKind::Explicit, std::nullopt};
  }
  static SketchMatrix from_values(Eigen::MatrixXd values) {
    detail::require(values.rows() >= 1 && values.cols() >= 1, "sketch must be non-empty");
    detail::require(values.allFinite(), "sketch has non-finite entries");
    return SketchMatrix{std::move(values), SketchKind::Explicit, std::nullopt};
  }
};

/// i.i.d. sub-Gaussian sketch with entries of variance 1/s, filled row by row
/// from the given stream.
inline SketchMatrix draw_sketch(SketchKind kind, Eigen::Index s, Eigen::Index n, StreamKey key) {
  detail::require(kind == SketchKind::GaussianIid || kind == SketchKind::RademacherIid,
                  "draw_sketch only draws Gaussian or Rademacher sketches; use "
                  "data_dependent_sketch for the eigenvector sketch");
  detail::require(s >= 1, "sketch dimension s must be >= 1");
  detail::require(s <= n, "sketch dimension s=" + std::to_string(s) + " exceeds n=" + std::to_string(n));
  RandomStream rng(key);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s));
  SketchMatrix out{Eigen::MatrixXd(s, n), kind, key.seed};
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double z = kind == SketchKind::GaussianIid ? rng.normal() : rng.rademacher();
      out.values(i, j) = scale * z;
    }
  }
  return out;
}

inline SketchMatrix draw_sketch(SketchKind kind, Eigen::Index s, Eigen::Index n, std::uint64_t seed) {
  return draw_sketch(kind, s, n, StreamKey{seed, 0, StreamRole::Sketch});
}

/// S = U_s^T: the leading s eigenvectors of K as rows.
inline SketchMatrix data_dependent_sketch(const EigenSystem& eig, Eigen::Index s) {
  detail::require(s >= 1, "sketch dimension s must be >= 1");
  detail::require(s <= eig.n(), "sketch dimension exceeds the eigen-system size");
  return SketchMatrix{eig.U.leftCols(s).transpose(), SketchKind::DataDependentTopEigen, std::nullopt};
}

//---------------------------------------------------------------------------//
/*!
 * K-satisfiability certificate:
 *   head_deviation = || (S U_1)^T S U_1 - I ||_op   (U_1: first s_hat_lambda eigenvectors)
 *   tail_energy    = || S U_2 D_2^{1/2} ||_op
 * and pass iff head_deviation <= 1/2 and tail_energy <= c sqrt(lambda).
 */
struct SatisfiabilityCertificate {
  double head_deviation = 0.0;
  double tail_energy = 0.0;
  double lambda = 0.0;
  double c_used = 3.0;
  Eigen::Index s_hat_lambda = 0;
  bool pass = false;
};

inline SatisfiabilityCertificate check_k_satisfiability(const SketchMatrix& sketch,
                                                        const EigenSystem& eig, double lambda,
                                                        double c = 3.0) {
  detail::require(lambda > 0.0, "check_k_satisfiability: lambda must be positive");
  detail::require(c > 0.0, "check_k_satisfiability: c must be positive");
  detail::require(sketch.cols() == eig.n(), "sketch column count must equal n");
  SatisfiabilityCertificate cert;
  cert.lambda = lambda;
  cert.c_used = c;
  const Eigen::Index head = eig.count_above(lambda);
  const Eigen::Index n = eig.n();
  cert.s_hat_lambda = head;
  if (head > 0) {
    const Eigen::MatrixXd su1 = sketch.values * eig.U.leftCols(head);
    const Eigen::MatrixXd gram = su1.transpose() * su1 - Eigen::MatrixXd::Identity(head, head);
    // Symmetric: the operator norm is the largest |eigenvalue|.
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues();
    cert.head_deviation = ev.cwiseAbs().maxCoeff();
  }
  if (head < n) {
    const Eigen::VectorXd root = eig.mu_hat.tail(n - head).cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd tail = (sketch.values * eig.U.rightCols(n - head)) * root.asDiagonal();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(tail);
    cert.tail_energy = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
  }
  cert.pass = cert.head_deviation <= 0.5 && cert.tail_energy <= c * std::sqrt(lambda);
  return cert;
}

struct AssumptionA2Report {
  double s_over_slambda = 0.0;
  Eigen::Index s_lambda = 0;
  bool s_lambda_from_theory = false;
  SatisfiabilityCertificate cert;
  bool pass = false;
};

/// Checks s >= d s_lambda together with K-satisfiability. When `spec` is given,
/// s_lambda comes from its theoretical spectrum, otherwise from mu_hat.
inline AssumptionA2Report assumption_a2_report(const SketchMatrix& sketch, const EigenSystem& eig,
                                               double lambda, double d, double c = 3.0,
                                               const KernelSpec* spec = nullptr) {
  detail::require(d > 0.0, "assumption_a2_report: d must be positive");
  AssumptionA2Report out;
  out.cert = check_k_satisfiability(sketch, eig, lambda, c);
  if (spec != nullptr) {
    out.s_lambda = static_cast<Eigen::Index>(theoretical_count_above(*spec, lambda));
    out.s_lambda_from_theory = true;
  } else {
    out.s_lambda = eig.count_above(lambda);
  }
  const double s = static_cast<double>(sketch.rows());
  out.s_over_slambda = out.s_lambda > 0 ? s / static_cast<double>(out.s_lambda)
                                        : std::numeric_limits<double>::infinity();
  out.pass = s >= d * static_cast<double>(out.s_lambda) && out.cert.pass;
  return out;
}

struct SatisfiabilityRate {
  int passes = 0;
  int draws = 0;
  double median_head_deviation = 0.0;
  double median_tail_energy = 0.0;
  [[nodiscard]] double rate() const { return draws > 0 ? static_cast<double>(passes) / draws : 0.0; }
};

/// Pass rate of the K-satisfiability certificate over independent sketch
/// draws at a fixed design (the conditional probability in an (a, b)-type
/// statement).
inline SatisfiabilityRate satisfiability_pass_rate(const EigenSystem& eig, double lambda,
                                                   Eigen::Index s, SketchKind kind, double c,
                                                   int draws, std::uint64_t seed) {
  detail::require(draws >= 1, "satisfiability_pass_rate requires draws >= 1");
  SatisfiabilityRate out;
  out.draws = draws;
  std::vector<double> heads, tails;
  for (int r = 0; r < draws; ++r) {
    const auto sketch =
        draw_sketch(kind, s, eig.n(), StreamKey{seed, static_cast<std::uint32_t>(r), StreamRole::Sketch});
    const auto cert = check_k_satisfiability(sketch, eig, lambda, c);
    out.passes += cert.pass ? 1 : 0;
    heads.push_back(cert.head_deviation);
    tails.push_back(cert.tail_energy);
  }
  auto med = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  out.median_head_deviation = med(heads);
  out.median_tail_energy = med(tails);
  return out;
}

}  // namespace rptest
