// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rptest/kernels.hpp"
#include "rptest/krr.hpp"
#include "rptest/sketch.hpp"
#include "rptest/spectral.hpp"
#include "support.hpp"

namespace {

using rptest::KernelSpec;
using rptest::SketchKind;
using rptest::SketchMatrix;
namespace ts = rptest::testsupport;

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

rptest::KernelMatrix pdk_matrix(Eigen::Index n, std::uint64_t seed, int m = 2) {
  return rptest::kernel_matrix(KernelSpec::unit_periodic_sobolev(m), ts::uniform_design(n, seed));
}

// Classical Wahba GCV with A = K (K + lambda I)^{-1}, built from an LU solve.
double classical_gcv(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index n = k.rows();
  Eigen::MatrixXd reg = k;
  reg.diagonal().array() += lambda;
  const Eigen::MatrixXd a = k * reg.partialPivLu().inverse();
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n) - a;
  const double nd = static_cast<double>(n);
  const double den = r.trace() / nd;
  return ((r * y).squaredNorm() / nd) / (den * den);
}

TEST(FitFull, ZeroResponse) {
  const auto k = pdk_matrix(40, 1);
  const auto fit = rptest::fit_full(k, Eigen::VectorXd::Zero(40), 1e-3);
  EXPECT_EQ(fit.omega.norm(), 0.0);
  EXPECT_EQ(fit.fitted.norm(), 0.0);
}

TEST(FitFull, ScalarKernel) {
  const Eigen::Index n = 30;
  const double c = 2.5, lambda = 0.01;
  const rptest::KernelMatrix k(Eigen::MatrixXd::Identity(n, n) * (c / n));
  const Eigen::VectorXd y = ts::normal_vector(n, 2);
  const auto fit = rptest::fit_full(k, y, lambda);
  const double shrink = (c / n) / ((c / n) + lambda);
  EXPECT_LE(rel_err(fit.fitted, y * shrink), 1e-13);
}

TEST(FitFull, LargeLambdaShrinksToZero) {
  const auto k = pdk_matrix(60, 3);
  const Eigen::VectorXd y = ts::normal_vector(60, 3);
  const auto fit = rptest::fit_full(k, y, 1e12);
  const double mu1 = rptest::eigendecompose(k).mu_hat[0];
  EXPECT_LE(fit.fitted.norm(), y.norm() * mu1 / 1e12);
}

TEST(FitSketched, IdentitySketchMatchesFullFit) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::Index n = 150;
    const auto k = pdk_matrix(n, seed);
    const Eigen::VectorXd y = ts::normal_vector(n, seed + 10);
    for (double lambda : {1e-6, 1e-3, 0.1}) {
      const auto full = rptest::fit_full(k, y, lambda);
      const auto sk = rptest::fit_sketched(k, y, lambda, SketchMatrix::identity(n));
      EXPECT_LE(rel_err(sk.fitted, full.fitted), 1e-8) << lambda;
      EXPECT_LE((sk.delta - full.delta).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(FitSketched, FittedEqualsKernelExpansion) {
  const Eigen::Index n = 120;
  const auto k = pdk_matrix(n, 5);
  const Eigen::VectorXd y = ts::normal_vector(n, 6);
  const auto sketch = rptest::draw_sketch(SketchKind::GaussianIid, 15, n, 7);
  const auto fit = rptest::fit_sketched(k, y, 1e-3, sketch);
  EXPECT_LE(rel_err(static_cast<double>(n) * (k.values() * fit.omega), fit.fitted), 1e-9);
  EXPECT_EQ(fit.beta_hat.size(), 15);
  EXPECT_LE(rel_err(fit.delta * y, fit.fitted), 1e-10);
}

// Direct normal-equation solve, independent of the factored operator.
TEST(FitSketched, MatchesNormalEquations) {
  const Eigen::Index n = 100;
  const auto k = pdk_matrix(n, 8);
  const Eigen::VectorXd y = ts::normal_vector(n, 9);
  const auto sketch = rptest::draw_sketch(SketchKind::RademacherIid, 12, n, 10);
  const double lambda = 1e-2;
  const Eigen::MatrixXd sk = sketch.values * k.values();
  const Eigen::MatrixXd lhs = sk * sk.transpose() + lambda * sk * sketch.values.transpose();
  const Eigen::VectorXd beta = lhs.partialPivLu().solve(sk * y) / static_cast<double>(n);
  const auto fit = rptest::fit_sketched(k, y, lambda, sketch);
  EXPECT_LE(rel_err(fit.beta_hat, beta), 1e-8);
}

TEST(FitSketched, ZeroResponseGivesZeroCoefficients) {
  const auto k = pdk_matrix(50, 11);
  const auto fit = rptest::fit_sketched(k, Eigen::VectorXd::Zero(50), 1e-3,
                                        rptest::draw_sketch(SketchKind::GaussianIid, 5, 50, 1));
  EXPECT_EQ(fit.beta_hat.norm(), 0.0);
}

TEST(FitSketched, DataDependentSpectrumClosedForm) {
  const Eigen::Index n = 200;
  const auto k = pdk_matrix(n, 12);
  const auto eig = rptest::eigendecompose(k);
  for (Eigen::Index s : {1, 5, 20}) {
    for (double lambda : {1e-5, 1e-3}) {
      const auto op = rptest::SketchedProjection(k, rptest::data_dependent_sketch(eig, s)).at(lambda);
      ASSERT_EQ(op.spectrum().size(), s);
      double tr2 = 0.0;
      for (Eigen::Index i = 0; i < s; ++i) {
        const double expect = eig.mu_hat[i] / (eig.mu_hat[i] + lambda);
        EXPECT_NEAR(op.spectrum()[i], expect, 1e-8);
        tr2 += expect * expect;
      }
      EXPECT_NEAR(op.trace_power(2), tr2, 1e-8);
      const Eigen::MatrixXd us = eig.U.leftCols(s);
      const Eigen::VectorXd shrink = (eig.mu_hat.head(s).array() / (eig.mu_hat.head(s).array() + lambda)).matrix();
      EXPECT_LE((op.dense() - us * shrink.asDiagonal() * us.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(FitSketched, RejectsMismatchedShapes) {
  const auto k = pdk_matrix(20, 13);
  EXPECT_THROW(rptest::fit_sketched(k, Eigen::VectorXd::Zero(19), 1e-2, SketchMatrix::identity(20)),
               rptest::ArgumentError);
  EXPECT_THROW(rptest::fit_sketched(k, Eigen::VectorXd::Zero(20), 1e-2, SketchMatrix::identity(21)),
               rptest::ArgumentError);
  EXPECT_THROW(rptest::fit_sketched(k, Eigen::VectorXd::Zero(20), 0.0, SketchMatrix::identity(20)),
               rptest::ArgumentError);
}

TEST(FitSketched, ZeroSketchIsComputationError) {
  const auto k = pdk_matrix(20, 14);
  const auto zero = SketchMatrix::from_values(Eigen::MatrixXd::Zero(3, 20));
  EXPECT_THROW(rptest::fit_sketched(k, Eigen::VectorXd::Ones(20), 1e-2, zero), rptest::ComputationError);
}

TEST(Delta, EigenvaluesInUnitInterval) {
  rptest::RandomStream rng(99);
  double lo = 1.0, hi = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 40 + static_cast<Eigen::Index>(rng.uniform() * 120);
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
    const double lambda = std::exp(-25.0 * rng.uniform());
    const auto seed = static_cast<std::uint64_t>(trial);
    const bool gaussian_kernel = trial % 3 == 0;
    const auto k = gaussian_kernel ? rptest::kernel_matrix(KernelSpec::gaussian(2), ts::normal_design(n, 2, seed))
                                   : pdk_matrix(n, seed, 1 + trial % 3);
    const SketchKind kind = trial % 2 == 0 ? SketchKind::GaussianIid : SketchKind::RademacherIid;
    const Eigen::MatrixXd d = rptest::delta_matrix(k, rptest::draw_sketch(kind, s, n, seed), lambda);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(d).eigenvalues();
    lo = std::min(lo, ev.minCoeff());
    hi = std::max(hi, ev.maxCoeff());
  }
  EXPECT_GE(lo, -1e-9);
  EXPECT_LE(hi, 1.0 + 1e-8);
}

TEST(Delta, TraceChain) {
  const auto k = pdk_matrix(150, 15);
  const auto op = rptest::SketchedProjection(k, rptest::draw_sketch(SketchKind::GaussianIid, 30, 150, 2)).at(1e-4);
  EXPECT_LE(op.trace_power(4), op.trace_power(2));
  EXPECT_LE(op.trace_power(2), op.trace_power(1));
  const Eigen::MatrixXd d = op.dense();
  EXPECT_NEAR(op.trace_power(2), (d * d).trace(), 1e-10);
  EXPECT_NEAR(op.trace_power(4), (d * d * d * d).trace(), 1e-10);
}

TEST(Delta, VanishesForHugeLambda) {
  const auto k = pdk_matrix(80, 16);
  const auto op = rptest::SketchedProjection(k, rptest::draw_sketch(SketchKind::GaussianIid, 10, 80, 3)).at(1e10);
  EXPECT_LE(op.spectrum()[0], 1e-9);
}

TEST(Delta, DegreesOfFreedomNonIncreasingInLambda) {
  const auto k = pdk_matrix(200, 17);
  const rptest::SketchedProjection proj(k, rptest::draw_sketch(SketchKind::GaussianIid, 40, 200, 4));
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : rptest::log_grid(1e-10, 10.0, 40)) {
    const double dof = proj.at(lambda).trace_power(1);
    EXPECT_LE(dof, prev + 1e-10) << lambda;
    prev = dof;
  }
}

TEST(Delta, SketchRefinementForDataDependentSketch) {
  const auto k = pdk_matrix(200, 18);
  const auto eig = rptest::eigendecompose(k);
  for (double lambda : {1e-6, 1e-3}) {
    double prev = 0.0;
    for (Eigen::Index s = 1; s <= 60; ++s) {
      const double tr2 = rptest::SketchedProjection(k, rptest::data_dependent_sketch(eig, s)).at(lambda).trace_power(2);
      EXPECT_GE(tr2, prev - 1e-12);
      prev = tr2;
    }
  }
}

// Noiseless sketched fit of a unit-norm f in the span of the training kernels.
TEST(Delta, BiasBoundedByLambda) {
  const auto spec = KernelSpec::unit_periodic_sobolev(2);
  const Eigen::Index n = 256;
  const double lambda = std::pow(double(n), -0.8);
  const auto sl = static_cast<Eigen::Index>(rptest::theoretical_count_above(spec, lambda));
  int within = 0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    const auto k = rptest::kernel_matrix(spec, ts::uniform_design(n, 1000 + draw));
    Eigen::VectorXd w = ts::normal_vector(n, 2000 + draw);
    w /= std::sqrt(static_cast<double>(n) * w.dot(k.values() * w));
    const Eigen::VectorXd f0 = static_cast<double>(n) * (k.values() * w);
    const auto op = rptest::SketchedProjection(k, rptest::draw_sketch(SketchKind::GaussianIid, 4 * sl, n, draw)).at(lambda);
    const double bias = (op.apply(f0) - f0).squaredNorm() / static_cast<double>(n);
    within += bias <= 20.0 * lambda ? 1 : 0;
  }
  EXPECT_GE(within, 95);
}

TEST(Predict, TrainingPointsReproduceFitted) {
  const auto spec = KernelSpec::unit_periodic_sobolev(2);
  const Eigen::Index n = 90;
  const auto xs = ts::uniform_design(n, 19);
  const auto k = rptest::kernel_matrix(spec, xs);
  const Eigen::VectorXd y = ts::normal_vector(n, 20);
  const auto fit = rptest::fit_sketched(k, y, 1e-3, rptest::draw_sketch(SketchKind::GaussianIid, 12, n, 5));
  EXPECT_LE(rel_err(rptest::predict(fit, spec, xs, xs), fit.fitted), 1e-9);
  auto zero = fit;
  zero.omega.setZero();
  EXPECT_EQ(rptest::predict(zero, spec, xs, ts::uniform_design(7, 21)).norm(), 0.0);
  EXPECT_THROW(rptest::predict(fit, spec, xs, Eigen::MatrixXd::Zero(3, 2)), rptest::ArgumentError);
}

TEST(Gcv, IdentitySketchMatchesClassical) {
  const Eigen::Index n = 120;
  const auto k = pdk_matrix(n, 22);
  Eigen::VectorXd y = ts::normal_vector(n, 23);
  const auto grid = rptest::log_grid(1e-7, 1.0, 15);
  const auto report = rptest::gcv(k, y, SketchMatrix::identity(n), grid);
  const double mu_min = rptest::eigendecompose(k).mu_hat.minCoeff();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double oracle = classical_gcv(k.values(), y, grid[i]);
    // Both sides carry forward error up to eps * cond(K + lambda I).
    const double cond = (1.0 + grid[i]) / (mu_min + grid[i]);
    const double tol = std::max(1e-10, 100.0 * std::numeric_limits<double>::epsilon() * cond);
    EXPECT_NEAR(report.scores[i], oracle, tol * oracle) << grid[i];
    if (grid[i] >= 1e-5) {
      EXPECT_NEAR(report.scores[i], oracle, 1e-10 * oracle) << grid[i];
    }
  }
}

TEST(Gcv, LimitsAndTies) {
  const Eigen::Index n = 60;
  const auto k = pdk_matrix(n, 24);
  const Eigen::VectorXd y = ts::normal_vector(n, 25);
  const auto sketch = rptest::draw_sketch(SketchKind::GaussianIid, 8, n, 6);
  const auto big = rptest::gcv(k, y, sketch, {1e14});
  EXPECT_NEAR(big.scores[0], y.squaredNorm() / n, 1e-9);
  EXPECT_DOUBLE_EQ(big.best_lambda, 1e14);
  EXPECT_EQ(big.best_index, 0u);
  // y = 0 scores zero everywhere, so the smallest lambda wins regardless of grid order.
  const auto tie = rptest::gcv(k, Eigen::VectorXd::Zero(n), sketch, {1.0, 1e-2, 1e-4, 1e-1});
  EXPECT_DOUBLE_EQ(tie.best_lambda, 1e-4);
  EXPECT_EQ(tie.best_index, 2u);
  EXPECT_THROW(rptest::gcv(k, y, sketch, {}), rptest::ArgumentError);
  EXPECT_THROW(rptest::gcv(k, y, sketch, {-1.0}), rptest::ArgumentError);
}

TEST(Gcv, ScoresPositiveAndMinimumAttained) {
  const Eigen::Index n = 100;
  const auto k = pdk_matrix(n, 26);
  const Eigen::VectorXd y = ts::normal_vector(n, 27);
  const auto report = rptest::gcv(k, y, rptest::draw_sketch(SketchKind::GaussianIid, 10, n, 7),
                                  rptest::log_grid(1e-8, 1.0, 20));
  for (double v : report.scores) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
    EXPECT_GE(v, report.scores[report.best_index]);
  }
}

TEST(LambdaGrid, DefaultSpansRateTable) {
  const auto spec = KernelSpec::periodic_sobolev(2);
  const auto grid = rptest::default_lambda_grid(spec, 1024.0);
  const auto rates = rptest::rate_table(spec, 1024.0);
  ASSERT_EQ(grid.size(), 30u);
  EXPECT_DOUBLE_EQ(grid.front(), rates.lambda_star / 100.0);
  EXPECT_DOUBLE_EQ(grid.back(), 100.0 * rates.lambda_dagger);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    EXPECT_NEAR(std::log(grid[i] / grid[i - 1]), std::log(grid[1] / grid[0]), 1e-12);
  }
  EXPECT_THROW(rptest::log_grid(0.0, 1.0, 3), rptest::ArgumentError);
  EXPECT_EQ(rptest::log_grid(2.0, 5.0, 1), std::vector<double>{2.0});
}

}  // namespace
