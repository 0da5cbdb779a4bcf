// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one line per criterion and exits non-zero when any
// criterion fails. Seeds and tolerances are fixed here. Arguments such as
// `C5 C9` restrict the run to those criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rptest/rptest.hpp"

using namespace rptest;

namespace {

constexpr std::uint64_t kSeed = 20240101;

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string printf_string(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

Eigen::VectorXd normal_vector(Eigen::Index n, StreamKey key) {
  RandomStream rng(key);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Eigen::MatrixXd uniform_design(Eigen::Index n, std::uint64_t seed) {
  RandomStream rng(StreamKey{seed, 0, StreamRole::Design});
  Eigen::MatrixXd xs(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) xs(i, 0) = rng.uniform();
  return xs;
}

//---------------------------------------------------------------------------//

Outcome c1_dt_size() {
  MonteCarloConfig cfg;
  cfg.n = 1024;
  cfg.reps = 500;
  cfg.seed = kSeed;
  cfg.workers = workers();
  cfg.s_rule = SRule::gamma_rule(2.0, 2.0 / 9.0);
  cfg.lambda_rule = LambdaRule::GCV;
  const auto r = monte_carlo(cfg);
  const bool ok = r.aborted == 0 && r.rejection_rate >= 0.028 && r.rejection_rate <= 0.078;
  return {ok, printf_string("size=%.4f (band [0.028, 0.078]) se=%.4f s=%ld aborted=%d", r.rejection_rate,
                            r.standard_error, static_cast<long>(r.s), r.aborted)};
}

Outcome c2_at_size() {
  MonteCarloConfig cfg;
  cfg.n = 1024;
  cfg.reps = 500;
  cfg.seed = kSeed;
  cfg.workers = workers();
  cfg.test = TestProcedure::AT;
  const auto r = monte_carlo(cfg);
  const bool ok = r.aborted == 0 && r.rejection_rate >= 0.02 && r.rejection_rate <= 0.09;
  return {ok, printf_string("size=%.4f (band [0.02, 0.09]) se=%.4f mean_tau_final=%.3f aborted=%d",
                            r.rejection_rate, r.standard_error, r.mean_z, r.aborted)};
}

Outcome c3_power_plateau() {
  auto power = [](double gamma) {
    MonteCarloConfig cfg;
    cfg.n = 4096;
    cfg.c = 0.03;
    cfg.reps = 500;
    cfg.seed = kSeed;
    cfg.workers = workers();
    cfg.s_rule = SRule::gamma_rule(2.0, gamma);
    cfg.lambda_rule = LambdaRule::GCV;
    return monte_carlo(cfg);
  };
  const auto p2 = power(2.0 / 9.0);
  const auto p3 = power(3.0 / 9.0);
  const double se = std::hypot(p2.standard_error, p3.standard_error);
  const double gain = p3.rejection_rate - p2.rejection_rate;
  const bool ok = p2.aborted == 0 && p3.aborted == 0 && p2.rejection_rate >= 0.9 && gain <= 0.05 + 2.0 * se;
  return {ok, printf_string("power(2/9)=%.4f (>= 0.9) power(3/9)=%.4f gain=%.4f (<= %.4f)", p2.rejection_rate,
                            p3.rejection_rate, gain, 0.05 + 2.0 * se)};
}

Outcome c4_conditional_normality() {
  const Eigen::Index n = 512;
  const Eigen::Index s = 256;
  const double lambda = 1e-11;
  const auto spec = KernelSpec::periodic_sobolev(2);
  const auto k = kernel_matrix(spec, uniform_design(n, kSeed));
  const auto op = SketchedProjection(k, draw_sketch(SketchKind::GaussianIid, s, n, StreamKey{kSeed, 0, StreamRole::Sketch}))
                      .at(lambda);
  std::vector<double> z;
  z.reserve(2000);
  for (std::uint32_t rep = 0; rep < 2000; ++rep) {
    z.push_back(simple_test(op, normal_vector(n, StreamKey{kSeed, rep, StreamRole::Noise}), 0.05).z);
  }
  const double m = stats::mean(z);
  const double v = stats::variance(z);
  const double ks = stats::ks_distance_to_normal(z);
  const bool ok = std::abs(m) <= 0.08 && v >= 0.85 && v <= 1.15 && ks < 0.05;
  return {ok, printf_string("mean=%.4f (|.| <= 0.08) var=%.4f ([0.85, 1.15]) ks=%.4f (< 0.05) s=%ld lambda=%.0e", m,
                            v, ks, static_cast<long>(s), lambda)};
}

Outcome c5_oracles() {
  const Eigen::Index n = 256;
  const double lambda = 1e-3;
  const auto spec = KernelSpec::periodic_sobolev(2);
  const auto k = kernel_matrix(spec, uniform_design(n, kSeed + 5));
  const Eigen::VectorXd y = normal_vector(n, StreamKey{kSeed + 5, 0, StreamRole::Noise});

  // (a) identity sketch against K (K + lambda I)^{-1} y by LU.
  Eigen::MatrixXd reg = k.values();
  reg.diagonal().array() += lambda;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(reg);
  const Eigen::VectorXd full = k.values() * lu.solve(y);
  const auto sketched = fit_sketched(k, y, lambda, SketchMatrix::identity(n));
  const double err_a = (sketched.fitted - full).norm() / full.norm();

  // (b) data-dependent sketch spectrum against mu_hat / (mu_hat + lambda).
  const auto eig = eigendecompose(k);
  const Eigen::Index s = 40;
  const auto spectrum = SketchedProjection(k, data_dependent_sketch(eig, s)).at(lambda).spectrum();
  double err_b = spectrum.size() == s ? 0.0 : 1.0;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(s, spectrum.size()); ++i) {
    const double want = eig.mu_hat[i] / (eig.mu_hat[i] + lambda);
    err_b = std::max(err_b, std::abs(spectrum[i] - want));
  }

  // (c) GCV at S = I against n ||(I - A) y||^2 / tr(I - A)^2 with A by LU.
  double err_c = 0.0;
  const SketchedProjection identity(k, SketchMatrix::identity(n));
  for (double l : log_grid(1e-6, 1e-1, 6)) {
    Eigen::MatrixXd r = k.values();
    r.diagonal().array() += l;
    const Eigen::MatrixXd a = Eigen::PartialPivLU<Eigen::MatrixXd>(r).solve(k.values());
    const Eigen::VectorXd resid = y - a * y;
    const double tr = static_cast<double>(n) - a.trace();
    const double classical = static_cast<double>(n) * resid.squaredNorm() / (tr * tr);
    err_c = std::max(err_c, std::abs(gcv_score(identity.at(l), y) - classical) / classical);
  }
  const bool ok = err_a <= 1e-8 && err_b <= 1e-8 && err_c <= 1e-10;
  return {ok, printf_string("identity rel=%.2e (<= 1e-8) data-dependent spectrum=%.2e (<= 1e-8) gcv rel=%.2e (<= 1e-10)",
                            err_a, err_b, err_c)};
}

Outcome c6_operator_bound() {
  RandomStream rng(StreamKey{kSeed + 6, 0, StreamRole::Design});
  double lo = 0.0;
  double hi = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const auto n = static_cast<Eigen::Index>(20 + std::floor(rng.uniform() * 100.0));
    const auto s = static_cast<Eigen::Index>(1 + std::floor(rng.uniform() * static_cast<double>(n)));
    const double lambda = std::pow(10.0, -10.0 + 10.0 * rng.uniform());
    const int m = 1 + static_cast<int>(std::floor(rng.uniform() * 3.0));
    const auto spec = inst % 2 == 0 ? KernelSpec::periodic_sobolev(m) : KernelSpec::gaussian(2, 0.3 + rng.uniform());
    Eigen::MatrixXd xs(n, spec.is_pdk() ? 1 : 2);
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      for (Eigen::Index j = 0; j < xs.cols(); ++j) xs(i, j) = spec.is_pdk() ? rng.uniform() : rng.normal();
    }
    const auto kind = inst % 3 == 0 ? SketchKind::RademacherIid : SketchKind::GaussianIid;
    const auto sketch = draw_sketch(kind, s, n, StreamKey{kSeed + 6, static_cast<std::uint32_t>(inst), StreamRole::Sketch});
    const Eigen::MatrixXd delta = SketchedProjection(kernel_matrix(spec, xs), sketch).at(lambda).dense();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(delta, Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  const bool ok = lo >= -1e-9 && hi <= 1.0 + 1e-8;
  return {ok, printf_string("min eigenvalue %.3e (>= -1e-9) max eigenvalue - 1 = %.3e (<= 1e-8) over 200 instances", lo, hi - 1.0)};
}

Outcome c7_tail_sum() {
  const Eigen::Index n = 512;
  const double lambda = std::pow(static_cast<double>(n), -0.8);
  const auto spec = KernelSpec::unit_periodic_sobolev(2);
  int passes = 0;
  for (std::uint32_t draw = 0; draw < 100; ++draw) {
    RandomStream rng(StreamKey{kSeed + 7, draw, StreamRole::Design});
    const auto eig = eigendecompose(kernel_matrix(spec, draw_design(spec, n, rng)));
    if (tail_sum_check(eig, lambda_split(eig, spec, lambda, n), theoretical_eigenvalues(spec, static_cast<std::size_t>(n)), 10.0).pass) ++passes;
  }
  return {passes >= 95, printf_string("pass %d/100 (>= 95)", passes)};
}

Outcome c8_satisfiability() {
  const Eigen::Index n = 512;
  const double lambda = std::pow(static_cast<double>(n), -0.8);
  const auto spec = KernelSpec::unit_periodic_sobolev(2);
  RandomStream rng(StreamKey{kSeed + 8, 0, StreamRole::Design});
  const auto eig = eigendecompose(kernel_matrix(spec, draw_design(spec, n, rng)));
  const auto s_lambda = static_cast<Eigen::Index>(theoretical_count_above(spec, lambda));
  const Eigen::Index s = 4 * s_lambda;
  const auto gauss = satisfiability_pass_rate(eig, lambda, s, SketchKind::GaussianIid, 3.0, 100, kSeed + 8);
  const auto rade = satisfiability_pass_rate(eig, lambda, s, SketchKind::RademacherIid, 3.0, 100, kSeed + 8);
  const auto head = lambda_split(eig, spec, lambda, n).s_hat_lambda;
  const auto exact = check_k_satisfiability(data_dependent_sketch(eig, head), eig, lambda, 3.0);
  const auto wide = check_k_satisfiability(data_dependent_sketch(eig, s), eig, lambda, 3.0);
  const bool ok = gauss.passes >= 90 && rade.passes >= 90 && exact.pass && exact.tail_energy <= 1e-10 && wide.pass;
  return {ok, printf_string("s=4*%ld gaussian %d/100 rademacher %d/100 (>= 90; median head deviation %.3f / %.3f) "
                            "data-dependent s=%ld tail=%.1e pass=%d, s=%ld pass=%d",
                            static_cast<long>(s_lambda), gauss.passes, rade.passes, gauss.median_head_deviation,
                            rade.median_head_deviation, static_cast<long>(head), exact.tail_energy,
                            static_cast<int>(exact.pass), static_cast<long>(s), static_cast<int>(wide.pass))};
}

Outcome c9_bn() {
  double worst = 0.0;
  for (int m = 2; m <= 200; ++m) {
    const double b = solve_bn(m);
    const double resid = std::abs(2.0 * std::numbers::pi * b * b * std::exp(b * b) - static_cast<double>(m) * m);
    worst = std::max(worst, resid / (1e-10 * m * m));
  }
  const double rel = std::abs(solve_bn(50) - bn_expansion(50)) / solve_bn(50);
  const bool ok = worst <= 1.0 && rel <= 0.03;
  return {ok, printf_string("max residual / (1e-10 m_n^2) = %.2e (<= 1) expansion gap at 50 = %.4f (<= 0.03)", worst,
                            rel)};
}

Outcome c10_sharpness() {
  const Eigen::Index n = 1024;
  const Eigen::Index s = 3;
  const Eigen::Index g = 1;
  const double alpha = 0.05;
  const auto spec = KernelSpec::unit_periodic_sobolev(2);
  const auto k = kernel_matrix(spec, uniform_design(n, kSeed + 10));
  const auto eig = eigendecompose(k);
  const auto truth = adversarial_truth_testing(eig, s, g, 1.0);
  const double lambda = std::pow(static_cast<double>(n), -8.0 / 9.0);
  const double s_star = rate_table(spec, static_cast<double>(n)).s_star;
  const Eigen::Index s_big = std::max(static_cast<Eigen::Index>(std::ceil(s_star)), (g + 1) * s);
  auto power = [&](Eigen::Index size) {
    const auto op = SketchedProjection(k, data_dependent_sketch(eig, size)).at(lambda);
    int rejects = 0;
    for (std::uint32_t rep = 0; rep < 300; ++rep) {
      const Eigen::VectorXd y = truth.f_vec + normal_vector(n, StreamKey{kSeed + 10, rep, StreamRole::Noise});
      if (simple_test(op, y, alpha).reject) ++rejects;
    }
    return rejects / 300.0;
  };
  const double low = power(s);
  const double high = power(s_big);
  const bool ok = low <= alpha + 0.05 && high >= 0.5;
  return {ok, printf_string("power at s=%ld: %.4f (<= %.2f); at s=%ld (s*=%.2f): %.4f (>= 0.5); ||f||_H^2=%.3f",
                            static_cast<long>(s), low, alpha + 0.05, static_cast<long>(s_big), s_star, high,
                            truth.rkhs_norm_sq)};
}

Outcome c11_moment_orders() {
  const auto drift = moment_order_drift(KernelSpec::unit_periodic_sobolev(2), 512, 8.0 / 9.0, 4.0, 100, kSeed + 11);
  return {drift.pass, printf_string("mean drift %.3f variance drift %.3f (<= 2); s_lambda %ld -> %ld",
                                    drift.mean_drift, drift.variance_drift,
                                    static_cast<long>(drift.at_n.s_lambda), static_cast<long>(drift.at_2n.s_lambda))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"C1 DT null size, n=1024, GCV, s=2n^(2/9)", c1_dt_size},
      {"C2 AT null size, n=1024", c2_at_size},
      {"C3 DT power growth and plateau, n=4096, c=0.03", c3_power_plateau},
      {"C4 conditional null normality, n=512", c4_conditional_normality},
      {"C5 oracle equivalences", c5_oracles},
      {"C6 smoother eigenvalues in [0, 1]", c6_operator_bound},
      {"C7 tail-sum diagnostic, n=512, C=10", c7_tail_sum},
      {"C8 K-satisfiability at s=4 s_lambda, c=3", c8_satisfiability},
      {"C9 B_n solver", c9_bn},
      {"C10 sharpness with S = U_s^T, n=1024", c10_sharpness},
      {"C11 moment-order drift, n=512 -> 1024", c11_moment_orders},
  };
  int failures = 0;
  std::vector<std::string> only(argv + 1, argv + argc);
  for (const auto& [name, run] : criteria) {
    const std::string label(name);
    const bool selected = only.empty() || std::any_of(only.begin(), only.end(), [&](const std::string& o) {
                            return label.rfind(o + " ", 0) == 0;
                          });
    if (!selected) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  const std::size_t ran = only.empty() ? criteria.size() : only.size();
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failures, ran);
  return failures == 0 ? 0 : 1;
}
