// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "rptest/random.hpp"

namespace rptest::testsupport {

inline Eigen::MatrixXd uniform_design(Eigen::Index n, std::uint64_t seed, Eigen::Index d = 1) {
  RandomStream rng(StreamKey{seed, 0, StreamRole::Design});
  Eigen::MatrixXd xs(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) xs(i, j) = rng.uniform();
  }
  return xs;
}

inline Eigen::MatrixXd normal_design(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  RandomStream rng(StreamKey{seed, 0, StreamRole::Design});
  Eigen::MatrixXd xs(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) xs(i, j) = rng.normal();
  }
  return xs;
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, std::uint64_t seed) {
  RandomStream rng(StreamKey{seed, 0, StreamRole::Noise});
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

/// x_i = i / n, for which the scaled periodic kernel matrix is circulant.
inline Eigen::MatrixXd equispaced_design(Eigen::Index n) {
  Eigen::MatrixXd xs(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) xs(i, 0) = static_cast<double>(i) / static_cast<double>(n);
  return xs;
}

}  // namespace rptest::testsupport
