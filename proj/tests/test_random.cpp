// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "rptest/random.hpp"
#include "rptest/stats.hpp"

namespace {

using rptest::Philox4x32;
using rptest::RandomStream;
using rptest::StreamKey;
using rptest::StreamRole;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::apply({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                     {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                     {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(RandomStream, SameKeySameSequence) {
  RandomStream a(StreamKey{42, 7, StreamRole::Noise, 3});
  RandomStream b(StreamKey{42, 7, StreamRole::Noise, 3});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(RandomStream, DistinctKeysDiverge) {
  const std::vector<StreamKey> keys = {
      {42, 0, StreamRole::Design, 0}, {42, 0, StreamRole::Noise, 0}, {42, 0, StreamRole::Sketch, 0},
      {42, 1, StreamRole::Design, 0}, {43, 0, StreamRole::Design, 0}, {42, 0, StreamRole::Sketch, 1}};
  std::set<std::vector<std::uint32_t>> prefixes;
  for (const auto& key : keys) {
    RandomStream rng(key);
    std::vector<std::uint32_t> prefix(8);
    for (auto& v : prefix) v = rng();
    prefixes.insert(prefix);
  }
  EXPECT_EQ(prefixes.size(), keys.size());
}

TEST(RandomStream, UniformStaysInOpenInterval) {
  RandomStream rng(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_LT(lo, 1e-4);
  EXPECT_GT(hi, 1.0 - 1e-4);
}

TEST(RandomStream, NormalMoments) {
  RandomStream rng(StreamKey{5, 0, StreamRole::Noise});
  std::vector<double> xs(200000);
  for (auto& x : xs) x = rng.normal();
  // sd(mean) = 1/sqrt(2e5) ~ 2.2e-3, sd(var) ~ sqrt(2/2e5) ~ 3.2e-3
  EXPECT_NEAR(rptest::stats::mean(xs), 0.0, 0.012);
  EXPECT_NEAR(rptest::stats::variance(xs), 1.0, 0.016);
  EXPECT_LT(rptest::stats::ks_distance_to_normal(xs), 0.005);
}

TEST(RandomStream, RademacherIsBalanced) {
  RandomStream rng(9);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double r = rng.rademacher();
    ASSERT_TRUE(r == 1.0 || r == -1.0);
    acc += r;
  }
  EXPECT_LT(std::abs(acc) / n, 0.015);
}

TEST(StreamKey, ModifiersKeepOtherFields) {
  const StreamKey base{3, 4, StreamRole::Design, 5};
  const auto k = base.with_role(StreamRole::Sketch).with_substream(9);
  EXPECT_EQ(k.seed, 3u);
  EXPECT_EQ(k.replication, 4u);
  EXPECT_EQ(k.role, StreamRole::Sketch);
  EXPECT_EQ(k.substream, 9u);
  EXPECT_EQ(base.substream, 5u);
}

}  // namespace
