// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace rptest {

//---------------------------------------------------------------------------//
/*!
 * Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
 *
 * Maps a 128-bit counter and a 64-bit key to 128 pseudo-random bits. There is
 * no hidden state, so any block of any stream can be produced independently.
 */
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Purpose of a random stream within one Monte Carlo replication.
enum class StreamRole : std::uint32_t { Design = 1, Noise = 2, Sketch = 3, Aux = 4 };

/// Identifies an independent stream: (seed, replication, role, substream).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t replication = 0;
  StreamRole role = StreamRole::Aux;
  std::uint32_t substream = 0;

  [[nodiscard]] constexpr StreamKey with_substream(std::uint32_t sub) const noexcept {
    StreamKey k = *this;
    k.substream = sub;
    return k;
  }
  [[nodiscard]] constexpr StreamKey with_role(StreamRole r) const noexcept {
    StreamKey k = *this;
    k.role = r;
    return k;
  }
  friend constexpr bool operator==(const StreamKey&, const StreamKey&) = default;
};

//---------------------------------------------------------------------------//
/*!
 * Sequential view of one Philox stream.
 *
 * The key is the 64-bit seed; counter words 2 and 3 carry the replication
 * index and (role, substream); words 0 and 1 count 128-bit blocks. Satisfies
 * UniformRandomBitGenerator so it can also drive <random> distributions.
 */
class RandomStream {
 public:
  using result_type = std::uint32_t;

  explicit RandomStream(StreamKey key) noexcept
      : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
        stream_lo_(key.replication),
        stream_hi_((static_cast<std::uint32_t>(key.role) << 24) | (key.substream & 0x00FFFFFFu)) {}

  explicit RandomStream(std::uint64_t seed) noexcept : RandomStream(StreamKey{seed}) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (lane_ == 4) {
      refill();
    }
    return buffer_[lane_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = (*this)();
    const std::uint64_t lo = (*this)();
    return (hi << 32) | lo;
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal deviate (Box-Muller; the paired value is cached).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Symmetric +-1.
  double rademacher() noexcept { return ((*this)() & 1u) ? 1.0 : -1.0; }

  [[nodiscard]] std::uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  void refill() noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32), stream_lo_,
                                  stream_hi_};
    buffer_ = Philox4x32::apply(ctr, key_);
    ++block_;
    lane_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int lane_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rptest
