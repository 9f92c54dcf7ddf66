#pragma once

// Counter-based random streams.
//
// Every stream is a Philox4x64-10 keyed by (seed, stream_id); the counter is
// the block index within the stream. Streams are therefore addressable
// without any shared state: path i of a Monte Carlo run simply constructs
// RandomStream(seed, i), and the output does not depend on which worker
// thread evaluates the path or in which order.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace stablebel {

using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

namespace detail {

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi) noexcept {
  const unsigned __int128 product = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(product >> 64);
  return static_cast<std::uint64_t>(product);
}

}  // namespace detail

/// One Philox4x64-10 block: ten rounds of the Philox bijection, key bumped
/// between rounds.
inline PhiloxCounter philox4x64(PhiloxCounter ctr, PhiloxKey key) noexcept {
  constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint64_t hi0 = 0;
    std::uint64_t hi1 = 0;
    const std::uint64_t lo0 = detail::mulhilo(kMul0, ctr[0], hi0);
    const std::uint64_t lo1 = detail::mulhilo(kMul1, ctr[2], hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// Addressable random stream. Identical (seed, stream_id) pairs reproduce
/// bit-identical sequences; distinct pairs use distinct Philox keys.
///
/// Satisfies UniformRandomBitGenerator, but the distribution helpers below
/// are used throughout instead of <random> distributions so that output is
/// identical across standard library implementations.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id), key_{seed, stream_id} {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    if (buffer_pos_ == 4) {
      ++block_;
      buffer_ = philox4x64({block_, 0, 0, 0}, key_);
      buffer_pos_ = 0;
    }
    return buffer_[buffer_pos_++];
  }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unit exponential.
  double exponential() noexcept { return -std::log(uniform()); }

  /// Standard normal (Box-Muller, second variate cached).
  double normal() noexcept {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  PhiloxKey key_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int buffer_pos_ = 4;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent base seeds for
/// sub-experiments (one per t value, one per alpha, ...).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace stablebel
