// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace qmem {

/// 64-bit Mersenne Twister with a fixed uniform mapping, so a substream
/// yields the same doubles on every standard library.
class RngStream {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Substream for a (seed, stream, chunk) triple. Used to partition trials
  /// across workers without sharing state.
  static RngStream substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t chunk);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // UniformRandomBitGenerator, for <random> distributions.
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  explicit RngStream(std::seed_seq& seq) : engine_(seq) {}
  std::mt19937_64 engine_;
};

}  // namespace qmem
