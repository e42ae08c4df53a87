// SPDX-License-Identifier: Apache-2.0
#include "rng.hpp"

namespace qmem {

RngStream RngStream::substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return RngStream(seq);
}

}  // namespace qmem
