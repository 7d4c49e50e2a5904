#pragma once

#include <cstdint>
#include <random>

namespace recdev {

/// Independent engine for replication `index` of a run seeded with `seed`.
/// The state depends only on the pair, so the order in which replications
/// are executed cannot change what any of them draws.
inline std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x72656364u};
  return std::mt19937_64(seq);
}

}  // namespace recdev
