#pragma once

#include <cstdint>
#include <random>

namespace carma_renewal {

/// Mixes a base seed with a stream index (e.g. a replication counter) into a
/// well-scrambled 64-bit seed. Counter-based so serial and parallel runs of
/// the same experiment agree.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, std::uint64_t stream = 0) {
  return Rng(mix_seed(base, stream));
}

}  // namespace carma_renewal
