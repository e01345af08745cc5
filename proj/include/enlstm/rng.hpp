#pragma once

// Seed derivation. Every random draw in the library comes from a std::mt19937_64
// whose seed is derived from a base seed plus a tuple of integer coordinates
// (purpose, iteration, member, ...). Draws therefore never depend on the order
// in which threads run.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace enlstm {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

inline Engine make_engine(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  return Engine(derive_seed(base, coords));
}

// Independent per-purpose seeds. Stored in checkpoints so a run can be resumed
// or audited.
struct SeedStreams {
  std::uint64_t init = 0;
  std::uint64_t dropout = 0;
  std::uint64_t observation = 0;
  std::uint64_t smoothing = 0;
  std::uint64_t shuffle = 0;

  static SeedStreams from_seed(std::uint64_t seed) {
    return SeedStreams{derive_seed(seed, {1}), derive_seed(seed, {2}), derive_seed(seed, {3}),
                       derive_seed(seed, {4}), derive_seed(seed, {5})};
  }

  friend bool operator==(const SeedStreams&, const SeedStreams&) = default;
};

}  // namespace enlstm
