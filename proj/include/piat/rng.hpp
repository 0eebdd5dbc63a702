#pragma once

// Deterministic random number generation.
//
// std::mt19937_64 produces the same raw stream everywhere, but the standard
// <random> distributions are implementation-defined, so shuffles and uniform
// draws routed through them are not reproducible across toolchains.  The
// splitmix64-based engine below owns the full draw path, which makes every
// seeded pipeline byte-identical regardless of the standard library in use.

#include <cstdint>
#include <string_view>
#include <vector>

namespace piat {

// One splitmix64 step.  Advances `state` and returns the mixed output.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform integer in [0, n).  Uses the fixed-point multiply reduction; the
  // bias is O(n / 2^64), far below anything observable at desk scale, and the
  // draw sequence is platform-independent.
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
  }

  // Fisher-Yates shuffle driven by this engine.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream id from a base seed, a purpose tag, and any
// number of integer coordinates (epoch, query index, ...).  Feeding the
// result to Rng gives per-purpose streams that do not interfere, so adding
// draws to one stage of a pipeline never perturbs another.
inline std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ v;
  return splitmix64_next(s);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = seed ^ 0x517cc1b727220a95ULL;
  for (char c : tag) {
    h = mix64(h, static_cast<unsigned char>(c));
  }
  return h;
}

template <typename... Ints>
std::uint64_t derive_stream(std::uint64_t seed, std::string_view tag,
                            Ints... coords) {
  std::uint64_t h = derive_stream(seed, tag);
  ((h = mix64(h, static_cast<std::uint64_t>(coords))), ...);
  return h;
}

}  // namespace piat
