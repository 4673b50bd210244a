#pragma once

// Deterministic stream derivation: every sampling site gets its own engine
// seeded from (root seed, purpose, key_a, key_b). Results therefore do not
// depend on iteration order or on how many draws other sites consumed,
// which is what makes runs bit-reproducible.

#include <cstdint>
#include <random>

namespace nmqj {

// Stream purposes, kept distinct so e.g. the tracked-member draws never
// perturb the ensemble's jump counts.
inline constexpr std::uint64_t kStreamJumps = 1;
inline constexpr std::uint64_t kStreamTracked = 2;
inline constexpr std::uint64_t kStreamNaive = 3;

class RngStreams {
 public:
  explicit RngStreams(std::uint64_t root_seed) : root_(root_seed) {}

  std::uint64_t root() const { return root_; }

  std::mt19937_64 stream(std::uint64_t purpose, std::uint64_t key_a,
                         std::uint64_t key_b) const {
    return std::mt19937_64(absorb(absorb(absorb(root_, purpose), key_a), key_b));
  }

 private:
  // splitmix64 step with the word xored in before the avalanche. The
  // avalanche is a bijection, so distinct key words stay distinct.
  static std::uint64_t absorb(std::uint64_t s, std::uint64_t w) {
    s += 0x9e3779b97f4a7c15ULL;
    s ^= w;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
    return s ^ (s >> 31);
  }

  std::uint64_t root_;
};

}  // namespace nmqj
