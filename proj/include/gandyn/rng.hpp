#pragma once

#include <cstdint>

namespace gandyn {

/// SplitMix64 (Steele, Lea & Flood 2014). Counter-based: the k-th output is a fixed
/// bijective mix of `seed + k * 0x9E3779B97F4A7C15`, so streams are identical on every
/// platform. Normals use Box-Muller on two uniforms; the spare is cached.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kMix1 = 0xBF58476D1CE4E5B9ULL;
  static constexpr std::uint64_t kMix2 = 0x94D049BB133111EBULL;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * kMix1;
    z = (z ^ (z >> 27)) * kMix2;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe to take the log of.
  double uniform_open_low() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream; used to give each sweep row or repeat its own generator.
  SplitMix64 fork() { return SplitMix64(next_u64()); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gandyn
