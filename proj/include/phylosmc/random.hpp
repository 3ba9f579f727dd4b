#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace phylosmc {

// Identifies one independent random stream. Every draw made by the samplers
// is keyed by where it happens, not by which thread happens to execute it.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t node = 0;
  std::uint64_t iteration = 0;
  std::uint64_t rank = 0;
  std::uint64_t particle = 0;
  std::uint64_t purpose = 0;
};

namespace purpose {
inline constexpr std::uint64_t kPropagate = 1;
inline constexpr std::uint64_t kResample = 2;
inline constexpr std::uint64_t kAncestor = 3;
inline constexpr std::uint64_t kTrajectory = 4;
inline constexpr std::uint64_t kKappa = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kInteract = 7;
inline constexpr std::uint64_t kSimulate = 8;
}  // namespace purpose

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_key(const StreamKey& key) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t part : {key.seed, key.node, key.iteration, key.rank,
                             key.particle, key.purpose}) {
    h = splitmix64_mix(h ^ splitmix64_mix(part + 0x9e3779b97f4a7c15ULL));
  }
  return h;
}

/// SplitMix64 generator. Seeding it from a hashed StreamKey gives a
/// counter-based stream: draw n of stream k is a pure function of (k, n).
/// Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}
  explicit Rng(const StreamKey& key) : state_(hash_key(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace phylosmc
