#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace maxent_smc {

/// Finalizer from SplitMix64; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 generator. Small state, cheap to construct, which matters
/// because every particle of every annealing step gets its own engine.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// A keyed position in a tree of random streams.
///
/// `child(i)` depends only on this stream's key and `i`, never on how many
/// draws were taken elsewhere, so work split across threads (or reordered)
/// consumes exactly the same random numbers.
class RngStream {
 public:
  constexpr explicit RngStream(std::uint64_t seed) noexcept
      : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  constexpr RngStream child(std::uint64_t index) const noexcept {
    return RngStream(Key{}, mix64(key_ + mix64(index + 0xbb67ae8584caa73bULL)));
  }

  constexpr SplitMix64 engine() const noexcept { return SplitMix64(key_); }
  constexpr std::uint64_t key() const noexcept { return key_; }

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

 private:
  struct Key {};
  constexpr RngStream(Key, std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t key_;
};

/// Uniform double on [0, 1) with 53 random bits.
template <class Engine>
double uniform01(Engine& rng) {
  static_assert(Engine::max() == std::numeric_limits<std::uint64_t>::max() && Engine::min() == 0,
                "uniform01 needs a full-range 64-bit engine");
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double on (0, 1]; safe to take the log of.
template <class Engine>
double uniform_open_low(Engine& rng) {
  return 1.0 - uniform01(rng);
}

/// Standard normal by Box-Muller (one variate per call, two uniforms).
template <class Engine>
double standard_normal(Engine& rng) {
  const double u1 = uniform_open_low(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace maxent_smc
