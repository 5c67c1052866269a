#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace forage {

/// SplitMix64 finalizer. Stable across versions; used for all seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` under `master`: mix64(mix64(master) ^ mix64(index + 1)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept
{
  return mix64(mix64(master) ^ mix64(index + 1));
}

/// Seeded generator with platform-independent draws.
///
/// std::uniform_*_distribution differ between standard library vendors, so
/// bounded integers and unit reals are produced here from the raw engine
/// output, which std::mt19937_64 fixes bit-for-bit.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n)
  {
    // Lemire's multiply-shift with rejection; unbiased.
    std::uint64_t x = engine_();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = engine_();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal()
  {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace forage
