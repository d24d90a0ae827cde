#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace momental {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/// Counter-based generator: draw n of stream `key` is
///
///     mix64(key + 0x9E3779B97F4A7C15 * (n + 1))
///
/// i.e. SplitMix64 evaluated at an explicit counter, so any draw can be
/// reproduced from (key, n) without replaying the stream. Keys are derived
/// from a seed and a stream tag with derive_key(). Every random quantity in
/// the library (initial points, datasets, minibatch shuffles) comes from
/// here; no OS entropy is used.
class CounterRng {
public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr std::uint64_t derive_key(std::uint64_t seed,
                                            std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
  }

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(derive_key(seed, stream)) {}

  static constexpr std::uint64_t at(std::uint64_t key,
                                    std::uint64_t counter) noexcept {
    return mix64(key + kGolden * (counter + 1));
  }

  constexpr std::uint64_t next_u64() noexcept { return at(key_, counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    __extension__ using u128 = unsigned __int128;
    const auto wide = static_cast<u128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  /// Standard normal via Box-Muller; consumes two draws, uses the cosine
  /// branch only so the draw count per sample is fixed.
  double normal() noexcept {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of [0, n) keyed by (seed, epoch).
inline std::vector<std::size_t> shuffled_indices(std::size_t n,
                                                 std::uint64_t seed,
                                                 std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CounterRng rng(CounterRng::derive_key(seed, 0x5348554646000000ULL ^ epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

} // namespace momental
