#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace bforest {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// splitmix64 finalizer. Bijective on 64-bit words; mix64(0) == 0.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// index-th element of the splitmix64 stream started at seed. Used for all
/// seed derivation (tree seeds, fold seeds, ...) so that results never depend
/// on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(seed + index * kGoldenGamma);
}

/// Deterministic splitmix64 generator. Produces the same sequence on every
/// platform and toolchain, unlike the distributions in <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// Uniform on the open interval (0,1): a 53-bit draw offset by half a step.
  double next_unit() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  /// Uniform integer in [0, n). Lemire multiply-shift; n must be positive.
  std::uint64_t next_below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Exp(1) draw via inverse CDF; next_unit() > 0 keeps the result finite.
  double next_exponential() noexcept { return -std::log(next_unit()); }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double next_normal() noexcept {
    const double u = next_unit();
    const double v = next_unit();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates permutation of {0..n-1}.
inline std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t j = rng.next_below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace bforest
