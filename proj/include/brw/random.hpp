#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace brw {

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`. Pure function of its arguments, so a
/// replica's randomness never depends on which worker ran it or when.
///   derive_seed(m, i) = mix64(mix64(m) ^ (i * 0xD1B54A32D192ED03))
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ (index * 0xD1B54A32D192ED03ULL));
}

/// Stream tags kept apart from replica indices (which count up from 0).
namespace stream_tag {
inline constexpr std::uint64_t kBootstrap = 0xB007'0000'0000'0000ULL;
inline constexpr std::uint64_t kR0Pool = 0x2000'0000'0000'0000ULL;
inline constexpr std::uint64_t kTwoStage = 0x2500'0000'0000'0000ULL;
}  // namespace stream_tag

/// xoshiro256++ (Blackman & Vigna). State is filled from one 64-bit seed by
/// splitmix64, as the reference implementation recommends.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& word : s_) {
      word = mix64(x);
      x += 0x9E3779B97F4A7C15ULL;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

/// A single sequential random stream. Not shared between threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  Xoshiro256pp& engine() noexcept { return engine_; }

  /// Uniform on [0, 1).
  double uniform() { return unit_(engine_); }
  /// Standard normal (ziggurat).
  double normal() { return normal_(engine_); }
  /// Uniform index in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  std::uint64_t poisson(double lambda) {
    return std::poisson_distribution<std::uint64_t>(lambda)(engine_);
  }
  std::uint64_t binomial(std::uint64_t trials, double p) {
    return std::binomial_distribution<std::uint64_t>(trials, p)(engine_);
  }

 private:
  std::uint64_t seed_;
  Xoshiro256pp engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace brw
