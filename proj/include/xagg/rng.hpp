#pragma once

// Deterministic RNG: splitmix64 seeds a xoshiro256** stream; uniform doubles
// use the 53-bit mantissa path and Gaussians come from Box-Muller. Identical
// seeds give identical sequences on every platform. Parallel work splits into
// child streams via seed-XOR-index mixed through splitmix64.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "xagg/core.hpp"

namespace xagg {

namespace detail {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t z = seed;
    for (auto& s : state_) s = detail::splitmix64_next(z);
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    auto& s = state_;
    const std::uint64_t result = detail::rotl64(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = detail::rotl64(s[3], 45);
    return result;
  }

  // [0, 1) with 53 random mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw InvalidInput("Rng::uniform: lo must be < hi");
    return lo + (hi - lo) * next_unit();
  }

  // Uniform integer in [0, n).
  std::size_t next_index(std::size_t n) {
    if (n == 0) throw InvalidInput("Rng::next_index: n == 0");
    std::size_t i = static_cast<std::size_t>(next_unit() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Standard normal, Box-Muller pair with one value cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();  // log1p(-u1) keeps the argument in (0, 1]
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Independent child stream: splitmix64(seed ^ index).
  Rng child(std::uint64_t stream_index) const {
    std::uint64_t z = seed_ ^ stream_index;
    return Rng(detail::splitmix64_next(z));
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  bool has_spare_;
  double spare_;
};

inline std::vector<double> rng_uniform(Rng& rng, double lo, double hi, std::size_t n) {
  if (!(lo < hi)) throw InvalidInput("rng_uniform: lo must be < hi");
  std::vector<double> out(n);
  for (auto& x : out) x = lo + (hi - lo) * rng.next_unit();
  return out;
}

}  // namespace xagg
