#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pedsyn {

// splitmix64 finalizer. Used as the project-wide 64-bit mixing function:
// stable across platforms, so any consumer of recorded seeds can reproduce
// the exact streams.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

// Per-item seed in a stream: root seed + monotone counter.
inline uint64_t derive_seed(uint64_t root, uint64_t counter) {
  return mix64(root ^ (counter + 1) * 0x9E3779B97F4A7C15ull);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Deterministic RNG with portable output (no stdlib distributions involved).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Modulo bias is negligible for the small n used here.
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  float next_float() { return static_cast<float>(next_double()); }

  // Box-Muller; avoids stdlib normal_distribution for portability.
  float next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = static_cast<float>(r * std::sin(a));
    have_spare_ = true;
    return static_cast<float>(r * std::cos(a));
  }

  float next_uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  float spare_ = 0.f;
};

}  // namespace pedsyn
