#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lgvi {

// Counter-free splitmix64 generator. Unlike the std:: distributions, every
// draw here is bit-reproducible across compilers and platforms, which the
// determinism contracts (identical manifests, identical training curves,
// exact resume) depend on.
class Rng {
 public:
  Rng() = default;
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at the n used here.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over a combined word
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent stream for (seed, step, stream-tag). Used so that
// training randomness is a pure function of the step index, which makes
// resume-from-checkpoint trivially exact.
inline Rng stream_rng(uint64_t seed, uint64_t step, uint64_t tag) {
  return Rng(hash_mix(hash_mix(seed, step), tag));
}

inline Rng named_rng(uint64_t seed, std::string_view name) {
  return Rng(hash_mix(seed, hash_str(name)));
}

}  // namespace lgvi
