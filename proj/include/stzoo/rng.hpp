#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stzoo {

// Deterministic RNG used everywhere. Raw draws come from std::mt19937, whose
// output sequence is pinned by the C++ standard, so seeded results are
// reproducible across builds. Bounded draws use plain modulo; that rule is
// part of the sampler's documented contract.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(mix(seed)) {}

  uint32_t next_u32() { return gen_(); }

  uint32_t bounded(uint32_t n) { return n == 0 ? 0 : next_u32() % n; }

  double uniform() {
    uint64_t hi = next_u32();
    uint64_t lo = next_u32();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Independent child stream keyed by (seed, ids...). splitmix64 over the key
  // so nearby ids give uncorrelated streams.
  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> ids) {
    uint64_t h = seed;
    for (uint64_t id : ids) h = splitmix(h ^ (id + 0x9e3779b97f4a7c15ULL));
    return Rng(h);
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static uint32_t mix(uint64_t seed) {
    uint64_t m = splitmix(seed);
    return static_cast<uint32_t>(m ^ (m >> 32));
  }

  std::mt19937 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stzoo
