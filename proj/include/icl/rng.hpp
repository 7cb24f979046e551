#pragma once

#include <cmath>
#include <cstdint>

namespace icl {

// Counter-based PRNG (SplitMix64 finalizer over a keyed counter).
// Every draw is a pure function of (key, counter), so runs replay exactly
// on any platform. Sub-streams derived with stream() do not share state
// with the parent, which keeps independent parts of a simulation from
// perturbing each other's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0)
      : key_(mix(mix(seed ^ 0x9e3779b97f4a7c15ULL) ^
                 mix(stream_id + 0xbf58476d1ce4e5b9ULL))) {}

  // Derive an independent stream; the child starts at counter zero.
  Rng stream(std::uint64_t substream) const {
    Rng r(0);
    r.key_ = mix(key_ ^ mix(substream + 0x94d049bb133111ebULL));
    r.ctr_ = 0;
    return r;
  }
  Rng stream(std::uint64_t a, std::uint64_t b) const {
    return stream(a).stream(b);
  }

  std::uint64_t next_u64() {
    return mix(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller (second deviate discarded so the
  // generator stays stateless apart from the counter).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n), n > 0; rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

}  // namespace icl
