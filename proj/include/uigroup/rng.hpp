#pragma once

#include <cstdint>
#include <random>

namespace uigroup {

// All randomness in the project flows through this wrapper. std::mt19937_64
// output is pinned by the standard, and we do our own value mapping instead
// of std::*_distribution (whose algorithms are implementation-defined), so a
// seed reproduces the exact same stream on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range, rejection-sampled so it is exactly uniform.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>(next_u64());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent child generator. Used to give every prototype (or
  // training-loop concern) its own stream so evaluation order cannot change
  // the result.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(seed_hash(), stream));
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words.
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_hash() const {
    // Engine state is not observable; forks are derived from a copy's output.
    std::mt19937_64 copy = eng_;
    return copy();
  }

  std::mt19937_64 eng_;
};

}  // namespace uigroup
