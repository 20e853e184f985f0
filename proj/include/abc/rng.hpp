#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace abc {

// Seeded generator with distribution code written out explicitly, so that
// draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  // Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream index (splitmix64 finalizer). Used to give
// every generated instance an independent, position-addressable seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace abc
