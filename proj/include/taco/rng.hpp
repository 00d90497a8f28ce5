#pragma once
// Seeded randomness. The generator is std::mt19937_64 (bit-exact across
// implementations by the standard); the distributions are hand-rolled because
// std:: distribution output is not portable. Every run derives all of its
// randomness from one 64-bit seed so results are reproducible.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace taco {

// Recorded in config echoes so a run names the exact stream it used.
inline constexpr const char* kPrngName = "mt19937_64/canonical-v1";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), base_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Marsaglia's polar method; the spare value is
  // discarded so the stream position is data-independent per call pair.
  double normal() {
    while (true) {
      const double a = 2.0 * uniform01() - 1.0;
      const double b = 2.0 * uniform01() - 1.0;
      const double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  bool coin() { return (gen_() & 1u) != 0; }

  // Independent child stream derived from the construction seed and a stream
  // index (splitmix64 mix). Independent of draw history, so parallel per-item
  // streams match the serial ones.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t z = base_ + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t base_ = 0;
};

}  // namespace taco
