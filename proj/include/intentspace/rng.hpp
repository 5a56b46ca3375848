#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace intentspace {

// Seeded generator used everywhere randomness is needed. The raw engine is
// mt19937_64; the mappings to uniform doubles and bounded integers are spelled
// out here instead of going through std distributions, whose output is
// implementation-defined. Same seed, same stream, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1): top 53 bits of the engine output.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo draw; the bias is negligible for the
  // index ranges used here (n far below 2^64).
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // Fisher-Yates with the bounded draw above.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    if (values.size() < 2) return;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      std::size_t j = i + static_cast<std::size_t>(below(values.size() - i));
      std::swap(values[i], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace intentspace
