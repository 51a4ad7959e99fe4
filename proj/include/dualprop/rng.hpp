#pragma once

#include <cstdint>
#include <random>

namespace dualprop {

// Seeded generator with distribution arithmetic done here rather than in
// <random>'s distributions, whose output is implementation-defined. Same
// seed, same numbers on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }
  // Box-Muller; consumes two uniforms.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace dualprop
