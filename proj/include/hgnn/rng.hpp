#pragma once

#include <cstdint>
#include <random>

namespace hgnn {

// Deterministic RNG. mt19937_64 has a standard-pinned sequence and the
// uniform mapping below avoids std::uniform_real_distribution, whose output
// is implementation-defined; identical seeds give bitwise-identical streams
// on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace hgnn
