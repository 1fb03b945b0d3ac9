#pragma once

#include <cmath>
#include <cstdint>

namespace pegsim {

// Deterministic counter-seeded PRNG (splitmix64 core). All randomness in the
// project flows through this type so that results are reproducible bit-for-bit
// across platforms and independent of the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Derives an independent stream from (seed, stream). Used to give each
  // worker / purpose its own generator such that stream i is a pure function
  // of the master seed and i, regardless of how many streams exist.
  static Rng derive(uint64_t seed, uint64_t stream) {
    Rng mix(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    mix.next_u64();
    return Rng(mix.next_u64());
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Marsaglia polar method (rejection; deterministic).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Checkpoint support: capture and restore the exact generator state,
  // including the cached second Marsaglia draw.
  struct Snapshot {
    uint64_t state = 0;
    bool have_spare = false;
    double spare = 0.0;
  };
  Snapshot snapshot() const { return {state_, have_spare_, spare_}; }
  void restore(const Snapshot& s) {
    state_ = s.state;
    have_spare_ = s.have_spare;
    spare_ = s.spare;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pegsim
