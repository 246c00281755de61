#pragma once
// Deterministic random source. std::normal_distribution is implementation
// defined, so Gaussian draws are produced by SplitMix64 + Box-Muller: both
// fully specified, giving bit-identical streams on every platform. Substreams
// are derived from (seed, salt) so independent units of work (one per object
// seed) draw the same numbers whether they run serially or on a worker pool.

#include <cmath>
#include <cstdint>

namespace hqnoise {

// SplitMix64 (Steele, Lea, Flood 2014). One 64-bit state word, passes BigCrush.
struct SplitMix64 {
  uint64_t state;

  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), sm_(seed) {}

  uint64_t seed() const { return seed_; }

  // Independent substream addressed by (parent seed, salt). Deriving from the
  // construction seed (not the evolving state) keeps substreams independent of
  // how much the parent has already drawn.
  Rng child(uint64_t salt) const {
    SplitMix64 h(seed_ ^ (salt * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull));
    return Rng(h.next());
  }

  uint64_t next_u64() { return sm_.next(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(sm_.next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; u1 lies in (0, 1] so log() stays finite.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = static_cast<double>((sm_.next() >> 11) + 1) * 0x1.0p-53;
    double u2 = static_cast<double>(sm_.next() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t seed_;
  SplitMix64 sm_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hqnoise
