#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace killchain {

// Deterministic RNG. mt19937's output sequence is fixed by the standard;
// the distribution helpers are hand-rolled because std::uniform_*_distribution
// is implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : seed_(seed), engine_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  // Uniform in [0, 1).
  float uniform() {
    return static_cast<float>(engine_() * (1.0 / 4294967296.0));
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>((static_cast<std::uint64_t>(engine_()) * span) >> 32);
  }

  // Box-Muller; consumes two draws per pair, caches the second.
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
      u1 = engine_() * (1.0 / 4294967296.0);
    } while (u1 <= 1e-12);
    const double u2 = engine_() * (1.0 / 4294967296.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    spare_ = static_cast<float>(r * std::sin(a));
    has_spare_ = true;
    return mean + stddev * static_cast<float>(r * std::cos(a));
  }

  // In-place Fisher-Yates (std::shuffle is implementation-defined).
  template <class Seq>
  void shuffle(Seq& seq) {
    for (int i = static_cast<int>(seq.size()) - 1; i > 0; --i) {
      const int j = uniform_int(0, i);
      std::swap(seq[i], seq[j]);
    }
  }

  // Derives an independent stream, e.g. one per extraction checkpoint.
  Rng derive(std::uint64_t stream) const {
    return Rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  std::uint32_t raw() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937 engine_;
  float spare_ = 0.0f;
  bool has_spare_ = false;
};

}  // namespace killchain
