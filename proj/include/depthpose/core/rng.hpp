#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace depthpose {

// Deterministic RNG with hand-rolled distributions. std:: distributions are
// implementation-defined, which would break the bit-reproducibility contracts
// (synthetic datasets, training histories, reports), so only the mt19937_64
// stream itself comes from the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  // Box-Muller, one value per call (the spare is kept)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(gen_() % i);
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Independent child stream derived from the construction seed; distinct
  // labels give distinct streams regardless of how much of this one was used.
  Rng fork(uint64_t label) const {
    return Rng(seed_ ^ (0x9E3779B97F4A7C15ull * (label + 1)));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace depthpose
