#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace uapt {

// Deterministic, platform-independent RNG (splitmix64 core). std::mt19937
// distributions are implementation-defined, so all randomness in the project
// goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    // modulo bias is irrelevant at the ranges used here (n << 2^64)
    return n == 0 ? 0 : next_u64() % n;
  }

  // standard normal via Box-Muller, one value per call (spare cached)
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 1.0 - next_double();  // (0, 1]
    double v = next_double();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586477 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double next_normal(double mean, double stddev) {
    return mean + stddev * next_normal();
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // independent child stream; `stream` tags the purpose (init, shuffle, ...)
  Rng fork(uint64_t stream) {
    Rng child(state_ ^ (0xb5297a4d3f2c9e4cULL + stream * 0x2545f4914f6cdd1dULL));
    child.next_u64();
    return child;
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uapt
