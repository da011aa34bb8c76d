#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace adaseq {

// Seeded generator with hand-rolled distributions so that streams are
// reproducible across standard libraries (std distributions are not pinned
// by the standard; mt19937_64 is).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; one value per call, spare cached
  double normal(double mean = 0.0, double sd = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sd * spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + sd * r * std::cos(a);
  }

  // geometric on {1, 2, ...} with the given mean (>= 1), via inversion
  int geometric(double mean) {
    if (mean <= 1.0) return 1;
    double q = 1.0 / mean;  // success probability
    double u = uniform01();
    while (u >= 1.0) u = uniform01();
    int k = 1 + static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-q)));
    return k < 1 ? 1 : k;
  }

  // uniform index in [0, n)
  size_t index(size_t n) {
    // rejection-free modulo bias is negligible for our n << 2^64, but be exact anyway
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return static_cast<size_t>(v % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates, fixed algorithm for reproducibility
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace adaseq
