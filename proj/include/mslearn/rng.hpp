#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mslearn/common.hpp"

namespace mslearn {

// Deterministic random source. std::mt19937_64 has a pinned-down output
// sequence, but the std distributions do not, so all scalings are done by
// hand. Streams are therefore bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  // uniform in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= lim);
    return x % n;
  }

  // standard normal, Box-Muller
  double next_gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vec gauss_vec(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = next_gauss();
    return v;
  }

  // uniform on the unit sphere
  Vec unit_vec(int d) {
    Vec v = gauss_vec(d);
    double n = v.norm();
    while (n < 1e-12) {
      v = gauss_vec(d);
      n = v.norm();
    }
    return v / n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mslearn
