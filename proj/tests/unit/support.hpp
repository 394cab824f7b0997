#pragma once

// Seeded generators shared by the property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "tplreg/affine.hpp"
#include "tplreg/image.hpp"

namespace testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  std::uint64_t bits() { return rng_(); }

  std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }

  tplreg::RasterImage image(int w, int h) {
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (double& x : v) x = uniform(0.0, 1.0);
    return tplreg::RasterImage(w, h, std::move(v));
  }

  /// Near-identity affine: linear part within `lin` of I, translation within `shift`.
  tplreg::AffineTransform affine(double lin, double shift) {
    return {1.0 + uniform(-lin, lin), uniform(-lin, lin), uniform(-lin, lin), 1.0 + uniform(-lin, lin),
            uniform(-shift, shift), uniform(-shift, shift)};
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace testing
