// SPDX-License-Identifier: Apache-2.0
/**
 * @file rng.hpp
 * @brief Seeded, platform-independent random source.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The standard distributions are not (their algorithms are
 * implementation-defined), so the conversions to uniform reals, normals and
 * bounded integers are done here.
 */
#pragma once

#include <s24/matrix.hpp>

#include <cstdint>
#include <random>

namespace s24 {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached second value, so the stream
  /// position depends only on the number of calls).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

template <class T>
Matrix<T> random_uniform(std::size_t rows, std::size_t cols, Rng &rng,
                         double lo = -1.0, double hi = 1.0) {
  Matrix<T> m(rows, cols);
  for (auto &v : m.data())
    v = static_cast<T>(rng.uniform(lo, hi));
  return m;
}

template <class T>
Matrix<T> random_normal(std::size_t rows, std::size_t cols, Rng &rng,
                        double stddev = 1.0) {
  Matrix<T> m(rows, cols);
  for (auto &v : m.data())
    v = static_cast<T>(stddev * rng.normal());
  return m;
}

/// Each entry is nonzero with probability `density`; nonzeros are uniform in
/// [0.5, 1.5) with a random sign, so they are never zero.
template <class T>
Matrix<T> random_sparse(std::size_t rows, std::size_t cols, double density,
                        Rng &rng) {
  Matrix<T> m(rows, cols);
  for (auto &v : m.data()) {
    if (rng.bernoulli(density)) {
      const double mag = rng.uniform(0.5, 1.5);
      v = static_cast<T>(rng.bernoulli(0.5) ? mag : -mag);
    }
  }
  return m;
}

} // namespace s24
