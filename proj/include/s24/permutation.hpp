// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <s24/matrix.hpp>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace s24 {

/// Bijection on [0, n). permute_rows sends row i to row forward[i].
class Permutation {
public:
  Permutation() = default;
  /// Validates that `forward` is a bijection on [0, forward.size()).
  explicit Permutation(std::vector<std::uint32_t> forward);

  static Permutation identity(std::size_t n);

  std::size_t size() const noexcept { return forward_.size(); }
  const std::vector<std::uint32_t> &forward() const noexcept { return forward_; }
  std::uint32_t operator[](std::size_t i) const { return forward_[i]; }

  Permutation inverse() const;

  /// (this o p): applying p first, then this.
  Permutation compose(const Permutation &p) const;

  friend bool operator==(const Permutation &, const Permutation &) = default;

private:
  std::vector<std::uint32_t> forward_;
};

/// Seeded Fisher-Yates shuffle of [0, n); identical output for identical
/// (seed, n) on every platform.
Permutation make_permutation(std::uint64_t seed, std::size_t n);

template <class T> Matrix<T> permute_rows(const Matrix<T> &a, const Permutation &p) {
  if (a.rows() != p.size())
    throw DimensionError("permute_rows: " + std::to_string(a.rows()) +
                         " rows, permutation of " + std::to_string(p.size()));
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    std::copy(src.begin(), src.end(), out.row(p[i]).begin());
  }
  return out;
}

template <class T>
Matrix<T> inverse_permute_rows(const Matrix<T> &a, const Permutation &p) {
  if (a.rows() != p.size())
    throw DimensionError("inverse_permute_rows: " + std::to_string(a.rows()) +
                         " rows, permutation of " + std::to_string(p.size()));
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(p[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

} // namespace s24
