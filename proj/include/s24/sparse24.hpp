// SPDX-License-Identifier: Apache-2.0
/**
 * @file sparse24.hpp
 * @brief 2:4 structured-sparse storage, sparsification and sparse GEMMs.
 *
 * A group is 4 consecutive entries: along a row for token-wise orientation,
 * down a column for feature-wise orientation. Every group stores exactly two
 * slots (value + in-group position, positions strictly increasing). Groups
 * with fewer than two nonzeros pad with their lowest-index zero positions.
 *
 * Group order is row-major over groups for token-wise storage and
 * column-major for feature-wise storage, so the feature-wise compression of
 * A has the same value/meta arrays as the token-wise compression of A^T.
 *
 * Metadata packs two groups per byte: group 2k in the low nibble, group
 * 2k+1 in the high nibble; inside a nibble, bits 0-1 hold the first position
 * and bits 2-3 the second.
 */
#pragma once

#include <s24/matrix.hpp>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace s24 {

enum class Orientation : std::uint8_t { token_wise = 0, feature_wise = 1 };

const char *to_string(Orientation o);

/// One boolean per dense position.
class Mask {
public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const Mask &, const Mask &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct SparsifyStats {
  std::uint64_t total_entries = 0;
  std::uint64_t nonzeros_before = 0;
  std::uint64_t nonzeros_after = 0;
  std::uint64_t dropped = 0;
  double sparsity_before = 0.0;
  double dropped_fraction_of_nonzeros = 0.0;

  static SparsifyStats from_counts(std::uint64_t total, std::uint64_t before,
                                   std::uint64_t after);
  SparsifyStats &operator+=(const SparsifyStats &o);
};

template <class T> class Sparse24Matrix {
public:
  Sparse24Matrix() = default;

  /// Builds from raw storage; validates shape divisibility, array lengths and
  /// strictly increasing positions.
  Sparse24Matrix(std::size_t rows, std::size_t cols, Orientation orientation,
                 std::vector<T> values, std::vector<std::uint8_t> meta)
      : rows_(rows), cols_(cols), orientation_(orientation),
        values_(std::move(values)), meta_(std::move(meta)) {
    check_shape(rows_, cols_, orientation_);
    if (values_.size() != 2 * group_count())
      throw DimensionError("Sparse24Matrix: expected " +
                           std::to_string(2 * group_count()) + " values, got " +
                           std::to_string(values_.size()));
    if (meta_.size() != meta_bytes(group_count()))
      throw DimensionError("Sparse24Matrix: metadata length mismatch");
    for (std::size_t g = 0; g < group_count(); ++g) {
      auto [p0, p1] = positions(g);
      if (p0 >= p1)
        throw DataError("Sparse24Matrix: positions of group " + std::to_string(g) +
                        " are not strictly increasing");
    }
    for (T v : values_)
      if (!std::isfinite(v))
        throw DataError("Sparse24Matrix: non-finite value");
  }

  static void check_shape(std::size_t rows, std::size_t cols, Orientation o) {
    if (o == Orientation::token_wise && cols % 4 != 0)
      throw ShapeError("token-wise 2:4 needs cols divisible by 4, got " +
                       std::to_string(cols));
    if (o == Orientation::feature_wise && rows % 4 != 0)
      throw ShapeError("feature-wise 2:4 needs rows divisible by 4, got " +
                       std::to_string(rows));
  }

  static std::size_t meta_bytes(std::size_t groups) { return (groups + 1) / 2; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Orientation orientation() const noexcept { return orientation_; }
  std::size_t group_count() const noexcept {
    return orientation_ == Orientation::token_wise ? rows_ * (cols_ / 4)
                                                   : cols_ * (rows_ / 4);
  }
  std::span<const T> values() const noexcept { return values_; }
  std::span<const std::uint8_t> meta() const noexcept { return meta_; }

  std::pair<unsigned, unsigned> positions(std::size_t g) const {
    const unsigned nib = (meta_[g / 2] >> ((g % 2) * 4)) & 0xF;
    return {nib & 0x3, (nib >> 2) & 0x3};
  }

  /// Dense (row, col) of in-group position p of group g.
  std::pair<std::size_t, std::size_t> coordinate(std::size_t g, unsigned p) const {
    if (orientation_ == Orientation::token_wise) {
      const std::size_t per_row = cols_ / 4;
      return {g / per_row, (g % per_row) * 4 + p};
    }
    const std::size_t per_col = rows_ / 4;
    return {(g % per_col) * 4 + p, g / per_col};
  }

  friend bool operator==(const Sparse24Matrix &a, const Sparse24Matrix &b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.orientation_ == b.orientation_ && a.meta_ == b.meta_ &&
           a.values_.size() == b.values_.size() &&
           (a.values_.empty() || std::memcmp(a.values_.data(), b.values_.data(),
                                             a.values_.size() * sizeof(T)) == 0);
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Orientation orientation_ = Orientation::token_wise;
  std::vector<T> values_;
  std::vector<std::uint8_t> meta_;
};

template <class T> struct SparsifyResult {
  Sparse24Matrix<T> sparse;
  Mask mask;
  SparsifyStats stats;
};

namespace detail {

/// In-group positions of the two largest magnitudes; ties go to the lower index.
template <class T> std::pair<unsigned, unsigned> top2(const std::array<T, 4> &v) {
  unsigned first = 0;
  for (unsigned p = 1; p < 4; ++p)
    if (std::fabs(v[p]) > std::fabs(v[first]))
      first = p;
  unsigned second = first == 0 ? 1 : 0;
  for (unsigned p = 0; p < 4; ++p)
    if (p != first && std::fabs(v[p]) > std::fabs(v[second]))
      second = p;
  return first < second ? std::pair{first, second} : std::pair{second, first};
}

inline void pack_positions(std::vector<std::uint8_t> &meta, std::size_t g,
                           unsigned p0, unsigned p1) {
  const auto nib = static_cast<std::uint8_t>((p0 & 0x3) | ((p1 & 0x3) << 2));
  meta[g / 2] |= static_cast<std::uint8_t>(nib << ((g % 2) * 4));
}

template <class T> std::size_t group_count(std::size_t rows, std::size_t cols, Orientation o) {
  return o == Orientation::token_wise ? rows * (cols / 4) : cols * (rows / 4);
}

// Dense coordinates of (group, position) without an instance.
inline std::pair<std::size_t, std::size_t> coord(std::size_t rows, std::size_t cols,
                                                 Orientation o, std::size_t g,
                                                 unsigned p) {
  if (o == Orientation::token_wise) {
    const std::size_t per_row = cols / 4;
    return {g / per_row, (g % per_row) * 4 + p};
  }
  const std::size_t per_col = rows / 4;
  return {(g % per_col) * 4 + p, g / per_col};
}

/// Shared body of the token-wise and feature-wise sparsifiers.
template <class T> SparsifyResult<T> sparsify(const Matrix<T> &a, Orientation o) {
  Sparse24Matrix<T>::check_shape(a.rows(), a.cols(), o);
  const std::size_t groups = group_count<T>(a.rows(), a.cols(), o);
  std::vector<T> values(2 * groups);
  std::vector<std::uint8_t> meta(Sparse24Matrix<T>::meta_bytes(groups), 0);
  Mask mask(a.rows(), a.cols());
  std::uint64_t before = 0, after = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    std::array<T, 4> v;
    for (unsigned p = 0; p < 4; ++p) {
      auto [r, c] = coord(a.rows(), a.cols(), o, g, p);
      v[p] = a(r, c);
      before += v[p] != T(0);
    }
    auto [p0, p1] = top2(v);
    values[2 * g] = v[p0];
    values[2 * g + 1] = v[p1];
    after += (v[p0] != T(0)) + (v[p1] != T(0));
    pack_positions(meta, g, p0, p1);
    for (unsigned p : {p0, p1}) {
      auto [r, c] = coord(a.rows(), a.cols(), o, g, p);
      mask.set(r, c);
    }
  }
  return {Sparse24Matrix<T>(a.rows(), a.cols(), o, std::move(values), std::move(meta)),
          std::move(mask), SparsifyStats::from_counts(a.size(), before, after)};
}

} // namespace detail

/// Keeps the 2 largest-magnitude entries of every 4 consecutive row entries.
template <class T> SparsifyResult<T> sparsify_token_wise(const Matrix<T> &a) {
  return detail::sparsify(a, Orientation::token_wise);
}

/// Same rule on groups of 4 consecutive entries down each column.
template <class T> SparsifyResult<T> sparsify_feature_wise(const Matrix<T> &a) {
  return detail::sparsify(a, Orientation::feature_wise);
}

template <class T> Matrix<T> apply_mask(const Matrix<T> &a, const Mask &mask) {
  if (a.rows() != mask.rows() || a.cols() != mask.cols())
    throw DimensionError("mask shape does not match tensor");
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (mask(r, c))
        out(r, c) = a(r, c);
  return out;
}

/// Zeroes entries outside `fwd_mask`, then sparsifies feature-wise. Entries
/// removed by the mask are not counted as dropped.
template <class T>
SparsifyResult<T> sparsify_feature_wise_masked(const Matrix<T> &a, const Mask &fwd_mask) {
  if (a.rows() != fwd_mask.rows() || a.cols() != fwd_mask.cols())
    throw DimensionError("sparsify_feature_wise_masked: mask shape does not match tensor");
  return sparsify_feature_wise(apply_mask(a, fwd_mask));
}

/// Compresses `a` at exactly the positions set in `mask`, which must hold two
/// set bits per group in the given orientation. Entries outside the mask are
/// discarded; nothing else is selected or dropped.
template <class T>
Sparse24Matrix<T> compress_with_mask(const Matrix<T> &a, const Mask &mask, Orientation o) {
  if (a.rows() != mask.rows() || a.cols() != mask.cols())
    throw DimensionError("compress_with_mask: mask shape does not match tensor");
  Sparse24Matrix<T>::check_shape(a.rows(), a.cols(), o);
  const std::size_t groups = detail::group_count<T>(a.rows(), a.cols(), o);
  std::vector<T> values(2 * groups);
  std::vector<std::uint8_t> meta(Sparse24Matrix<T>::meta_bytes(groups), 0);
  for (std::size_t g = 0; g < groups; ++g) {
    unsigned kept[2];
    unsigned n = 0;
    for (unsigned p = 0; p < 4; ++p) {
      auto [r, c] = detail::coord(a.rows(), a.cols(), o, g, p);
      if (mask(r, c)) {
        if (n == 2)
          throw DataError("compress_with_mask: more than 2 mask bits in group " +
                          std::to_string(g));
        kept[n++] = p;
      }
    }
    if (n != 2)
      throw DataError("compress_with_mask: group " + std::to_string(g) +
                      " has fewer than 2 mask bits");
    for (unsigned s = 0; s < 2; ++s) {
      auto [r, c] = detail::coord(a.rows(), a.cols(), o, g, kept[s]);
      values[2 * g + s] = a(r, c);
    }
    detail::pack_positions(meta, g, kept[0], kept[1]);
  }
  return Sparse24Matrix<T>(a.rows(), a.cols(), o, std::move(values), std::move(meta));
}

template <class T> Matrix<T> decompress(const Sparse24Matrix<T> &s) {
  Matrix<T> out(s.rows(), s.cols());
  auto values = s.values();
  for (std::size_t g = 0; g < s.group_count(); ++g) {
    auto [p0, p1] = s.positions(g);
    auto [r0, c0] = s.coordinate(g, p0);
    auto [r1, c1] = s.coordinate(g, p1);
    out(r0, c0) = values[2 * g];
    out(r1, c1) = values[2 * g + 1];
  }
  return out;
}

/// Mask of the stored slots (two per group).
template <class T> Mask support_mask(const Sparse24Matrix<T> &s) {
  Mask m(s.rows(), s.cols());
  for (std::size_t g = 0; g < s.group_count(); ++g) {
    auto [p0, p1] = s.positions(g);
    auto [r0, c0] = s.coordinate(g, p0);
    auto [r1, c1] = s.coordinate(g, p1);
    m.set(r0, c0);
    m.set(r1, c1);
  }
  return m;
}

namespace detail {
template <class T> std::uint64_t count_nonzero(std::span<const T> v) {
  std::uint64_t n = 0;
  for (T x : v)
    n += x != T(0);
  return n;
}
} // namespace detail

/// C = A B for token-wise 2:4 A [n,h] and dense B [h,d]; executes n*d*h/2
/// MACs and is bitwise equal to gemm(decompress(s), b).
template <class T> Matrix<T> sp_gemm(const Sparse24Matrix<T> &s, const Matrix<T> &b) {
  if (s.orientation() != Orientation::token_wise)
    throw OrientationError("sp_gemm needs a token-wise 2:4 operand");
  if (s.cols() != b.rows())
    throw DimensionError("sp_gemm: inner dimensions " + std::to_string(s.cols()) +
                         " and " + std::to_string(b.rows()));
  const std::size_t n = s.rows(), groups_per_row = s.cols() / 4, d = b.cols();
  Matrix<T> c(n, d);
  auto values = s.values();
  for (std::size_t i = 0; i < n; ++i) {
    T *crow = c.row(i).data();
    for (std::size_t gi = 0; gi < groups_per_row; ++gi) {
      const std::size_t g = i * groups_per_row + gi;
      auto [p0, p1] = s.positions(g);
      detail::axpy(crow, values[2 * g], b.row(4 * gi + p0).data(), d);
      detail::axpy(crow, values[2 * g + 1], b.row(4 * gi + p1).data(), d);
    }
  }
  auto &mc = mac_counter();
  mc.sparse += static_cast<std::uint64_t>(n) * d * (s.cols() / 2);
  mc.sparse_nonzero += detail::count_nonzero(values) * d;
  return c;
}

/// C = A^T B for feature-wise 2:4 A [n,h] and dense B [n,d], reducing over
/// tokens; executes n*h*d/2 MACs and is bitwise equal to
/// gemm_at(decompress(s), b).
template <class T> Matrix<T> sp_gemm_t(const Sparse24Matrix<T> &s, const Matrix<T> &b) {
  if (s.orientation() != Orientation::feature_wise)
    throw OrientationError("sp_gemm_t needs a feature-wise 2:4 operand");
  if (s.rows() != b.rows())
    throw DimensionError("sp_gemm_t: reduction extents " + std::to_string(s.rows()) +
                         " and " + std::to_string(b.rows()));
  const std::size_t h = s.cols(), groups_per_col = s.rows() / 4, d = b.cols();
  Matrix<T> c(h, d);
  auto values = s.values();
  for (std::size_t f = 0; f < h; ++f) {
    T *crow = c.row(f).data();
    for (std::size_t k = 0; k < groups_per_col; ++k) {
      const std::size_t g = f * groups_per_col + k;
      auto [p0, p1] = s.positions(g);
      detail::axpy(crow, values[2 * g], b.row(4 * k + p0).data(), d);
      detail::axpy(crow, values[2 * g + 1], b.row(4 * k + p1).data(), d);
    }
  }
  auto &mc = mac_counter();
  mc.sparse += static_cast<std::uint64_t>(h) * d * (s.rows() / 2);
  mc.sparse_nonzero += detail::count_nonzero(values) * d;
  return c;
}

} // namespace s24
