// SPDX-License-Identifier: Apache-2.0
/**
 * @file matrix.hpp
 * @brief Row-major dense matrix and the reference GEMM kernels.
 *
 * Every product in this library reduces over its inner index in ascending
 * order, starting from +0. Sparse kernels rely on that contract: skipping a
 * term whose left factor is zero leaves the accumulator bitwise unchanged,
 * so a sparse product over a compliant operand equals the dense product
 * exactly.
 */
#pragma once

#include <s24/error.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace s24 {

enum class Precision { working, oracle };

template <class T> constexpr Precision precision_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "Matrix supports float (working) and double (oracle) only");
  return std::is_same_v<T, float> ? Precision::working : Precision::oracle;
}

template <class T> class Matrix {
public:
  using value_type = T;

  Matrix() = default;

  /// Zero-initialised rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, T(0)) {}

  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto &row : init) {
      if (row.size() != cols_)
        throw DimensionError("ragged initializer list");
      data_.insert(data_.end(), row.begin(), row.end());
    }
    check_finite();
  }

  /// Adopts `data` (row-major); rejects a length mismatch or non-finite values.
  static Matrix from(std::size_t rows, std::size_t cols, std::vector<T> data) {
    if (data.size() != rows * cols)
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " != " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    m.check_finite();
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  static constexpr Precision precision() { return precision_of<T>(); }

  T &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T &operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v))
        return false;
    return true;
  }

private:
  void check_finite() const {
    if (!all_finite())
      throw DataError("matrix contains non-finite values");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = Matrix<float>;
using OracleMatrix = Matrix<double>;

/// Shape and bit-pattern equality (distinguishes +0 from -0).
template <class T> bool bitwise_equal(const Matrix<T> &a, const Matrix<T> &b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0);
}

template <class U, class T> Matrix<U> cast(const Matrix<T> &a) {
  Matrix<U> out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = static_cast<U>(src[i]);
  return out;
}

template <class T> Matrix<T> transpose(const Matrix<T> &a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      out(c, r) = a(r, c);
  return out;
}

/// Multiply-accumulates executed by the kernels on the calling thread.
struct MacCounter {
  std::uint64_t dense = 0;
  std::uint64_t sparse = 0;
  /// Sparse MACs whose stored operand value was nonzero.
  std::uint64_t sparse_nonzero = 0;
  std::uint64_t total() const noexcept { return dense + sparse; }
};

inline MacCounter &mac_counter() {
  thread_local MacCounter counter;
  return counter;
}

namespace detail {
// out += alpha * x, elementwise; one rounding per element.
template <class T>
inline void axpy(T *__restrict out, T alpha, const T *__restrict x, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j)
    out[j] += alpha * x[j];
}
} // namespace detail

/// C = A B with c[i,j] accumulated over ascending t.
template <class T> Matrix<T> gemm(const Matrix<T> &a, const Matrix<T> &b) {
  if (a.cols() != b.rows())
    throw DimensionError("gemm: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix<T> c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    T *crow = c.row(i).data();
    const T *arow = a.row(i).data();
    for (std::size_t t = 0; t < k; ++t)
      detail::axpy(crow, arow[t], b.row(t).data(), n);
  }
  mac_counter().dense += static_cast<std::uint64_t>(m) * n * k;
  return c;
}

/// C = A^T B without materialising the transpose; bitwise equal to
/// gemm(transpose(a), b).
template <class T> Matrix<T> gemm_at(const Matrix<T> &a, const Matrix<T> &b) {
  if (a.rows() != b.rows())
    throw DimensionError("gemm_at: reduction extents " + std::to_string(a.rows()) +
                         " and " + std::to_string(b.rows()) + " differ");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Matrix<T> c(m, n);
  for (std::size_t t = 0; t < k; ++t) {
    const T *arow = a.row(t).data();
    const T *brow = b.row(t).data();
    for (std::size_t i = 0; i < m; ++i)
      detail::axpy(c.row(i).data(), arow[i], brow, n);
  }
  mac_counter().dense += static_cast<std::uint64_t>(m) * n * k;
  return c;
}

/// Elementwise a + b.
template <class T> Matrix<T> add(const Matrix<T> &a, const Matrix<T> &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("add: shape mismatch");
  Matrix<T> out = a;
  auto o = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] += s[i];
  return out;
}

/// Frobenius norm of (a - b) divided by the Frobenius norm of b, in double.
template <class T, class U>
double relative_frobenius_error(const Matrix<T> &a, const Matrix<U> &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("relative_frobenius_error: shape mismatch");
  double num = 0.0, den = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    num += d * d;
    den += static_cast<double>(y[i]) * static_cast<double>(y[i]);
  }
  if (den == 0.0)
    return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

} // namespace s24
