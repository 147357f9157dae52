// SPDX-License-Identifier: Apache-2.0
/**
 * @file split_gemm.hpp
 * @brief Feature split for the backward A^T B products: the sparsest features
 *        go through a feature-wise 2:4 GEMM, the rest through a dense GEMM.
 */
#pragma once

#include <s24/sparse24.hpp>

#include <cstdint>
#include <vector>

namespace s24 {

struct SplitPlan {
  std::size_t hidden_dim = 0;
  double ratio = 0.0;
  std::vector<std::uint32_t> counts;
  /// Ascending feature indices.
  std::vector<std::uint32_t> sparse_features;
  std::vector<std::uint32_t> dense_features;
};

/// Number of features in the sparse set: ceil(ratio * h). The product is
/// nudged down by 1e-9 so that e.g. 0.95 * 20 counts as exactly 19.
std::size_t sparse_feature_count(double ratio, std::size_t hidden_dim);

/// counts[j] = number of nonzero entries in column j.
template <class T> std::vector<std::uint32_t> column_nonzero_counts(const Matrix<T> &a) {
  std::vector<std::uint32_t> counts(a.cols(), 0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c)
      counts[c] += row[c] != T(0);
  }
  return counts;
}

/// Sorts features ascending by (count, index); the first
/// sparse_feature_count(ratio, h) become sparse, the rest dense.
SplitPlan partition_features(std::vector<std::uint32_t> counts, double ratio);

/// Analytic MAC count of split_gemm_t: n*d*(|sparse|/2 + |dense|).
std::uint64_t split_gemm_macs(const SplitPlan &plan, std::size_t tokens, std::size_t d);

namespace detail {
template <class T>
Matrix<T> gather_columns(const Matrix<T> &a, const std::vector<std::uint32_t> &cols) {
  Matrix<T> out(a.rows(), cols.size());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < cols.size(); ++j)
      dst[j] = src[cols[j]];
  }
  return out;
}

template <class T>
void scatter_rows(Matrix<T> &out, const Matrix<T> &part, const std::vector<std::uint32_t> &rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = part.row(i);
    std::copy(src.begin(), src.end(), out.row(rows[i]).begin());
  }
}
} // namespace detail

/// A'^T B where A' is `a` restricted to `fwd_mask`, with sparse-plan features
/// additionally 2:4-sparsified feature-wise. Rows of the result for dense
/// features are exact. `stats`, when given, receives the feature-wise
/// sparsification statistics of the sparse part.
template <class T>
Matrix<T> split_gemm_t(const Matrix<T> &a, const Mask &fwd_mask, const Matrix<T> &b,
                       const SplitPlan &plan, SparsifyStats *stats = nullptr) {
  if (a.rows() % 4 != 0)
    throw ShapeError("split_gemm_t: token count " + std::to_string(a.rows()) +
                     " not divisible by 4");
  if (plan.hidden_dim != a.cols())
    throw DimensionError("split_gemm_t: plan hidden_dim " + std::to_string(plan.hidden_dim) +
                         " != " + std::to_string(a.cols()));
  if (a.rows() != b.rows())
    throw DimensionError("split_gemm_t: reduction extents differ");
  const Matrix<T> masked = apply_mask(a, fwd_mask);
  Matrix<T> out(a.cols(), b.cols());

  if (!plan.sparse_features.empty()) {
    auto sp = sparsify_feature_wise(detail::gather_columns(masked, plan.sparse_features));
    if (stats)
      *stats = sp.stats;
    detail::scatter_rows(out, sp_gemm_t(sp.sparse, b), plan.sparse_features);
  } else if (stats) {
    *stats = SparsifyStats{};
  }
  if (!plan.dense_features.empty())
    detail::scatter_rows(out, gemm_at(detail::gather_columns(masked, plan.dense_features), b),
                         plan.dense_features);
  return out;
}

} // namespace s24
