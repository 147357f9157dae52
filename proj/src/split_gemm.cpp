// SPDX-License-Identifier: Apache-2.0
#include <s24/split_gemm.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s24 {

std::size_t sparse_feature_count(double ratio, std::size_t hidden_dim) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ConfigError("split ratio must be in [0, 1], got " + std::to_string(ratio));
  const double raw = std::ceil(ratio * static_cast<double>(hidden_dim) - 1e-9);
  return std::min(hidden_dim, static_cast<std::size_t>(std::max(0.0, raw)));
}

SplitPlan partition_features(std::vector<std::uint32_t> counts, double ratio) {
  SplitPlan plan;
  plan.hidden_dim = counts.size();
  plan.ratio = ratio;
  const std::size_t n_sparse = sparse_feature_count(ratio, counts.size());

  std::vector<std::uint32_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return counts[a] != counts[b] ? counts[a] < counts[b] : a < b;
  });
  plan.sparse_features.assign(order.begin(), order.begin() + n_sparse);
  plan.dense_features.assign(order.begin() + n_sparse, order.end());
  std::sort(plan.sparse_features.begin(), plan.sparse_features.end());
  std::sort(plan.dense_features.begin(), plan.dense_features.end());
  plan.counts = std::move(counts);
  return plan;
}

std::uint64_t split_gemm_macs(const SplitPlan &plan, std::size_t tokens, std::size_t d) {
  const std::uint64_t nd = static_cast<std::uint64_t>(tokens) * d;
  return nd * plan.sparse_features.size() / 2 + nd * plan.dense_features.size();
}

} // namespace s24
