// SPDX-License-Identifier: Apache-2.0
#include <s24/permutation.hpp>
#include <s24/rng.hpp>

#include <numeric>
#include <utility>

namespace s24 {

Permutation::Permutation(std::vector<std::uint32_t> forward)
    : forward_(std::move(forward)) {
  std::vector<bool> seen(forward_.size(), false);
  for (auto v : forward_) {
    if (v >= forward_.size() || seen[v])
      throw DataError("permutation is not a bijection");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::uint32_t> f(n);
  std::iota(f.begin(), f.end(), 0u);
  return Permutation(std::move(f));
}

Permutation Permutation::inverse() const {
  std::vector<std::uint32_t> inv(forward_.size());
  for (std::size_t i = 0; i < forward_.size(); ++i)
    inv[forward_[i]] = static_cast<std::uint32_t>(i);
  return Permutation(std::move(inv));
}

Permutation Permutation::compose(const Permutation &p) const {
  if (p.size() != size())
    throw DimensionError("compose: permutation sizes differ");
  std::vector<std::uint32_t> out(size());
  for (std::size_t i = 0; i < size(); ++i)
    out[i] = forward_[p[i]];
  return Permutation(std::move(out));
}

Permutation make_permutation(std::uint64_t seed, std::size_t n) {
  std::vector<std::uint32_t> f(n);
  std::iota(f.begin(), f.end(), 0u);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(f[i - 1], f[j]);
  }
  return Permutation(std::move(f));
}

} // namespace s24
