// SPDX-License-Identifier: Apache-2.0
#include <s24/sparse24.hpp>

#include <numeric>

namespace s24 {

const char *to_string(Orientation o) {
  return o == Orientation::token_wise ? "token-wise" : "feature-wise";
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::accumulate(bits_.begin(), bits_.end(), std::size_t{0}));
}

SparsifyStats SparsifyStats::from_counts(std::uint64_t total, std::uint64_t before,
                                         std::uint64_t after) {
  SparsifyStats s;
  s.total_entries = total;
  s.nonzeros_before = before;
  s.nonzeros_after = after;
  s.dropped = before - after;
  s.sparsity_before = total ? 1.0 - static_cast<double>(before) / static_cast<double>(total) : 0.0;
  s.dropped_fraction_of_nonzeros =
      before ? static_cast<double>(s.dropped) / static_cast<double>(before) : 0.0;
  return s;
}

SparsifyStats &SparsifyStats::operator+=(const SparsifyStats &o) {
  *this = from_counts(total_entries + o.total_entries, nonzeros_before + o.nonzeros_before,
                      nonzeros_after + o.nonzeros_after);
  return *this;
}

} // namespace s24
