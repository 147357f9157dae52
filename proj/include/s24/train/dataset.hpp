// SPDX-License-Identifier: Apache-2.0
/**
 * @file dataset.hpp
 * @brief Byte-level next-character prediction pairs.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace s24::train {

/// `size()` examples; example i predicts targets[i] from the `context` bytes
/// inputs[i*context .. (i+1)*context).
struct TokenSet {
  std::size_t context = 0;
  std::vector<std::uint8_t> inputs;
  std::vector<std::uint8_t> targets;

  std::size_t size() const { return targets.size(); }
  std::span<const std::uint8_t> window(std::size_t i) const {
    return {inputs.data() + i * context, context};
  }
};

struct DatasetSplit {
  TokenSet train;
  TokenSet eval;
  std::vector<std::string> warnings;
};

std::vector<std::uint8_t> encode_text(std::string_view text);
std::string decode_text(std::span<const std::uint8_t> ids);

/// Every window of `context` bytes followed by its next byte. The first
/// floor(split_fraction * pairs) pairs train, the rest evaluate (contiguous,
/// so no window straddles the split). Throws DataError on an empty corpus,
/// a corpus shorter than context + 1, or bytes outside the vocabulary.
DatasetSplit build_dataset(std::span<const std::uint8_t> corpus, std::size_t context,
                           double split_fraction, std::size_t vocab_size = 256);
DatasetSplit build_dataset(const std::filesystem::path &corpus_path, std::size_t context,
                           double split_fraction, std::size_t vocab_size = 256);

} // namespace s24::train
