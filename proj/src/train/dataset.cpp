// SPDX-License-Identifier: Apache-2.0
#include <s24/error.hpp>
#include <s24/matrix_io.hpp>
#include <s24/train/dataset.hpp>

#include <cmath>

namespace s24::train {

std::vector<std::uint8_t> encode_text(std::string_view text) {
  return {text.begin(), text.end()};
}

std::string decode_text(std::span<const std::uint8_t> ids) { return {ids.begin(), ids.end()}; }

DatasetSplit build_dataset(std::span<const std::uint8_t> corpus, std::size_t context,
                           double split_fraction, std::size_t vocab_size) {
  if (corpus.empty())
    throw DataError("corpus is empty");
  if (context == 0)
    throw ConfigError("context must be at least 1");
  if (!(split_fraction >= 0.0 && split_fraction <= 1.0))
    throw ConfigError("split fraction must be in [0, 1]");
  if (corpus.size() <= context)
    throw DataError("corpus has " + std::to_string(corpus.size()) +
                    " bytes; need more than the context length " + std::to_string(context));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i] >= vocab_size)
      throw DataError("byte " + std::to_string(corpus[i]) + " at offset " + std::to_string(i) +
                      " is outside the vocabulary of " + std::to_string(vocab_size));

  const std::size_t pairs = corpus.size() - context;
  const auto n_train = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(pairs)));

  DatasetSplit out;
  auto fill = [&](TokenSet &set, std::size_t begin, std::size_t end) {
    set.context = context;
    set.inputs.reserve((end - begin) * context);
    set.targets.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      set.inputs.insert(set.inputs.end(), corpus.begin() + i, corpus.begin() + i + context);
      set.targets.push_back(corpus[i + context]);
    }
  };
  fill(out.train, 0, n_train);
  fill(out.eval, n_train, pairs);
  if (out.eval.size() == 0)
    out.warnings.push_back("evaluation set is empty (split fraction " +
                           std::to_string(split_fraction) + ")");
  if (out.train.size() == 0)
    out.warnings.push_back("training set is empty");
  return out;
}

DatasetSplit build_dataset(const std::filesystem::path &corpus_path, std::size_t context,
                           double split_fraction, std::size_t vocab_size) {
  return build_dataset(read_file_bytes(corpus_path), context, split_fraction, vocab_size);
}

} // namespace s24::train
