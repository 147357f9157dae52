// SPDX-License-Identifier: Apache-2.0
/**
 * @file model.hpp
 * @brief n-gram MLP language model built from FFN blocks.
 *
 *   x0 = concat(E[t_1], ..., E[t_context])                [n, d]
 *   x_{l+1} = x_l + FFN_l(rmsnorm(x_l))                   l = 0 .. blocks-1
 *   logits = rmsnorm(x_L) H + b                           [n, vocab]
 *
 * rmsnorm has no learned gain. Every FFN runs through ffn_forward/backward,
 * so the block inherits whatever sparse recipe the FfnConfig selects.
 */
#pragma once

#include <s24/ffn.hpp>
#include <s24/train/dataset.hpp>

#include <functional>
#include <string>
#include <vector>

namespace s24::train {

struct ModelConfig {
  std::size_t vocab_size = 256;
  std::size_t context = 8;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t num_blocks = 2;

  /// Width of one character's embedding: embed_dim / context.
  std::size_t char_dim() const { return embed_dim / context; }
  /// Throws ConfigError: vocab >= 2, context >= 1, embed_dim divisible by
  /// context, hidden_dim divisible by 4.
  void validate() const;

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

struct ToyModel {
  ModelConfig config;
  DenseMatrix embed;                    // [vocab, char_dim]
  std::vector<FfnParams<float>> blocks;
  DenseMatrix head_w;                   // [embed_dim, vocab]
  DenseMatrix head_b;                   // [1, vocab]

  /// Visits every parameter tensor in a fixed order; `decay` marks the
  /// tensors that get weight decay (FFN and head weights).
  void for_each(const std::function<void(const std::string &name, DenseMatrix &, bool decay)> &f);
  void for_each(const std::function<void(const std::string &name, const DenseMatrix &, bool decay)> &f) const;
  std::size_t parameter_count() const;
};

/// Embeddings N(0, 1) so the concatenated input has unit variance; W1, W3
/// N(0, 1/d); W2 N(0, 1/h); head N(0, 0.02^2) so initial logits are nearly
/// uniform; biases zero.
ToyModel init_model(const ModelConfig &cfg, Activation activation, std::uint64_t seed);
ToyModel zeros_like(const ToyModel &m);

struct BlockCache {
  DenseMatrix u;                  // normalized block input
  std::vector<float> inv_rms;
  FfnCache<float> ffn;
};

struct ModelCache {
  std::vector<std::uint8_t> inputs;
  std::vector<BlockCache> blocks;
  DenseMatrix u_final;
  std::vector<float> inv_rms_final;
};

struct ModelForwardOptions {
  /// Per-block split plans to reuse (entries may be null); empty = recount.
  std::vector<const SplitPlan *> reuse_plans;
  /// When set, resized to num_blocks and filled with each block's GEMMs.
  std::vector<GemmCensus> *census = nullptr;
};

struct ModelForward {
  DenseMatrix logits;
  ModelCache cache;
};

ModelForward forward_model(const ToyModel &m, const TokenSet &batch, const FfnConfig &cfg,
                           const ModelForwardOptions &opt = {});

struct LossResult {
  double loss = 0.0;
  DenseMatrix dlogits;  // gradient of the mean loss
};

/// Mean cross-entropy of softmax(logits) against targets; softmax in 64-bit.
LossResult cross_entropy(const DenseMatrix &logits, std::span<const std::uint8_t> targets);

/// Gradients in the shape of the model. `census` and `stats`, when set, are
/// filled per block.
ToyModel backward_model(const DenseMatrix &dlogits, const ModelCache &cache, const ToyModel &m,
                        const FfnConfig &cfg, std::vector<GemmCensus> *census = nullptr,
                        std::vector<BackwardStats> *stats = nullptr);

namespace detail {

/// Row-wise x / sqrt(mean(x^2) + 1e-6); returns the reciprocal norms too.
DenseMatrix rmsnorm(const DenseMatrix &x, std::vector<float> &inv_rms);
DenseMatrix rmsnorm_backward(const DenseMatrix &du, const DenseMatrix &u,
                             const std::vector<float> &inv_rms);

} // namespace detail

} // namespace s24::train
