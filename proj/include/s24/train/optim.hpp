// SPDX-License-Identifier: Apache-2.0
/**
 * @file optim.hpp
 * @brief AdamW with global-norm clipping and a warmup + cosine schedule.
 */
#pragma once

#include <s24/train/model.hpp>

#include <vector>

namespace s24::train {

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  /// Global L2 norm limit; <= 0 disables clipping.
  double grad_clip = 1.0;

  friend bool operator==(const AdamWConfig &, const AdamWConfig &) = default;
};

struct AdamWState {
  std::vector<std::vector<float>> m, v;  // one entry per parameter tensor, for_each order
  std::int64_t step = 0;                 // completed updates
};

AdamWState init_adamw(const ToyModel &m);

/// Linear warmup from lr/warmup to lr over `warmup` steps, then cosine decay
/// to min_ratio * lr at `total`. `step` is 0-based.
double lr_at(std::int64_t step, std::int64_t total, std::int64_t warmup, double lr,
             double min_ratio);

/// L2 norm over every gradient entry, accumulated in 64-bit.
double global_grad_norm(const ToyModel &grads);

/// Scales grads in place so their global norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(ToyModel &grads, double max_norm);

/// One decoupled-weight-decay Adam update with bias-corrected moments.
/// Clipping (cfg.grad_clip) is applied to `grads` first. Returns the
/// pre-clip gradient norm.
double adamw_step(ToyModel &params, ToyModel &grads, AdamWState &state, const AdamWConfig &cfg,
                  double lr);

} // namespace s24::train
