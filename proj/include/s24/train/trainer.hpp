// SPDX-License-Identifier: Apache-2.0
/**
 * @file trainer.hpp
 * @brief Training loop, telemetry, checkpoints and the ablation matrix.
 *
 * Step k (1-based) samples a batch, runs forward/backward, checks for
 * non-finite values, clips and applies AdamW. Steps 1..warmup_dense_steps
 * force the FFNs dense; later steps use the configured recipe. A metrics
 * record is taken after every eval_every-th step and after the last one.
 */
#pragma once

#include <s24/train/config.hpp>
#include <s24/train/dataset.hpp>

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace s24::train {

struct MetricsRecord {
  std::int64_t step = 0;
  double train_loss = 0.0;
  /// NaN when the evaluation set is empty.
  double eval_loss = std::numeric_limits<double>::quiet_NaN();
  /// Zero fraction of each block's activation y2 on the evaluation batch,
  /// measured before 2:4 dropping.
  std::vector<double> per_layer_sparsity;
  /// Fraction of y2's nonzeros dropped by token-wise 2:4 sparsification on
  /// the evaluation batch (0 in dense mode).
  std::vector<double> per_layer_dropped_fraction;
  /// Multiply-accumulates of the training step (forward + backward, all GEMMs).
  std::uint64_t macs_this_step = 0;

  friend bool operator==(const MetricsRecord &, const MetricsRecord &) = default;
};

struct EvalResult {
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_layer_sparsity;
  std::vector<double> per_layer_dropped_fraction;
};

/// Loss and activation telemetry of `batch` under `ffn` (no parameter change).
EvalResult evaluate(const ToyModel &m, const TokenSet &batch, const FfnConfig &ffn);

/// The first `limit` examples (0 = all), truncated to a multiple of 4.
TokenSet head_of(const TokenSet &set, std::size_t limit);

/// The FFN config in effect at 1-based step `step`.
FfnConfig ffn_config_at(const TrainConfig &cfg, std::int64_t step);

struct StepInfo {
  std::int64_t step = 0;
  double loss = 0.0;
  const std::vector<GemmCensus> *census = nullptr;     // per block
  const std::vector<BackwardStats> *stats = nullptr;   // per block
};

struct TrainHooks {
  std::function<void(const StepInfo &)> on_step;
  std::function<void(const MetricsRecord &)> on_metrics;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  ToyModel model;
  std::int64_t steps_completed = 0;
  /// Loss of the untrained model on the evaluation batch (NaN without one).
  double initial_eval_loss = std::numeric_limits<double>::quiet_NaN();
  /// FFN GEMMs per block in the last step, and how many ran on sparse paths.
  std::size_t last_step_gemms = 0;
  std::size_t last_step_sparse_gemms = 0;
  /// FFN multiply-accumulates of the last step over their dense equivalent.
  double last_step_ffn_mac_fraction = 1.0;
  /// Nonzero g1 entries outside the forward mask, summed over every backward.
  std::uint64_t g1_outside_mask = 0;
  std::uint64_t backward_calls = 0;
  std::vector<std::string> warnings;
};

/// Throws DivergenceError (with the 1-based step) on a non-finite loss or
/// gradient, ConfigError on invalid configs, DataError on an empty training set.
TrainResult train(const TrainConfig &cfg, const DatasetSplit &data, const TrainHooks &hooks = {});

/// Loads cfg.corpus and trains.
TrainResult train(const TrainConfig &cfg, const TrainHooks &hooks = {});

// ---------------------------------------------------------------------------
// Outputs

inline constexpr const char *kMetricsHeader = "step,train_loss,eval_loss,layer,sparsity,dropped_frac,macs";

/// One row per layer per record.
std::string format_metrics_csv(const std::vector<MetricsRecord> &metrics);
void write_metrics_csv(const std::filesystem::path &path, const std::vector<MetricsRecord> &metrics);

/// JSON summary (no timing fields, so repeated runs compare byte for byte).
std::string format_summary_json(const TrainConfig &cfg, const TrainResult &result,
                                std::int64_t diverged_step = -1);

/// `<dir>/<tensor>.s24m` for every parameter plus `<dir>/manifest.json`.
void write_checkpoint(const std::filesystem::path &dir, const ToyModel &m, const TrainConfig &cfg,
                      std::int64_t step);
/// Reads a checkpoint back; the model config comes from the manifest.
ToyModel read_checkpoint(const std::filesystem::path &dir);

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
  std::string id;
  std::string label;
  TrainConfig config;
};

/// The seven rows, derived from `base` (which supplies sizes, steps, seed and
/// optimizer settings): dense-swiglu, dense-relu2, recipe, no-warmup,
/// naive-bw, no-permute, no-mask-bw.
std::vector<AblationRow> ablation_rows(const TrainConfig &base);

/// SwiGLU hidden width with the Squared-ReLU parameter count: floor(2h/3)
/// rounded down to a multiple of 4.
std::size_t swiglu_hidden_dim(std::size_t h);

struct AblationOutcome {
  std::string id;
  std::string label;
  bool diverged = false;
  std::int64_t diverged_step = -1;
  double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t sparse_gemms = 0;  // per block, last step
  std::size_t gemms = 0;
  double ffn_mac_fraction = 1.0;
  std::size_t parameter_count = 0;
};

/// Runs the selected rows (all when `ids` is empty) on shared data. A row's
/// divergence is recorded in its outcome instead of propagating.
std::vector<AblationOutcome> ablate(const TrainConfig &base, const DatasetSplit &data,
                                    const std::vector<std::string> &ids = {},
                                    const std::function<void(const AblationOutcome &)> &on_row = {});

std::string format_ablation_csv(const std::vector<AblationOutcome> &rows);
std::string format_ablation_json(const TrainConfig &base, const std::vector<AblationOutcome> &rows);

} // namespace s24::train
