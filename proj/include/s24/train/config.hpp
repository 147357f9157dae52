// SPDX-License-Identifier: Apache-2.0
/**
 * @file config.hpp
 * @brief Training configuration and its flat `key = value` text form.
 *
 * One key per line, `#` starts a comment, blank lines are ignored. Keys are
 * the field names below (model, optimizer, FFN and loop fields share one
 * namespace). Unknown keys and unparsable values raise ConfigError.
 */
#pragma once

#include <s24/train/optim.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace s24::train {

struct TrainConfig {
  ModelConfig model;
  FfnConfig ffn = FfnConfig::recipe();
  AdamWConfig optim;

  std::int64_t steps = 2000;
  /// Steps run with forward/backward forced dense before the recipe starts.
  std::int64_t warmup_dense_steps = 100;
  std::int64_t lr_warmup_steps = 100;
  double min_lr_ratio = 0.1;
  std::size_t batch_tokens = 128;
  std::int64_t eval_every = 100;
  /// Evaluation uses the first eval_tokens pairs of the eval split (rounded
  /// down to a multiple of 4); 0 means all of them.
  std::size_t eval_tokens = 2048;
  double split_fraction = 0.9;
  /// Recount the split plan every this many sparse steps (1 = every step).
  std::int64_t split_refresh_every = 1;
  std::uint64_t seed = 0;
  /// Corpus path; relative paths resolve against the config file's directory.
  std::string corpus;
  /// Fault injection: poison one gradient entry with NaN at this step (-1 = off).
  std::int64_t inject_nan_step = -1;

  void validate() const;
  friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

/// Sets one field from its text form.
void apply_setting(TrainConfig &cfg, const std::string &key, const std::string &value);

/// Every field as (key, value) in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig &cfg);

TrainConfig parse_config(std::string_view text, const TrainConfig &base = {});
std::string format_config(const TrainConfig &cfg);

/// Reads a config file; a relative `corpus` is resolved against its directory.
TrainConfig load_config(const std::filesystem::path &path, const TrainConfig &base = {});

} // namespace s24::train
