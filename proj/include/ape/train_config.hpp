// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ape/config.hpp"
#include "ape/real.hpp"

APE_BEGIN_NAMESPACE

/// Every hyperparameter of a run. Loaded from a flat TOML file whose keys
/// match the member names; unknown keys are rejected.
struct TrainConfig {
  // Alignment head.
  std::string head = "mlp";           // mlp | lookup
  std::int64_t layers = 4;
  std::int64_t hidden = 0;            // 0: 2 * d_tok
  std::int64_t d_out = 0;             // 0: d_img
  std::int64_t vocab_size = 0;        // 0: largest token id seen + 1
  bool image_head = false;
  std::int64_t image_layers = 2;
  std::int64_t image_hidden = 0;      // 0: d_img
  double init_log_scale = 2.659260036932778;
  double max_scale = 100.0;

  // Optimization.
  std::int64_t batch_size = 256;
  std::int64_t accum = 1;
  std::int64_t memory_budget = 65536;  // samples per micro-batch forward
  std::int64_t steps = 1000;
  std::int64_t warmup_steps = 50;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Data. Each train entry is "path" or "path@weight" (a shard file or a
  // directory of shards); several entries form an exact-ratio mixture.
  std::vector<std::string> train_data;
  std::int64_t epoch_samples = 0;
  bool drop_last = true;
  std::string val_data;
  std::string recall_direction = "i2t";
  /// "name|eval_shard|template_shard[|label_map[|class_names]]"
  std::vector<std::string> zeroshot;

  std::int64_t seed = 0;
  std::int64_t data_seed = 0;

  // Run control. None of these change the numbers a run produces.
  std::int64_t eval_every = 100;
  std::int64_t checkpoint_every = 0;  // 0: only at the end
  std::string run_dir = "run";
  bool strict = false;    // strict: one thread, wall_time_s logged as 0
  std::int64_t threads = 1;

  /// `validate` = false skips cross-field checks (for partial key sets).
  static TrainConfig from_kv(const KeyValueFile& kv, bool validate = true);
  static TrainConfig load(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});
  static TrainConfig parse(const std::string& text);

  /// Resolved config as TOML, every key in a fixed order.
  std::string to_toml() const;
  /// Only the keys that affect results; what checkpoints record.
  std::string semantic_toml() const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Fields that change results and differ between a and b, as
/// "key: <a> -> <b>" lines.
std::vector<std::string> semantic_diff(const TrainConfig& a, const TrainConfig& b);
/// Every key a config file may contain.
std::vector<std::string> train_config_keys();

APE_END_NAMESPACE
