// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ape/checkpoint.hpp"
#include "ape/contrastive.hpp"
#include "ape/dataset.hpp"
#include "ape/optim.hpp"
#include "ape/train_config.hpp"
#include "ape/zero_shot.hpp"

APE_BEGIN_NAMESPACE

/// One evaluation event.
struct MetricsRecord {
  std::uint64_t step = 0;
  double wall_time_s = 0;
  double train_loss = 0;
  double temperature = 0;  // 1 / exp(log_scale)
  double lr = 0;
  std::map<std::string, double> eval;    // zero-shot accuracy per eval set
  std::map<std::size_t, double> recall;  // k -> validation recall@k

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

std::string metrics_to_json(const MetricsRecord& record);
MetricsRecord metrics_from_json(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);
/// Flattens a metrics log: step, wall_time_s, train_loss, then one column per
/// remaining metric key (sorted), header row first.
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

/// Gradients of the full-batch contrastive loss computed in `accum`
/// micro-batches. The loss couples every pair in the batch, so per-micro-batch
/// losses cannot simply be summed. Instead: embed every micro-batch without
/// keeping its tape, take the loss and its gradient w.r.t. the embeddings on
/// the whole batch, then re-run each micro-batch forward and backpropagate its
/// slice of the embedding gradient. Returns the loss; parameter grads are
/// overwritten.
double accumulate_gradients(AlignmentModel& model, const Batch& batch, std::size_t accum);

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_recall = -1;
  std::uint64_t final_step = 0;
};

/// Training loop over one run directory containing config.toml, seeds.json,
/// metrics.jsonl, subset index lists and checkpoints.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);
  /// Continues from a checkpoint. Refuses (ConfigError listing the fields)
  /// when a result-affecting field differs from the checkpoint's config.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint,
                                         TrainConfig config);

  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Runs to `config.steps`, or stops early after `stop_at` steps (still
  /// writing last.apec) so a later resume can continue.
  TrainResult run(std::optional<std::uint64_t> stop_at = std::nullopt);

  AlignmentModel& model() noexcept { return *model_; }
  const TrainConfig& config() const noexcept { return config_; }
  const TrainerState& state() const noexcept { return state_; }
  const std::filesystem::path& run_dir() const noexcept { return run_dir_; }

  /// Evaluation at the current parameters (no side effects on training).
  MetricsRecord evaluate();

 private:
  Trainer(TrainConfig config, const Checkpoint* checkpoint);

  void load_data();
  void prepare_subsets();
  void write_checkpoint(const std::filesystem::path& path);
  void append_metrics(const MetricsRecord& record);

  struct ZeroShotTask;

  TrainConfig config_;
  std::filesystem::path run_dir_;
  ShardDims dims_;
  std::vector<EmbeddingShard> sources_;
  std::vector<std::uint64_t> source_weights_;
  std::vector<std::vector<std::size_t>> subsets_;
  std::optional<EmbeddingShard> val_;
  std::vector<ZeroShotTask> zeroshot_;
  std::unique_ptr<AlignmentModel> model_;
  std::unique_ptr<AdamW> optimizer_;
  std::unique_ptr<BatchSampler> sampler_;
  std::optional<CosineSchedule> schedule_;
  TrainerState state_;
  double last_lr_ = 0;
  std::vector<MetricsRecord> metrics_;
};

struct SweepGrid {
  std::vector<double> lr{1e-4, 3e-4, 1e-3};
  std::vector<double> weight_decay{0.01, 0.1};
  std::vector<double> warmup_frac{0.02, 0.05};

  static SweepGrid load(const std::filesystem::path& path);
};

struct SweepTrial {
  std::size_t index = 0;
  double lr = 0;
  double weight_decay = 0;
  std::int64_t warmup_steps = 0;
  std::filesystem::path run_dir;
  double best_recall = -1;
};

/// Trains one run per grid point under `out_dir/trial_NNN` and ranks them by
/// best validation recall@1. `jobs` > 1 runs trials concurrently.
std::vector<SweepTrial> run_sweep(const TrainConfig& base, const SweepGrid& grid,
                                  const std::filesystem::path& out_dir, std::size_t jobs = 1);

APE_END_NAMESPACE
