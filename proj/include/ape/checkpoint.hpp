// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint format (little-endian):
//
//   magic "APEC" | version u32 = 1
//   config block
//     head_kind u32 | d_out u32 | d_img u32 | vocab u32
//     n u32, text widths u32[n] | m u32, image widths u32[m]
//     log_scale f32 | init_log_scale f64 | max_scale f64
//     run config length u32 | run config bytes (resolved TOML, UTF-8)
//   parameter tensors in declaration order (text head, image head), f32
//   has_optimizer u32 [ t u64 | per parameter incl. temperature: m f32[], v f32[] ]
//   has_trainer u32   [ step u64 | epoch u64 | position u64 | loss_sum f64 |
//                       loss_count u64 | best_recall f64 | best_step u64 |
//                       wall_time_s f64 ]

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ape/align_head.hpp"
#include "ape/optim.hpp"

APE_BEGIN_NAMESPACE

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainerState {
  std::uint64_t step = 0;
  std::uint64_t sampler_epoch = 0;
  std::uint64_t sampler_position = 0;
  double loss_sum = 0;
  std::uint64_t loss_count = 0;
  double best_recall = -1;
  std::uint64_t best_step = 0;
  double wall_time_s = 0;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct OptimizerState {
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct Checkpoint {
  HeadConfig head;
  std::string run_config;
  /// Parameter values in declaration order, temperature last.
  std::vector<Tensor> params;
  std::optional<OptimizerState> optimizer;
  std::optional<TrainerState> trainer;
};

Checkpoint snapshot(AlignmentModel& model, const AdamW* optimizer = nullptr,
                    const TrainerState* trainer = nullptr, std::string run_config = {});

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a model with the checkpoint's architecture and parameter values.
AlignmentModel restore_model(const Checkpoint& ckpt);
/// Copies saved moments and step count into an optimizer over the same model.
void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt);

APE_END_NAMESPACE
