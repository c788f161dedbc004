// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ape/tape.hpp"

APE_BEGIN_NAMESPACE

/// Linear warmup to `peak_lr` over `warmup_steps`, then half-cosine decay to
/// zero at `total_steps`.
class CosineSchedule {
 public:
  CosineSchedule(double peak_lr, double warmup_steps, double total_steps);

  /// Valid for 0 <= step <= total_steps; RangeError otherwise.
  double lr_at(double step) const;

  double peak_lr() const noexcept { return peak_; }
  double warmup_steps() const noexcept { return warmup_; }
  double total_steps() const noexcept { return total_; }

 private:
  double peak_;
  double warmup_;
  double total_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
/// Parameters with decay == false (the temperature) skip the wd term.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig config);

  /// Applies one update from each parameter's current `grad`. A non-finite
  /// gradient raises NumericError before anything is modified.
  void step(double lr);

  std::uint64_t steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return config_; }
  std::vector<Tensor>& first_moments() noexcept { return m_; }
  std::vector<Tensor>& second_moments() noexcept { return v_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }
  void set_steps(std::uint64_t t) noexcept { t_ = t; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

APE_END_NAMESPACE
