// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/optim.hpp"

#include <cmath>
#include <numbers>

APE_BEGIN_NAMESPACE

CosineSchedule::CosineSchedule(double peak_lr, double warmup_steps, double total_steps)
    : peak_(peak_lr), warmup_(warmup_steps), total_(total_steps) {
  if (!(peak_lr >= 0)) throw ConfigError("peak learning rate must be nonnegative");
  if (!(warmup_steps >= 0 && warmup_steps < total_steps)) {
    throw ConfigError("schedule needs 0 <= warmup (" + std::to_string(warmup_steps) +
                      ") < total (" + std::to_string(total_steps) + ")");
  }
}

double CosineSchedule::lr_at(double step) const {
  if (!(step >= 0 && step <= total_)) {
    throw RangeError("lr_at: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_) + "]");
  }
  if (step < warmup_) return peak_ * step / warmup_;
  const double progress = (step - warmup_) / (total_ - warmup_);
  return peak_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.beta1 >= 0 && config_.beta1 < 1 && config_.beta2 >= 0 && config_.beta2 < 1)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0)) throw ConfigError("AdamW eps must be positive");
  if (!(config_.weight_decay >= 0)) throw ConfigError("weight decay must be nonnegative");
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(double lr) {
  if (!(lr >= 0)) throw ConfigError("learning rate must be nonnegative");
  for (auto* p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      throw DimensionError("gradient of " + p->name + " has shape " +
                           shape_to_string(p->grad.shape()) + ", parameter " +
                           shape_to_string(p->value.shape()));
    }
    check_finite(p->grad, "gradient of " + p->name);
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    const double wd = p.decay ? config_.weight_decay : 0.0;
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = static_cast<real>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<real>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double update = m_hat / (std::sqrt(v_hat) + config_.eps) + wd * theta[i];
      theta[i] = static_cast<real>(theta[i] - lr * update);
    }
  }
}

APE_END_NAMESPACE
