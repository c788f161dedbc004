// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/align_head.hpp"

#include <cmath>

#include "ape/ops.hpp"

APE_BEGIN_NAMESPACE

MlpHead::MlpHead(std::vector<std::size_t> widths, const std::string& prefix)
    : widths_(std::move(widths)) {
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] == 0 || widths_[l + 1] == 0) throw ConfigError("MLP widths must be positive");
    weights_.emplace_back(prefix + ".w" + std::to_string(l), Tensor({widths_[l], widths_[l + 1]}));
    biases_.emplace_back(prefix + ".b" + std::to_string(l), Tensor({widths_[l + 1]}));
  }
}

void MlpHead::init(Rng& rng, double final_scale) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = std::sqrt(3.0 / static_cast<double>(widths_[l])) *
                         (l + 1 == weights_.size() ? final_scale : 1.0);
    for (auto& v : weights_[l].value.data()) v = static_cast<real>(rng.uniform(-bound, bound));
    biases_[l].value.fill(0);
  }
}

void MlpHead::init_identity() {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (widths_[l] != widths_[l + 1]) {
      throw ConfigError("identity init needs square layers, layer " + std::to_string(l) +
                        " is " + std::to_string(widths_[l]) + "x" +
                        std::to_string(widths_[l + 1]));
    }
    weights_[l].value.fill(0);
    for (std::size_t i = 0; i < widths_[l]; ++i) weights_[l].value[i * widths_[l] + i] = 1;
    biases_[l].value.fill(0);
  }
}

Var MlpHead::forward(Tape& tape, Var x) {
  if (!widths_.empty() && tape.value(x).cols() != widths_.front()) {
    throw DimensionError("MLP expects inputs of width " + std::to_string(widths_.front()) +
                         ", got " + shape_to_string(tape.value(x).shape()));
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = affine(tape, x, tape.parameter(weights_[l]), tape.parameter(biases_[l]));
    if (l + 1 < weights_.size()) x = gelu(tape, x);
  }
  return x;
}

std::vector<Parameter*> MlpHead::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

LookupHead::LookupHead(std::size_t vocab, std::size_t d_out)
    : table_("lookup.table", Tensor({vocab, d_out})) {
  if (vocab == 0 || d_out == 0) throw ConfigError("lookup head needs vocab and d_out >= 1");
}

void LookupHead::init(Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(out_dim()));
  for (auto& v : table_.value.data()) v = static_cast<real>(rng.normal() * stddev);
}

Var LookupHead::forward(Tape& tape, const std::vector<std::vector<std::uint32_t>>& token_ids) {
  return lookup_mean(tape, tape.parameter(table_), token_ids);
}

real Temperature::scale() const { return std::exp(log_scale.value[0]); }

void Temperature::clamp() {
  const real cap = static_cast<real>(std::log(max_scale));
  if (log_scale.value[0] > cap) log_scale.value[0] = cap;
}

std::string to_string(HeadKind kind) { return kind == HeadKind::mlp ? "mlp" : "lookup"; }

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "mlp") return HeadKind::mlp;
  if (s == "lookup") return HeadKind::lookup;
  throw ConfigError("unknown head kind '" + s + "' (expected mlp or lookup)");
}

std::vector<std::size_t> mlp_widths(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                    std::size_t layers) {
  if (layers == 0) return {};
  std::vector<std::size_t> w{d_in};
  for (std::size_t l = 1; l < layers; ++l) w.push_back(hidden);
  w.push_back(d_out);
  return w;
}

TextInput text_input(const Batch& batch) {
  return TextInput{&batch.tokens, batch.mask, &batch.token_ids};
}

AlignmentModel::AlignmentModel(HeadConfig config) : config_(std::move(config)) {
  if (config_.d_out == 0) throw ConfigError("d_out must be positive");
  if (config_.kind == HeadKind::mlp) {
    if (config_.text_widths.size() < 2 || config_.text_widths.size() > 9) {
      throw ConfigError("text MLP needs between 1 and 8 layers, got " +
                        std::to_string(config_.text_widths.size() ? config_.text_widths.size() - 1 : 0));
    }
    if (config_.text_widths.back() != config_.d_out) {
      throw ConfigError("text MLP output width " + std::to_string(config_.text_widths.back()) +
                        " must equal d_out " + std::to_string(config_.d_out));
    }
    text_mlp_ = MlpHead(config_.text_widths, "text");
  } else {
    lookup_ = LookupHead(config_.vocab, config_.d_out);
  }
  if (!config_.image_widths.empty()) {
    if (config_.image_widths.size() < 2 || config_.image_widths.front() != config_.d_img ||
        config_.image_widths.back() != config_.d_out) {
      throw ConfigError("image MLP widths must run from d_img to d_out");
    }
    image_mlp_ = MlpHead(config_.image_widths, "image");
  } else if (config_.d_img != config_.d_out) {
    throw ConfigError("image head disabled but d_img " + std::to_string(config_.d_img) +
                      " != d_out " + std::to_string(config_.d_out));
  }
  if (!(config_.max_scale > 0)) throw ConfigError("max_scale must be positive");
  temperature_.max_scale = config_.max_scale;
  temperature_.log_scale.value[0] = static_cast<real>(config_.init_log_scale);
  temperature_.clamp();
}

void AlignmentModel::init(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x1417));
  if (config_.kind == HeadKind::mlp) {
    text_mlp_.init(rng);
  } else {
    lookup_.init(rng);
  }
  if (image_head_enabled()) image_mlp_.init(rng);
  temperature_.log_scale.value[0] = static_cast<real>(config_.init_log_scale);
  temperature_.clamp();
}

Var AlignmentModel::embed_text(Tape& tape, const TextInput& input) {
  Var pooled;
  if (config_.kind == HeadKind::mlp) {
    Var tokens = tape.constant_ref(*input.tokens);
    pooled = masked_mean(tape, text_mlp_.forward(tape, tokens), input.mask);
  } else {
    pooled = lookup_.forward(tape, *input.token_ids);
  }
  return normalize_rows(tape, pooled);
}

Var AlignmentModel::embed_image(Tape& tape, Var images) {
  const Tensor& v = tape.value(images);
  if (v.rank() != 2 || v.dim(1) != config_.d_img) {
    throw DimensionError("image batch " + shape_to_string(v.shape()) + " does not have d_img " +
                         std::to_string(config_.d_img));
  }
  if (image_head_enabled()) images = image_mlp_.forward(tape, images);
  return normalize_rows(tape, images);
}

std::vector<Parameter*> AlignmentModel::parameters() {
  std::vector<Parameter*> out =
      config_.kind == HeadKind::mlp ? text_mlp_.parameters() : lookup_.parameters();
  for (auto* p : image_mlp_.parameters()) out.push_back(p);
  out.push_back(&temperature_.log_scale);
  return out;
}

void AlignmentModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::uint64_t mlp_param_count(const std::vector<std::size_t>& widths) noexcept {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += std::uint64_t{widths[l]} * widths[l + 1] + widths[l + 1];
  }
  return n;
}

ParamCounts count_params(const HeadConfig& config, std::uint64_t text_tower_params) {
  ParamCounts c;
  c.text_head = config.kind == HeadKind::mlp ? mlp_param_count(config.text_widths)
                                              : std::uint64_t{config.vocab} * config.d_out;
  c.image_head = mlp_param_count(config.image_widths);
  c.total = c.text_head + c.image_head + c.temperature;
  c.text_ratio = text_tower_params
                     ? static_cast<double>(c.text_head) / static_cast<double>(text_tower_params)
                     : 0.0;
  return c;
}

APE_END_NAMESPACE
