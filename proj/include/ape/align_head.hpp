// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ape/dataset.hpp"
#include "ape/rng.hpp"
#include "ape/tape.hpp"

APE_BEGIN_NAMESPACE

/// Stack of affine layers with GELU between layers and nothing after the
/// last. Applied to the last axis, so on a [B x T x D] input the same weights
/// act on every token position.
class MlpHead {
 public:
  MlpHead() = default;
  /// widths = (d_in, h, ..., h, d_out); widths.size() - 1 layers. A single
  /// width (or none) is the identity map with no parameters.
  MlpHead(std::vector<std::size_t> widths, const std::string& prefix);

  /// Fan-in variance-scaled uniform weights, zero biases; the final layer is
  /// drawn at `final_scale` times the usual bound.
  void init(Rng& rng, double final_scale = 0.1);
  /// Square layers set to identity weights and zero bias.
  void init_identity();

  Var forward(Tape& tape, Var x);

  std::size_t layers() const noexcept { return weights_.size(); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t in_dim() const noexcept { return widths_.empty() ? 0 : widths_.front(); }
  std::size_t out_dim() const noexcept { return widths_.empty() ? 0 : widths_.back(); }
  std::vector<Parameter*> parameters();

 private:
  std::vector<std::size_t> widths_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

/// Learned embedding per vocabulary token, averaged over a sequence.
class LookupHead {
 public:
  LookupHead() = default;
  LookupHead(std::size_t vocab, std::size_t d_out);

  void init(Rng& rng);
  Var forward(Tape& tape, const std::vector<std::vector<std::uint32_t>>& token_ids);

  std::size_t vocab() const noexcept { return table_.value.rank() ? table_.value.dim(0) : 0; }
  std::size_t out_dim() const noexcept { return table_.value.rank() ? table_.value.dim(1) : 0; }
  Parameter& table() noexcept { return table_; }
  std::vector<Parameter*> parameters() { return {&table_}; }

 private:
  Parameter table_;
};

/// Learnable log of the logit scale. exp(log_scale) stays in (0, max_scale].
struct Temperature {
  Parameter log_scale{"log_scale", Tensor::scalar(real(2.659260036932778)), false};
  double max_scale = 100.0;

  real scale() const;
  void clamp();
};

enum class HeadKind : std::uint32_t { mlp = 0, lookup = 1 };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadConfig {
  HeadKind kind = HeadKind::mlp;
  /// MLP text head widths (d_tok, ..., d_out). Unused for lookup.
  std::vector<std::size_t> text_widths;
  /// Lookup head vocabulary; unused for mlp.
  std::size_t vocab = 0;
  /// Shared embedding dimension.
  std::size_t d_out = 0;
  std::size_t d_img = 0;
  /// Image-side MLP widths (d_img, ..., d_out); empty = disabled.
  std::vector<std::size_t> image_widths;
  double init_log_scale = 2.659260036932778;  // log(1 / 0.07)
  double max_scale = 100.0;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Default widths: `layers` layers, hidden width `hidden`, (d_in, h.., d_out).
std::vector<std::size_t> mlp_widths(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                    std::size_t layers);

/// Input the text side consumes; a view over a Batch.
struct TextInput {
  const Tensor* tokens = nullptr;                               // B x T x d_tok
  std::span<const std::uint8_t> mask;                           // B * T
  const std::vector<std::vector<std::uint32_t>>* token_ids = nullptr;
};

TextInput text_input(const Batch& batch);

/// Text head (MLP or lookup), optional image head and temperature.
class AlignmentModel {
 public:
  explicit AlignmentModel(HeadConfig config);

  void init(std::uint64_t seed);

  /// Unit-norm text embeddings [B x d_out].
  Var embed_text(Tape& tape, const TextInput& input);
  /// Unit-norm image embeddings [B x d_out]; identity + normalize when the
  /// image head is disabled.
  Var embed_image(Tape& tape, Var images);

  /// Parameters in declaration order: text head, image head, temperature.
  std::vector<Parameter*> parameters();
  void zero_grad();

  const HeadConfig& config() const noexcept { return config_; }
  MlpHead& text_mlp() noexcept { return text_mlp_; }
  LookupHead& lookup() noexcept { return lookup_; }
  MlpHead& image_mlp() noexcept { return image_mlp_; }
  Temperature& temperature() noexcept { return temperature_; }
  bool image_head_enabled() const noexcept { return !config_.image_widths.empty(); }

 private:
  HeadConfig config_;
  MlpHead text_mlp_;
  LookupHead lookup_;
  MlpHead image_mlp_;
  Temperature temperature_;
};

struct ParamCounts {
  std::uint64_t text_head = 0;
  std::uint64_t image_head = 0;
  std::uint64_t temperature = 1;
  std::uint64_t total = 0;
  /// text_head / text_tower_params (0 when the tower size is not given).
  double text_ratio = 0;
};

std::uint64_t mlp_param_count(const std::vector<std::size_t>& widths) noexcept;
ParamCounts count_params(const HeadConfig& config, std::uint64_t text_tower_params = 0);

APE_END_NAMESPACE
