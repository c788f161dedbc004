// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ape/embed_store.hpp"

APE_BEGIN_NAMESPACE

/// Paired data with a known latent structure. Each sample draws z ~ N(0, I_k);
/// its image embedding is normalize(A z + sigma * noise) and token t encodes
/// B_t z + sigma * noise, optionally passed through a fixed random invertible
/// nonlinearity tanh(R u). A, B_t and R depend only on the seed.
struct SyntheticConfig {
  std::uint32_t latent = 16;
  std::uint32_t d_img = 64;
  std::uint32_t d_tok = 64;
  std::uint32_t seq_len = 8;
  /// Valid positions per sample are uniform in [min_len, seq_len]; 0 = seq_len.
  std::uint32_t min_len = 0;
  std::uint32_t n_train = 4096;
  std::uint32_t n_test = 512;
  std::uint32_t n_variants = 1;
  double sigma = 0.05;
  bool nonlinear = false;
  /// Quantization levels per position for token ids (vocab = seq_len * bins).
  std::uint32_t bins = 16;
  /// Zero-shot task: classes with latent prototypes, `templates` prompts per
  /// class, `eval_per_class` labelled eval images. 0 classes disables it.
  std::uint32_t classes = 0;
  std::uint32_t templates = 4;
  std::uint32_t eval_per_class = 50;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  EmbeddingShard train;
  EmbeddingShard test;
  /// Present when classes > 0: template shard (sample_id = class index,
  /// class-major) and eval shard (sample_id = label).
  std::optional<EmbeddingShard> zs_templates;
  std::optional<EmbeddingShard> zs_eval;
  std::uint32_t vocab_size = 0;
};

SyntheticData gen_synthetic(const SyntheticConfig& config);

APE_END_NAMESPACE
