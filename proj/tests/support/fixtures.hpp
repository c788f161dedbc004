// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Random shards, batches and models shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <vector>

#include "ape/align_head.hpp"
#include "ape/contrastive.hpp"
#include "ape/dataset.hpp"
#include "ape/embed_store.hpp"
#include "ape/gradcheck.hpp"
#include "ape/rng.hpp"

namespace fixtures {

/// Records with random token encodings, random masks (at least one valid
/// position), ids in [0, vocab) and unit-ish image vectors.
inline ape::EmbeddingShard random_shard(const ape::ShardDims& dims, std::size_t n, std::uint64_t seed,
                                        std::uint32_t vocab = 50, bool full_mask = false) {
  ape::Rng rng(seed);
  ape::EmbeddingShard shard;
  shard.dims = dims;
  for (std::size_t i = 0; i < n; ++i) {
    ape::SampleRecord r;
    r.sample_id = i;
    r.mask.assign(dims.max_seq, 0);
    const std::size_t valid = full_mask ? dims.max_seq : 1 + rng.index(dims.max_seq);
    for (std::size_t t = 0; t < valid; ++t) r.mask[t] = 1;
    if (!full_mask) rng.shuffle(std::span(r.mask));
    r.token_encodings.assign(std::size_t(dims.max_seq) * dims.d_tok, 0.0f);
    for (std::size_t t = 0; t < dims.max_seq; ++t) {
      if (!r.mask[t]) continue;
      for (std::size_t c = 0; c < dims.d_tok; ++c)
        r.token_encodings[t * dims.d_tok + c] = static_cast<float>(rng.normal());
      r.token_ids.push_back(static_cast<std::uint32_t>(rng.index(vocab)));
    }
    r.image_embeddings.resize(std::size_t(dims.n_variants) * dims.d_img);
    for (auto& x : r.image_embeddings) x = static_cast<float>(rng.normal());
    shard.records.push_back(std::move(r));
  }
  return shard;
}

inline ape::Batch whole_batch(const ape::EmbeddingShard& shard) {
  const auto pool = ape::record_pool(shard);
  std::vector<std::uint32_t> variants(pool.size(), 0);
  return ape::assemble_batch(shard.dims, pool, variants);
}

/// Worst relative error over every parameter of `model` between the tape
/// gradient of the contrastive loss and central differences of the loss.
inline double pipeline_grad_error(ape::AlignmentModel& model, const ape::Batch& batch, double eps) {
  ape::loss_and_grads(model, batch);
  double worst = 0;
  for (ape::Parameter* p : model.parameters()) {
    const ape::Tensor analytic = p->grad;
    auto f = [&] { return ape::evaluate_loss(model, batch); };
    worst = std::max(worst, ape::finite_difference_check(f, p->value, analytic, eps).max_rel_error);
  }
  return worst;
}

/// Parameters of the model are perturbed away from their (small) init so the
/// loss is not sitting at the uniform point where gradients are tiny.
inline void spread_parameters(ape::AlignmentModel& model, std::uint64_t seed, double scale = 0.5) {
  ape::Rng rng(seed);
  for (ape::Parameter* p : model.parameters()) {
    if (p == &model.temperature().log_scale) continue;
    for (auto& x : p->value.data()) x += static_cast<ape::real>(scale * rng.normal() / std::sqrt(double(p->value.rows())));
  }
}

}  // namespace fixtures
