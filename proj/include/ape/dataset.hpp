// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ape/embed_store.hpp"
#include "ape/tensor.hpp"

APE_BEGIN_NAMESPACE

/// One training batch assembled from shard records.
struct Batch {
  Tensor tokens;                    // B x max_seq x d_tok
  std::vector<std::uint8_t> mask;   // B * max_seq
  Tensor images;                    // B x d_img (the drawn variant)
  std::vector<std::vector<std::uint32_t>> token_ids;
  std::vector<std::uint64_t> sample_ids;
  std::vector<std::uint32_t> variants;
  bool short_batch = false;

  std::size_t size() const noexcept { return sample_ids.size(); }
};

Batch assemble_batch(const ShardDims& dims, std::span<const SampleRecord* const> records,
                     std::span<const std::uint32_t> variants);
/// Samples [begin, end) of a batch, used to form micro-batches.
Batch slice_batch(const Batch& batch, std::size_t begin, std::size_t end);

/// Epoch-based sampler without replacement. Each epoch's order and the image
/// variant drawn for every appearance are derived from (seed, epoch), so the
/// stream can be restarted from a cursor.
class BatchSampler {
 public:
  struct Cursor {
    std::uint64_t epoch = 0;
    std::uint64_t position = 0;
    friend bool operator==(const Cursor&, const Cursor&) = default;
  };

  BatchSampler(ShardDims dims, std::vector<const SampleRecord*> pool, std::size_t batch_size,
               std::uint64_t seed, bool drop_last);

  /// Next batch of the current epoch, or nullopt once it is exhausted (the
  /// sampler then moves to the next epoch). With drop_last=false the final
  /// partial batch is returned with `short_batch` set.
  std::optional<Batch> next_in_epoch();
  /// Like next_in_epoch but rolls into a fresh epoch as needed.
  Batch next();

  Cursor cursor() const noexcept { return cursor_; }
  void seek(Cursor c);
  std::size_t epoch_size() const noexcept { return pool_.size(); }
  const ShardDims& dims() const noexcept { return dims_; }

 private:
  void prepare_epoch();

  ShardDims dims_;
  std::vector<const SampleRecord*> pool_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
  Cursor cursor_;
  std::uint64_t prepared_epoch_ = UINT64_MAX;
  std::vector<std::size_t> order_;
  std::vector<std::uint32_t> variants_;
};

/// Convenience wrapper over every record of a shard.
std::vector<const SampleRecord*> record_pool(const EmbeddingShard& shard);

struct MixtureSource {
  std::string path;
  std::uint64_t weight = 1;
};

struct MixtureSpec {
  std::vector<MixtureSource> sources;
  /// 0 = the largest epoch in which no source has to repeat samples.
  std::uint64_t epoch_samples = 0;
};

/// Per-source sample counts for one epoch, proportional to the weights with
/// largest-remainder rounding (each count is within 1 of the exact share).
std::vector<std::uint64_t> mixture_counts(std::span<const std::uint64_t> weights,
                                          std::span<const std::size_t> sizes,
                                          std::uint64_t epoch_samples);

/// Fixed per-run subset of each source: counts[s] record indices drawn without
/// replacement (whole copies first when a count exceeds the source size).
std::vector<std::vector<std::size_t>> draw_mixture_subsets(std::span<const std::uint64_t> counts,
                                                           std::span<const std::size_t> sizes,
                                                           std::uint64_t seed);

struct MixtureEntry {
  std::uint32_t source = 0;
  std::size_t index = 0;
};

/// One epoch's shuffled schedule over the fixed subsets.
std::vector<MixtureEntry> mixture_epoch(const std::vector<std::vector<std::size_t>>& subsets,
                                        std::uint64_t seed, std::uint64_t epoch);

APE_END_NAMESPACE
