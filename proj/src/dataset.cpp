// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "ape/error.hpp"
#include "ape/rng.hpp"

APE_BEGIN_NAMESPACE

Batch assemble_batch(const ShardDims& dims, std::span<const SampleRecord* const> records,
                     std::span<const std::uint32_t> variants) {
  if (variants.size() != records.size()) {
    throw DimensionError("assemble_batch: " + std::to_string(records.size()) + " records but " +
                         std::to_string(variants.size()) + " variant choices");
  }
  const std::size_t n = records.size();
  const std::size_t per_tok = std::size_t{dims.max_seq} * dims.d_tok;
  Batch b;
  b.tokens = Tensor({n, dims.max_seq, dims.d_tok});
  b.images = Tensor({n, dims.d_img});
  b.mask.reserve(n * dims.max_seq);
  b.token_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& r = *records[i];
    if (variants[i] >= dims.n_variants) {
      throw RangeError("variant " + std::to_string(variants[i]) + " >= n_variants");
    }
    std::copy(r.token_encodings.begin(), r.token_encodings.end(),
              b.tokens.data().begin() + static_cast<std::ptrdiff_t>(i * per_tok));
    b.mask.insert(b.mask.end(), r.mask.begin(), r.mask.end());
    const auto img = r.image_embeddings.begin() +
                     static_cast<std::ptrdiff_t>(std::size_t{variants[i]} * dims.d_img);
    std::copy(img, img + dims.d_img, b.images.row(i));
    b.token_ids.push_back(r.token_ids);
    b.sample_ids.push_back(r.sample_id);
  }
  b.variants.assign(variants.begin(), variants.end());
  return b;
}

Batch slice_batch(const Batch& batch, std::size_t begin, std::size_t end) {
  const std::size_t seq = batch.size() ? batch.mask.size() / batch.size() : 0;
  Batch out;
  out.tokens = slice_rows(batch.tokens, begin, end);
  out.images = slice_rows(batch.images, begin, end);
  out.mask.assign(batch.mask.begin() + static_cast<std::ptrdiff_t>(begin * seq),
                  batch.mask.begin() + static_cast<std::ptrdiff_t>(end * seq));
  out.token_ids.assign(batch.token_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                       batch.token_ids.begin() + static_cast<std::ptrdiff_t>(end));
  out.sample_ids.assign(batch.sample_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                        batch.sample_ids.begin() + static_cast<std::ptrdiff_t>(end));
  out.variants.assign(batch.variants.begin() + static_cast<std::ptrdiff_t>(begin),
                      batch.variants.begin() + static_cast<std::ptrdiff_t>(end));
  out.short_batch = batch.short_batch;
  return out;
}

std::vector<const SampleRecord*> record_pool(const EmbeddingShard& shard) {
  std::vector<const SampleRecord*> pool;
  pool.reserve(shard.records.size());
  for (const auto& r : shard.records) pool.push_back(&r);
  return pool;
}

BatchSampler::BatchSampler(ShardDims dims, std::vector<const SampleRecord*> pool,
                           std::size_t batch_size, std::uint64_t seed, bool drop_last)
    : dims_(dims), pool_(std::move(pool)), batch_size_(batch_size), seed_(seed),
      drop_last_(drop_last) {
  if (batch_size_ == 0) throw ConfigError("batch size must be at least 1");
  if (pool_.empty()) throw ConfigError("cannot sample batches from an empty dataset");
  if (drop_last_ && batch_size_ > pool_.size()) {
    throw ConfigError("batch size " + std::to_string(batch_size_) + " exceeds the " +
                      std::to_string(pool_.size()) + " samples of an epoch");
  }
}

void BatchSampler::prepare_epoch() {
  if (prepared_epoch_ == cursor_.epoch) return;
  Rng rng(Rng::derive(seed_, cursor_.epoch, 0x5a4d));
  order_.resize(pool_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng.shuffle(std::span(order_));
  variants_.resize(pool_.size());
  for (auto& v : variants_) {
    v = dims_.n_variants == 1 ? 0 : static_cast<std::uint32_t>(rng.index(dims_.n_variants));
  }
  prepared_epoch_ = cursor_.epoch;
}

void BatchSampler::seek(Cursor c) {
  if (c.position > pool_.size()) {
    throw RangeError("sampler cursor position " + std::to_string(c.position) +
                     " beyond epoch of " + std::to_string(pool_.size()));
  }
  cursor_ = c;
}

std::optional<Batch> BatchSampler::next_in_epoch() {
  prepare_epoch();
  const std::size_t remaining = pool_.size() - static_cast<std::size_t>(cursor_.position);
  if (remaining == 0 || (remaining < batch_size_ && drop_last_)) {
    ++cursor_.epoch;
    cursor_.position = 0;
    return std::nullopt;
  }
  const std::size_t take = std::min(batch_size_, remaining);
  std::vector<const SampleRecord*> records(take);
  const auto begin = static_cast<std::size_t>(cursor_.position);
  for (std::size_t i = 0; i < take; ++i) records[i] = pool_[order_[begin + i]];
  Batch b = assemble_batch(
      dims_, records,
      std::span(variants_).subspan(begin, take));
  b.short_batch = take < batch_size_;
  cursor_.position += take;
  return b;
}

Batch BatchSampler::next() {
  for (;;) {
    if (auto b = next_in_epoch()) return std::move(*b);
  }
}

std::vector<std::uint64_t> mixture_counts(std::span<const std::uint64_t> weights,
                                          std::span<const std::size_t> sizes,
                                          std::uint64_t epoch_samples) {
  if (weights.size() != sizes.size() || weights.empty()) {
    throw ConfigError("mixture needs one weight per source and at least one source");
  }
  std::uint64_t total_weight = 0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    if (weights[s] > 0 && sizes[s] == 0) {
      throw ConfigError("mixture source " + std::to_string(s) + " is empty but has weight " +
                        std::to_string(weights[s]));
    }
    total_weight += weights[s];
  }
  if (total_weight == 0) throw ConfigError("mixture needs at least one positive weight");

  std::uint64_t total = epoch_samples;
  if (total == 0) {
    // Largest epoch where every source supplies its share without repeats.
    total = UINT64_MAX;
    for (std::size_t s = 0; s < weights.size(); ++s) {
      if (weights[s] == 0) continue;
      const auto cap = static_cast<std::uint64_t>(
          static_cast<unsigned __int128>(sizes[s]) * total_weight / weights[s]);
      total = std::min(total, cap);
    }
  }
  std::vector<std::uint64_t> counts(weights.size());
  std::vector<std::pair<std::uint64_t, std::size_t>> remainders;
  std::uint64_t assigned = 0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    const auto exact = static_cast<unsigned __int128>(total) * weights[s];
    counts[s] = static_cast<std::uint64_t>(exact / total_weight);
    remainders.emplace_back(static_cast<std::uint64_t>(exact % total_weight), s);
    assigned += counts[s];
  }
  // Largest remainder first, ties to the lower source index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

std::vector<std::vector<std::size_t>> draw_mixture_subsets(std::span<const std::uint64_t> counts,
                                                           std::span<const std::size_t> sizes,
                                                           std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> subsets(counts.size());
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] == 0) continue;
    Rng rng(Rng::derive(seed, s, 0x5b5e7));
    std::vector<std::size_t> all(sizes[s]);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto& out = subsets[s];
    out.reserve(static_cast<std::size_t>(counts[s]));
    std::uint64_t left = counts[s];
    while (left >= sizes[s]) {
      out.insert(out.end(), all.begin(), all.end());
      left -= sizes[s];
    }
    if (left > 0) {
      // Partial Fisher-Yates: the first `left` slots form the subset.
      for (std::size_t i = 0; i < left; ++i) {
        std::swap(all[i], all[i + rng.index(all.size() - i)]);
      }
      std::vector<std::size_t> part(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(left));
      std::sort(part.begin(), part.end());
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  return subsets;
}

std::vector<MixtureEntry> mixture_epoch(const std::vector<std::vector<std::size_t>>& subsets,
                                        std::uint64_t seed, std::uint64_t epoch) {
  std::vector<MixtureEntry> schedule;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    for (auto idx : subsets[s]) schedule.push_back({static_cast<std::uint32_t>(s), idx});
  }
  Rng rng(Rng::derive(seed, epoch, 0x313));
  rng.shuffle(std::span(schedule));
  return schedule;
}

APE_END_NAMESPACE
