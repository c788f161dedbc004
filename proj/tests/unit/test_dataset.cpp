// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <set>

#include "ape/dataset.hpp"
#include "ape/error.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace ape;

namespace {

std::vector<std::uint64_t> ids_of(const Batch& b) { return b.sample_ids; }

}  // namespace

TEST_CASE("a full-epoch batch holds every sample exactly once") {
  const auto shard = fixtures::random_shard({3, 2, 4, 1}, 10, 1);
  BatchSampler s({3, 2, 4, 1}, record_pool(shard), 10, 7, true);
  const Batch b = s.next();
  auto ids = ids_of(b);
  std::sort(ids.begin(), ids.end());
  for (std::uint64_t i = 0; i < 10; ++i) CHECK(ids[i] == i);
  CHECK(std::all_of(b.variants.begin(), b.variants.end(), [](auto v) { return v == 0; }));
  CHECK(!b.short_batch);
}

TEST_CASE("batch tensors carry the drawn records") {
  const ShardDims dims{3, 2, 4, 2};
  const auto shard = fixtures::random_shard(dims, 6, 2);
  BatchSampler s(dims, record_pool(shard), 3, 11, true);
  const Batch b = s.next();
  CHECK(b.tokens.shape() == Shape{3, 4, 2});
  CHECK(b.images.shape() == Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = shard.records[b.sample_ids[i]];
    CHECK(b.variants[i] < 2);
    for (std::size_t c = 0; c < 3; ++c) CHECK(b.images.row(i)[c] == r.image_embeddings[b.variants[i] * 3 + c]);
    for (std::size_t k = 0; k < 8; ++k) CHECK(b.tokens.row(i * 4)[k] == r.token_encodings[k]);
    CHECK(b.token_ids[i] == r.token_ids);
  }
  const Batch tail = slice_batch(b, 1, 3);
  CHECK(tail.size() == 2);
  CHECK(tail.sample_ids[0] == b.sample_ids[1]);
}

TEST_CASE("multiple variants are all drawn over several epochs") {
  const ShardDims dims{2, 2, 2, 3};
  const auto shard = fixtures::random_shard(dims, 4, 3);
  BatchSampler s(dims, record_pool(shard), 4, 5, true);
  std::set<std::uint32_t> seen;
  for (int e = 0; e < 10; ++e)
    for (auto v : s.next().variants) seen.insert(v);
  CHECK(seen == std::set<std::uint32_t>{0, 1, 2});
}

TEST_CASE("sampler is deterministic and resumable") {
  const ShardDims dims{3, 2, 4, 2};
  const auto shard = fixtures::random_shard(dims, 23, 4);
  BatchSampler a(dims, record_pool(shard), 5, 13, true), b(dims, record_pool(shard), 5, 13, true);
  std::vector<std::vector<std::uint64_t>> seq;
  BatchSampler::Cursor mid;
  for (int i = 0; i < 12; ++i) {
    if (i == 7) mid = a.cursor();
    const Batch x = a.next(), y = b.next();
    CHECK(x.sample_ids == y.sample_ids);
    CHECK(x.variants == y.variants);
    seq.push_back(x.sample_ids);
  }
  BatchSampler c(dims, record_pool(shard), 5, 13, true);
  c.seek(mid);
  for (int i = 7; i < 12; ++i) CHECK(c.next().sample_ids == seq[i]);

  BatchSampler other(dims, record_pool(shard), 5, 14, true);
  CHECK(other.next().sample_ids != seq[0]);
}

TEST_CASE("each epoch is a permutation without replacement") {
  const auto shard = fixtures::random_shard({2, 2, 2, 1}, 20, 5);
  BatchSampler s({2, 2, 2, 1}, record_pool(shard), 6, 1, true);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::uint64_t> seen;
    int batches = 0;
    while (auto b = s.next_in_epoch()) {
      seen.insert(b->sample_ids.begin(), b->sample_ids.end());
      ++batches;
    }
    CHECK(batches == 3);  // 20 / 6, remainder dropped
    CHECK(seen.size() == 18);
    CHECK(std::set<std::uint64_t>(seen.begin(), seen.end()).size() == 18);
  }
}

TEST_CASE("drop_last=false yields a flagged short batch") {
  const auto shard = fixtures::random_shard({2, 2, 2, 1}, 7, 6);
  BatchSampler s({2, 2, 2, 1}, record_pool(shard), 3, 1, false);
  std::vector<std::size_t> sizes;
  std::vector<bool> flags;
  while (auto b = s.next_in_epoch()) {
    sizes.push_back(b->size());
    flags.push_back(b->short_batch);
  }
  CHECK(sizes == std::vector<std::size_t>{3, 3, 1});
  CHECK(flags == std::vector<bool>{false, false, true});
}

TEST_CASE("sampler rejects a batch larger than the pool") {
  const auto shard = fixtures::random_shard({2, 2, 2, 1}, 3, 6);
  CHECK_THROWS_AS(BatchSampler({2, 2, 2, 1}, record_pool(shard), 4, 1, true), ConfigError);
}

TEST_CASE("mixture weights (1, 0) draw only from the first source") {
  const std::vector<std::uint64_t> w{1, 0};
  const std::vector<std::size_t> sizes{100, 50};
  const auto counts = mixture_counts(w, sizes, 0);
  CHECK(counts == std::vector<std::uint64_t>{100, 0});
  const auto sub = draw_mixture_subsets(counts, sizes, 1);
  const auto epoch = mixture_epoch(sub, 1, 0);
  CHECK(std::all_of(epoch.begin(), epoch.end(), [](auto e) { return e.source == 0; }));
}

TEST_CASE("mixture 2:1 with a capped second source") {
  const std::vector<std::uint64_t> w{2, 1};
  const std::vector<std::size_t> sizes{1'000'000, 446'000};
  for (std::uint64_t total : {0ull, 1'500'000ull, 999ull}) {
    const auto c = mixture_counts(w, sizes, total);
    const double t = double(c[0] + c[1]);
    CHECK(std::abs(double(c[0]) - 2.0 * t / 3.0) <= 1.0);
    CHECK(std::abs(double(c[1]) - t / 3.0) <= 1.0);
    if (total) CHECK(c[0] + c[1] == total);
  }
  // Auto epoch: the largest one with no repeats; the smaller source binds.
  const auto c = mixture_counts(w, sizes, 0);
  CHECK(c[1] == 446'000);
  CHECK(c[0] == 892'000);
}

TEST_CASE("mixture 51:2 realised within one sample") {
  const std::vector<std::uint64_t> w{51, 2};
  const std::vector<std::size_t> sizes{10'000'000, 1'000'000};
  for (std::uint64_t total : {53ull, 1000ull, 123457ull}) {
    const auto c = mixture_counts(w, sizes, total);
    CHECK(c[0] + c[1] == total);
    CHECK(std::abs(double(c[0]) - 51.0 * double(total) / 53.0) <= 1.0);
    CHECK(std::abs(double(c[1]) - 2.0 * double(total) / 53.0) <= 1.0);
  }
}

TEST_CASE("mixture subsets: fixed, without replacement, whole copies when oversampling") {
  const std::vector<std::uint64_t> counts{7, 25};
  const std::vector<std::size_t> sizes{20, 10};
  const auto a = draw_mixture_subsets(counts, sizes, 9), b = draw_mixture_subsets(counts, sizes, 9);
  CHECK(a == b);
  CHECK(a[0].size() == 7);
  CHECK(std::set<std::size_t>(a[0].begin(), a[0].end()).size() == 7);
  std::map<std::size_t, int> reps;
  for (auto i : a[1]) ++reps[i];
  CHECK(reps.size() == 10);
  for (auto [i, n] : reps) CHECK((n == 2 || n == 3));
  int threes = 0;
  for (auto [i, n] : reps) threes += n == 3;
  CHECK(threes == 5);
  // Epoch schedules reshuffle the same multiset.
  const auto e0 = mixture_epoch(a, 4, 0), e1 = mixture_epoch(a, 4, 1);
  CHECK(e0.size() == 32);
  auto key = [](const MixtureEntry& e) { return std::pair(e.source, e.index); };
  std::multiset<std::pair<std::uint32_t, std::size_t>> s0, s1;
  for (auto& e : e0) s0.insert(key(e));
  for (auto& e : e1) s1.insert(key(e));
  CHECK(s0 == s1);
  bool same_order = true;
  for (std::size_t i = 0; i < e0.size(); ++i) same_order &= key(e0[i]) == key(e1[i]);
  CHECK(!same_order);
}

TEST_CASE("mixture errors") {
  const std::vector<std::uint64_t> w{0, 0};
  const std::vector<std::size_t> sizes{3, 3};
  CHECK_THROWS_AS(mixture_counts(w, sizes, 0), ConfigError);
  const std::vector<std::uint64_t> w1{1};
  const std::vector<std::size_t> empty{0};
  CHECK_THROWS_AS(mixture_counts(w1, empty, 0), ConfigError);
}
