// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Embedding shard format (little-endian):
//
//   header (40 bytes)
//     magic "APES" | version u32 = 1 | d_img u32 | d_tok u32 | max_seq u32
//     n_variants u32 | record_count u64 | reserved u64
//   record
//     sample_id u64
//     token_encodings  max_seq * d_tok f32
//     mask             max_seq u8, zero padded to a multiple of 8 bytes
//     image_embeddings n_variants * d_img f32
//     n_tokens u32 | token_ids n_tokens u32
//
// The reserved word holds an FNV-1a 64 checksum over header bytes [0, 32)
// followed by every record byte. Zero means "not checksummed" and is
// accepted from external writers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ape/real.hpp"

APE_BEGIN_NAMESPACE

inline constexpr std::array<char, 4> kShardMagic{'A', 'P', 'E', 'S'};
inline constexpr std::uint32_t kShardVersion = 1;
inline constexpr std::size_t kShardHeaderBytes = 40;

struct ShardDims {
  std::uint32_t d_img = 0;
  std::uint32_t d_tok = 0;
  std::uint32_t max_seq = 0;
  std::uint32_t n_variants = 1;

  friend bool operator==(const ShardDims&, const ShardDims&) = default;
};

struct SampleRecord {
  std::uint64_t sample_id = 0;
  std::vector<float> token_encodings;   // max_seq * d_tok, padding rows zero
  std::vector<std::uint8_t> mask;       // max_seq entries of 0/1
  std::vector<float> image_embeddings;  // n_variants * d_img
  std::vector<std::uint32_t> token_ids; // one per valid position

  std::size_t valid_positions() const noexcept;
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct EmbeddingShard {
  ShardDims dims;
  std::vector<SampleRecord> records;

  friend bool operator==(const EmbeddingShard&, const EmbeddingShard&) = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t state = 0xcbf29ce484222325ULL) noexcept;

std::size_t mask_bytes(std::uint32_t max_seq) noexcept;
std::size_t record_bytes(const ShardDims& dims, std::size_t n_tokens) noexcept;

/// Throws DataError naming `index` when the record does not conform to dims.
void validate_record(const SampleRecord& record, const ShardDims& dims, std::size_t index);
void validate_dims(const ShardDims& dims);

std::vector<std::uint8_t> encode_shard(const EmbeddingShard& shard);
/// Strict parse: any header/payload disagreement, trailing bytes, checksum
/// mismatch or malformed record raises DataError.
EmbeddingShard decode_shard(std::span<const std::uint8_t> bytes);

/// Atomic write (temp file + rename).
void write_shard(const std::filesystem::path& path, const EmbeddingShard& shard);
EmbeddingShard read_shard(const std::filesystem::path& path);

/// A shard set is either one file or a directory of *.apes files, loaded in
/// lexicographic order and concatenated.
std::vector<std::filesystem::path> resolve_shard_set(const std::filesystem::path& path);
EmbeddingShard load_shard_set(const std::filesystem::path& path);

void write_index_list(const std::filesystem::path& path, std::span<const std::uint64_t> ids);
std::vector<std::uint64_t> read_index_list(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

APE_END_NAMESPACE
