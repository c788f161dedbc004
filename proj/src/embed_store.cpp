// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/embed_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ape/error.hpp"

APE_BEGIN_NAMESPACE

namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void zeros(std::size_t n) { out_.insert(out_.end(), n, 0); }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  bool has(std::size_t n) const noexcept { return in_.size() - pos_ >= n; }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

[[noreturn]] void data_error(const std::string& msg) { throw DataError("shard: " + msg); }

std::string record_prefix(std::size_t index) {
  return "record " + std::to_string(index) + ": ";
}

std::uint64_t finish_checksum(std::uint64_t h) noexcept { return h == 0 ? 1 : h; }

}  // namespace

std::size_t SampleRecord::valid_positions() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t state) noexcept {
  for (auto b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::size_t mask_bytes(std::uint32_t max_seq) noexcept { return (max_seq + 7u) / 8u * 8u; }

std::size_t record_bytes(const ShardDims& dims, std::size_t n_tokens) noexcept {
  return 8 + 4ull * dims.max_seq * dims.d_tok + mask_bytes(dims.max_seq) +
         4ull * dims.n_variants * dims.d_img + 4 + 4 * n_tokens;
}

void validate_dims(const ShardDims& dims) {
  if (dims.d_img == 0 || dims.d_tok == 0 || dims.max_seq == 0 || dims.n_variants == 0) {
    data_error("all dimensions must be positive (d_img=" + std::to_string(dims.d_img) +
               ", d_tok=" + std::to_string(dims.d_tok) + ", max_seq=" +
               std::to_string(dims.max_seq) + ", n_variants=" +
               std::to_string(dims.n_variants) + ")");
  }
}

void validate_record(const SampleRecord& r, const ShardDims& dims, std::size_t index) {
  const auto p = record_prefix(index);
  if (r.token_encodings.size() != std::size_t{dims.max_seq} * dims.d_tok) {
    data_error(p + "token_encodings has " + std::to_string(r.token_encodings.size()) +
               " values, expected " + std::to_string(std::size_t{dims.max_seq} * dims.d_tok));
  }
  if (r.mask.size() != dims.max_seq) {
    data_error(p + "mask has " + std::to_string(r.mask.size()) + " entries, expected " +
               std::to_string(dims.max_seq));
  }
  if (r.image_embeddings.size() != std::size_t{dims.n_variants} * dims.d_img) {
    data_error(p + "image_embeddings has " + std::to_string(r.image_embeddings.size()) +
               " values, expected " + std::to_string(std::size_t{dims.n_variants} * dims.d_img));
  }
  std::size_t valid = 0;
  for (std::size_t t = 0; t < r.mask.size(); ++t) {
    if (r.mask[t] > 1) data_error(p + "mask byte " + std::to_string(t) + " is not 0/1");
    if (r.mask[t]) {
      ++valid;
      continue;
    }
    for (std::size_t k = 0; k < dims.d_tok; ++k) {
      if (r.token_encodings[t * dims.d_tok + k] != 0.0f) {
        data_error(p + "padding position " + std::to_string(t) + " carries a nonzero encoding");
      }
    }
  }
  if (valid == 0) data_error(p + "mask has no valid position");
  if (r.token_ids.size() != valid) {
    data_error(p + "n_tokens " + std::to_string(r.token_ids.size()) +
               " does not match " + std::to_string(valid) + " valid mask positions");
  }
  const auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(r.token_encodings.begin(), r.token_encodings.end(), finite)) {
    data_error(p + "non-finite token encoding");
  }
  if (!std::all_of(r.image_embeddings.begin(), r.image_embeddings.end(), finite)) {
    data_error(p + "non-finite image embedding");
  }
}

std::vector<std::uint8_t> encode_shard(const EmbeddingShard& shard) {
  validate_dims(shard.dims);
  const auto& dims = shard.dims;
  std::size_t total = kShardHeaderBytes;
  for (std::size_t i = 0; i < shard.records.size(); ++i) {
    validate_record(shard.records[i], dims, i);
    total += record_bytes(dims, shard.records[i].token_ids.size());
  }
  std::vector<std::uint8_t> out;
  out.reserve(total);
  ByteWriter w(out);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kShardMagic.data()), 4));
  w.u32(kShardVersion);
  w.u32(dims.d_img);
  w.u32(dims.d_tok);
  w.u32(dims.max_seq);
  w.u32(dims.n_variants);
  w.u64(shard.records.size());
  w.u64(0);  // checksum, patched below
  const std::size_t pad = mask_bytes(dims.max_seq) - dims.max_seq;
  for (const auto& r : shard.records) {
    w.u64(r.sample_id);
    for (float v : r.token_encodings) w.f32(v);
    w.bytes(r.mask);
    w.zeros(pad);
    for (float v : r.image_embeddings) w.f32(v);
    w.u32(static_cast<std::uint32_t>(r.token_ids.size()));
    for (auto id : r.token_ids) w.u32(id);
  }
  std::uint64_t h = fnv1a64(std::span(out).first(32));
  h = finish_checksum(fnv1a64(std::span(out).subspan(kShardHeaderBytes), h));
  for (int i = 0; i < 8; ++i) out[32 + i] = static_cast<std::uint8_t>(h >> (8 * i));
  return out;
}

EmbeddingShard decode_shard(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kShardHeaderBytes) {
    data_error("file of " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  }
  ByteReader rd(bytes);
  auto magic = rd.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kShardMagic.begin())) data_error("bad magic");
  const auto version = rd.u32();
  if (version != kShardVersion) data_error("unsupported version " + std::to_string(version));
  EmbeddingShard shard;
  shard.dims.d_img = rd.u32();
  shard.dims.d_tok = rd.u32();
  shard.dims.max_seq = rd.u32();
  shard.dims.n_variants = rd.u32();
  validate_dims(shard.dims);
  const std::uint64_t count = rd.u64();
  const std::uint64_t checksum = rd.u64();
  const auto& dims = shard.dims;

  const std::size_t min_record = record_bytes(dims, 0);
  if (count > 0 && rd.remaining() / count < min_record) {
    data_error("header declares " + std::to_string(count) + " records but only " +
               std::to_string(rd.remaining()) + " payload bytes follow");
  }
  shard.records.reserve(static_cast<std::size_t>(count));
  const std::size_t n_tok = std::size_t{dims.max_seq} * dims.d_tok;
  const std::size_t n_img = std::size_t{dims.n_variants} * dims.d_img;
  const std::size_t pad = mask_bytes(dims.max_seq) - dims.max_seq;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto p = record_prefix(static_cast<std::size_t>(i));
    if (!rd.has(min_record)) data_error(p + "truncated");
    SampleRecord r;
    r.sample_id = rd.u64();
    r.token_encodings.resize(n_tok);
    for (auto& v : r.token_encodings) v = rd.f32();
    auto m = rd.bytes(dims.max_seq);
    r.mask.assign(m.begin(), m.end());
    auto padding = rd.bytes(pad);
    if (std::any_of(padding.begin(), padding.end(), [](auto b) { return b != 0; })) {
      data_error(p + "nonzero mask padding");
    }
    r.image_embeddings.resize(n_img);
    for (auto& v : r.image_embeddings) v = rd.f32();
    const std::uint32_t n_tokens = rd.u32();
    if (n_tokens > dims.max_seq) {
      data_error(p + "n_tokens " + std::to_string(n_tokens) + " exceeds max_seq");
    }
    if (!rd.has(4ull * n_tokens)) data_error(p + "truncated token ids");
    r.token_ids.resize(n_tokens);
    for (auto& id : r.token_ids) id = rd.u32();
    validate_record(r, dims, static_cast<std::size_t>(i));
    shard.records.push_back(std::move(r));
  }
  if (rd.remaining() != 0) {
    data_error(std::to_string(rd.remaining()) + " trailing bytes after " +
               std::to_string(count) + " records");
  }
  if (checksum != 0) {
    std::uint64_t h = fnv1a64(bytes.first(32));
    h = finish_checksum(fnv1a64(bytes.subspan(kShardHeaderBytes), h));
    if (h != checksum) data_error("checksum mismatch");
  }
  return shard;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw DataError("short read on " + path.string());
  }
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_shard(const std::filesystem::path& path, const EmbeddingShard& shard) {
  write_file_atomic(path, encode_shard(shard));
}

EmbeddingShard read_shard(const std::filesystem::path& path) {
  try {
    return decode_shard(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> resolve_shard_set(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw DataError("shard set not found: " + path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".apes") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .apes shards in " + path.string());
  return files;
}

EmbeddingShard load_shard_set(const std::filesystem::path& path) {
  EmbeddingShard merged;
  bool first = true;
  for (const auto& file : resolve_shard_set(path)) {
    auto shard = read_shard(file);
    if (first) {
      merged.dims = shard.dims;
      first = false;
    } else if (!(shard.dims == merged.dims)) {
      throw DataError(file.string() + ": dimensions differ from earlier shards in the set");
    }
    std::move(shard.records.begin(), shard.records.end(), std::back_inserter(merged.records));
  }
  return merged;
}

void write_index_list(const std::filesystem::path& path, std::span<const std::uint64_t> ids) {
  std::ostringstream os;
  for (auto id : ids) os << id << '\n';
  const auto s = os.str();
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::uint64_t> read_index_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open index list " + path.string());
  std::vector<std::uint64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &used, 10);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size() || line.front() == '-') {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a sample id: " + line);
    }
    ids.push_back(v);
  }
  return ids;
}

APE_END_NAMESPACE
