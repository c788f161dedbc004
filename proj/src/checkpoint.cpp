// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/checkpoint.hpp"

#include <algorithm>
#include <bit>

#include "ape/embed_store.hpp"

APE_BEGIN_NAMESPACE

namespace {

constexpr char kMagic[4] = {'A', 'P', 'E', 'C'};

struct Writer {
  std::vector<std::uint8_t> out;

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tensor(const Tensor& t) {
    for (real v : t.data()) f32(static_cast<float>(v));
  }
  void widths(const std::vector<std::size_t>& w) {
    u32(static_cast<std::uint32_t>(w.size()));
    for (auto x : w) u32(static_cast<std::uint32_t>(x));
  }
};

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (in.size() - pos < n) throw DataError("checkpoint: truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Tensor tensor(const Shape& shape) {
    const std::size_t n = shape_numel(shape);
    need(4 * n);
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<real>(f32());
    return t;
  }
  std::vector<std::size_t> widths() {
    const auto n = u32();
    if (n > 64) throw DataError("checkpoint: implausible layer count " + std::to_string(n));
    std::vector<std::size_t> w(n);
    for (auto& x : w) x = u32();
    return w;
  }
};

std::vector<Shape> parameter_shapes(const HeadConfig& head) {
  AlignmentModel probe(head);
  std::vector<Shape> shapes;
  for (auto* p : probe.parameters()) shapes.push_back(p->value.shape());
  return shapes;
}

}  // namespace

Checkpoint snapshot(AlignmentModel& model, const AdamW* optimizer, const TrainerState* trainer,
                    std::string run_config) {
  Checkpoint c;
  c.head = model.config();
  c.run_config = std::move(run_config);
  for (auto* p : model.parameters()) c.params.push_back(p->value);
  if (optimizer) {
    OptimizerState s;
    s.t = optimizer->steps();
    s.m = optimizer->first_moments();
    s.v = optimizer->second_moments();
    c.optimizer = std::move(s);
  }
  if (trainer) c.trainer = *trainer;
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const auto shapes = parameter_shapes(c.head);
  if (c.params.size() != shapes.size()) {
    throw DimensionError("checkpoint: " + std::to_string(c.params.size()) +
                         " parameter tensors for an architecture with " +
                         std::to_string(shapes.size()));
  }
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.head.kind));
  w.u32(static_cast<std::uint32_t>(c.head.d_out));
  w.u32(static_cast<std::uint32_t>(c.head.d_img));
  w.u32(static_cast<std::uint32_t>(c.head.vocab));
  w.widths(c.head.text_widths);
  w.widths(c.head.image_widths);
  w.f32(static_cast<float>(c.params.back().item()));
  w.f64(c.head.init_log_scale);
  w.f64(c.head.max_scale);
  w.u32(static_cast<std::uint32_t>(c.run_config.size()));
  w.out.insert(w.out.end(), c.run_config.begin(), c.run_config.end());
  for (std::size_t i = 0; i + 1 < c.params.size(); ++i) {
    if (c.params[i].shape() != shapes[i]) {
      throw DimensionError("checkpoint: parameter " + std::to_string(i) + " has shape " +
                           shape_to_string(c.params[i].shape()) + ", expected " +
                           shape_to_string(shapes[i]));
    }
    w.tensor(c.params[i]);
  }
  w.u32(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    w.u64(c.optimizer->t);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      w.tensor(c.optimizer->m.at(i));
      w.tensor(c.optimizer->v.at(i));
    }
  }
  w.u32(c.trainer ? 1 : 0);
  if (c.trainer) {
    const auto& t = *c.trainer;
    w.u64(t.step);
    w.u64(t.sampler_epoch);
    w.u64(t.sampler_position);
    w.f64(t.loss_sum);
    w.u64(t.loss_count);
    w.f64(t.best_recall);
    w.u64(t.best_step);
    w.f64(t.wall_time_s);
  }
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  r.need(8);
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw DataError("checkpoint: bad magic");
  r.pos = 4;
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  }
  Checkpoint c;
  const auto kind = r.u32();
  if (kind > 1) throw DataError("checkpoint: unknown head kind " + std::to_string(kind));
  c.head.kind = static_cast<HeadKind>(kind);
  c.head.d_out = r.u32();
  c.head.d_img = r.u32();
  c.head.vocab = r.u32();
  c.head.text_widths = r.widths();
  c.head.image_widths = r.widths();
  const float log_scale = r.f32();
  c.head.init_log_scale = r.f64();
  c.head.max_scale = r.f64();
  const auto cfg_len = r.u32();
  r.need(cfg_len);
  c.run_config.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), cfg_len);
  r.pos += cfg_len;

  std::vector<Shape> shapes;
  try {
    shapes = parameter_shapes(c.head);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: inconsistent config block: ") + e.what());
  }
  for (std::size_t i = 0; i + 1 < shapes.size(); ++i) c.params.push_back(r.tensor(shapes[i]));
  c.params.push_back(Tensor::scalar(static_cast<real>(log_scale)));

  if (const auto flag = r.u32(); flag > 1) {
    throw DataError("checkpoint: bad optimizer flag");
  } else if (flag == 1) {
    OptimizerState s;
    s.t = r.u64();
    for (const auto& shape : shapes) {
      s.m.push_back(r.tensor(shape));
      s.v.push_back(r.tensor(shape));
    }
    c.optimizer = std::move(s);
  }
  if (const auto flag = r.u32(); flag > 1) {
    throw DataError("checkpoint: bad trainer flag");
  } else if (flag == 1) {
    TrainerState t;
    t.step = r.u64();
    t.sampler_epoch = r.u64();
    t.sampler_position = r.u64();
    t.loss_sum = r.f64();
    t.loss_count = r.u64();
    t.best_recall = r.f64();
    t.best_step = r.u64();
    t.wall_time_s = r.f64();
    c.trainer = t;
  }
  if (r.pos != bytes.size()) {
    throw DataError("checkpoint: " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

AlignmentModel restore_model(const Checkpoint& ckpt) {
  AlignmentModel model(ckpt.head);
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = ckpt.params.at(i);
    params[i]->zero_grad();
  }
  return model;
}

void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt) {
  if (!ckpt.optimizer) throw ConfigError("checkpoint carries no optimizer state");
  auto& m = optimizer.first_moments();
  auto& v = optimizer.second_moments();
  if (m.size() != ckpt.optimizer->m.size()) {
    throw ConfigError("optimizer state does not match the model's parameters");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = ckpt.optimizer->m[i];
    v[i] = ckpt.optimizer->v[i];
  }
  optimizer.set_steps(ckpt.optimizer->t);
}

APE_END_NAMESPACE
