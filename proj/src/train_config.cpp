// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/train_config.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "ape/error.hpp"

APE_BEGIN_NAMESPACE

namespace {

struct Field {
  std::string key;
  bool semantic;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

Field int_field(std::string key, std::int64_t TrainConfig::*m, bool semantic = true) {
  return {std::move(key), semantic,
          [m](TrainConfig& c, const std::string& raw) { c.*m = toml::parse_int(raw); },
          [m](const TrainConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(std::string key, double TrainConfig::*m, bool semantic = true) {
  return {std::move(key), semantic,
          [m](TrainConfig& c, const std::string& raw) { c.*m = toml::parse_double(raw); },
          [m](const TrainConfig& c) { return toml::format_double(c.*m); }};
}

Field bool_field(std::string key, bool TrainConfig::*m, bool semantic = true) {
  return {std::move(key), semantic,
          [m](TrainConfig& c, const std::string& raw) { c.*m = toml::parse_bool(raw); },
          [m](const TrainConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field string_field(std::string key, std::string TrainConfig::*m, bool semantic = true) {
  return {std::move(key), semantic,
          [m](TrainConfig& c, const std::string& raw) { c.*m = toml::parse_string(raw); },
          [m](const TrainConfig& c) { return toml::quote(c.*m); }};
}

Field list_field(std::string key, std::vector<std::string> TrainConfig::*m, bool semantic = true) {
  return {std::move(key), semantic,
          [m](TrainConfig& c, const std::string& raw) {
            // A bare string is accepted as a one-element list.
            c.*m = raw.starts_with("\"") ? std::vector<std::string>{toml::parse_string(raw)}
                                         : toml::parse_string_array(raw);
          },
          [m](const TrainConfig& c) { return toml::format_string_array(c.*m); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("head", &TrainConfig::head),
      int_field("layers", &TrainConfig::layers),
      int_field("hidden", &TrainConfig::hidden),
      int_field("d_out", &TrainConfig::d_out),
      int_field("vocab_size", &TrainConfig::vocab_size),
      bool_field("image_head", &TrainConfig::image_head),
      int_field("image_layers", &TrainConfig::image_layers),
      int_field("image_hidden", &TrainConfig::image_hidden),
      double_field("init_log_scale", &TrainConfig::init_log_scale),
      double_field("max_scale", &TrainConfig::max_scale),
      int_field("batch_size", &TrainConfig::batch_size),
      int_field("accum", &TrainConfig::accum),
      int_field("memory_budget", &TrainConfig::memory_budget, false),
      int_field("steps", &TrainConfig::steps),
      int_field("warmup_steps", &TrainConfig::warmup_steps),
      double_field("lr", &TrainConfig::lr),
      double_field("weight_decay", &TrainConfig::weight_decay),
      double_field("beta1", &TrainConfig::beta1),
      double_field("beta2", &TrainConfig::beta2),
      double_field("eps", &TrainConfig::eps),
      list_field("train_data", &TrainConfig::train_data),
      int_field("epoch_samples", &TrainConfig::epoch_samples),
      bool_field("drop_last", &TrainConfig::drop_last),
      string_field("val_data", &TrainConfig::val_data, false),
      string_field("recall_direction", &TrainConfig::recall_direction, false),
      list_field("zeroshot", &TrainConfig::zeroshot, false),
      int_field("seed", &TrainConfig::seed),
      int_field("data_seed", &TrainConfig::data_seed),
      int_field("eval_every", &TrainConfig::eval_every, false),
      int_field("checkpoint_every", &TrainConfig::checkpoint_every, false),
      string_field("run_dir", &TrainConfig::run_dir, false),
      bool_field("strict", &TrainConfig::strict, false),
      int_field("threads", &TrainConfig::threads, false),
  };
  return table;
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KeyValueFile& kv, bool validate) {
  TrainConfig c;
  for (const auto& key : kv.keys()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(kv.origin() + ": unknown key '" + key + "'");
    try {
      it->set(c, kv.raw(key));
    } catch (const ConfigError& e) {
      throw ConfigError(kv.origin() + ": key '" + key + "': " + e.what());
    }
  }
  if (validate) c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
  auto kv = path.empty() ? KeyValueFile::parse("", "<overrides>") : KeyValueFile::load(path);
  for (const auto& o : overrides) kv.apply_override(o);
  return from_kv(kv);
}

TrainConfig TrainConfig::parse(const std::string& text) {
  return from_kv(KeyValueFile::parse(text));
}

std::string TrainConfig::to_toml() const {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
  return os.str();
}

std::string TrainConfig::semantic_toml() const {
  std::ostringstream os;
  for (const auto& f : fields()) {
    if (f.semantic) os << f.key << " = " << f.get(*this) << '\n';
  }
  return os.str();
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (head != "mlp" && head != "lookup") fail("head must be mlp or lookup");
  if (head == "mlp" && (layers < 1 || layers > 8)) fail("layers must lie in [1, 8]");
  if (hidden < 0 || d_out < 0 || vocab_size < 0 || image_hidden < 0) fail("negative width");
  if (image_head && image_layers < 1) fail("image_layers must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (accum < 1) fail("accum must be at least 1");
  if (batch_size % accum != 0) {
    fail("accum " + std::to_string(accum) + " does not divide batch_size " +
         std::to_string(batch_size));
  }
  if (batch_size / accum > memory_budget) {
    fail("micro-batch of " + std::to_string(batch_size / accum) + " exceeds memory_budget " +
         std::to_string(memory_budget) + "; raise accum");
  }
  if (steps < 0) fail("steps must be nonnegative");
  if (steps > 0 && (warmup_steps < 0 || warmup_steps >= steps)) {
    fail("warmup_steps must satisfy 0 <= warmup_steps < steps");
  }
  if (!(lr >= 0)) fail("lr must be nonnegative");
  if (!(weight_decay >= 0)) fail("weight_decay must be nonnegative");
  if (!(max_scale > 0)) fail("max_scale must be positive");
  if (epoch_samples < 0) fail("epoch_samples must be nonnegative");
  if (eval_every < 1) fail("eval_every must be at least 1");
  if (steps > 0 && steps < eval_every) fail("steps must be at least eval_every");
  if (checkpoint_every < 0) fail("checkpoint_every must be nonnegative");
  if (threads < 1) fail("threads must be at least 1");
  if (seed < 0 || data_seed < 0) fail("seeds must be nonnegative");
  if (recall_direction != "i2t" && recall_direction != "t2i" && recall_direction != "mean") {
    fail("recall_direction must be i2t, t2i or mean");
  }
}

std::vector<std::string> semantic_diff(const TrainConfig& a, const TrainConfig& b) {
  std::vector<std::string> out;
  for (const auto& f : fields()) {
    if (!f.semantic) continue;
    const auto va = f.get(a);
    const auto vb = f.get(b);
    if (va != vb) out.push_back(f.key + ": " + va + " -> " + vb);
  }
  return out;
}

std::vector<std::string> train_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

APE_END_NAMESPACE
