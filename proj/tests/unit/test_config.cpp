// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "ape/config.hpp"
#include "ape/error.hpp"
#include "ape/train_config.hpp"
#include "doctest.h"

using namespace ape;

TEST_CASE("flat TOML values") {
  const auto kv = KeyValueFile::parse(R"(
# comment
name = "a \"quoted\" string"  # trailing comment
count = 42
neg = -7
rate = 3e-4
flag = true
list = [
  "x",  # inside
  "y#z",
]
nums = [1, 2.5, -3]
)");
  CHECK(toml::parse_string(kv.raw("name")) == "a \"quoted\" string");
  CHECK(toml::parse_int(kv.raw("count")) == 42);
  CHECK(toml::parse_int(kv.raw("neg")) == -7);
  CHECK(toml::parse_double(kv.raw("rate")) == 3e-4);
  CHECK(toml::parse_bool(kv.raw("flag")));
  CHECK(toml::parse_string_array(kv.raw("list")) == std::vector<std::string>{"x", "y#z"});
  CHECK(toml::parse_double_array(kv.raw("nums")) == std::vector<double>{1, 2.5, -3});
  CHECK(kv.keys().size() == 7);
}

TEST_CASE("malformed files") {
  CHECK_THROWS_AS(KeyValueFile::parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("[table]\na = 1\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("a = \n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("a = [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("just words\n"), ConfigError);
  CHECK_THROWS_AS(toml::parse_int("1.5"), ConfigError);
  CHECK_THROWS_AS(toml::parse_bool("yes"), ConfigError);
}

TEST_CASE("doubles format to the shortest round-tripping literal") {
  for (double v : {0.0, 1.0, 1e-3, 3e-4, 0.1, 2.659260036932778, 1e300, -5.5}) {
    const auto s = toml::format_double(v);
    CHECK(toml::parse_double(s) == v);
  }
  CHECK(toml::format_double(1.0) == "1.0");
  CHECK(toml::format_double(1e-3) == "0.001");
}

TEST_CASE("train config: defaults, overrides and unknown keys") {
  const auto c = TrainConfig::parse("steps = 20\nwarmup_steps = 2\neval_every = 10\nlr = 3e-4\ntrain_data = [\"a.apes\"]\n");
  CHECK(c.steps == 20);
  CHECK(c.lr == 3e-4);
  CHECK(c.layers == 4);
  CHECK(c.train_data == std::vector<std::string>{"a.apes"});
  CHECK_THROWS_AS(TrainConfig::parse("stepz = 20\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("steps = 20\nwarmup_steps = 2\n"), ConfigError);  // eval_every 100 > steps
  CHECK_NOTHROW(TrainConfig::parse("steps = 0\n"));
  CHECK_THROWS_AS(TrainConfig::parse("steps = \"twenty\"\n"), ConfigError);

  KeyValueFile kv = KeyValueFile::parse("steps = 20\nwarmup_steps = 2\neval_every = 5\nhead = \"mlp\"\n");
  kv.apply_override("head=lookup");
  kv.apply_override("steps=30");
  kv.apply_override("train_data=[\"x\",\"y@2\"]");
  const auto o = TrainConfig::from_kv(kv);
  CHECK(o.head == "lookup");
  CHECK(o.steps == 30);
  CHECK(o.train_data.size() == 2);
  CHECK_THROWS_AS(kv.apply_override("no_equals_sign"), ConfigError);
}

TEST_CASE("resolved config round-trips") {
  TrainConfig c;
  c.lr = 1.234e-4;
  c.train_data = {"a b.apes", "c@3"};
  c.zeroshot = {"n|e.apes|t.apes"};
  c.image_head = true;
  c.run_dir = "runs/\"odd\"";
  CHECK(TrainConfig::parse(c.to_toml()) == c);
  CHECK(TrainConfig::parse(TrainConfig{}.to_toml()) == TrainConfig{});
}

TEST_CASE("semantic diff ignores run-control keys") {
  TrainConfig a, b;
  b.eval_every = 7;
  b.run_dir = "elsewhere";
  b.threads = 4;
  b.checkpoint_every = 3;
  CHECK(semantic_diff(a, b).empty());
  b.weight_decay = 0.1;
  b.seed = 5;
  const auto d = semantic_diff(a, b);
  REQUIRE(d.size() == 2);
  CHECK(d[0].find("weight_decay") != std::string::npos);
  // The semantic subset alone reproduces every semantic field.
  CHECK(semantic_diff(TrainConfig::parse(b.semantic_toml()), b).empty());
  // Every key is documented by train_config_keys and survives to_toml.
  for (const auto& k : train_config_keys()) CHECK(a.to_toml().find(k + " = ") != std::string::npos);
}

TEST_CASE("validation") {
  auto bad = [](const std::string& text) { CHECK_THROWS_AS(TrainConfig::parse(text).validate(), ConfigError); };
  bad("head = \"cnn\"");
  bad("layers = 9");
  bad("batch_size = 10\naccum = 3");
  bad("batch_size = 256\naccum = 1\nmemory_budget = 128");
  bad("steps = 10\nwarmup_steps = 10");
  bad("recall_direction = \"up\"");
  CHECK_NOTHROW(TrainConfig::parse("batch_size = 256\naccum = 2\nmemory_budget = 128").validate());
  CHECK_NOTHROW(TrainConfig::parse("steps = 0").validate());
}
