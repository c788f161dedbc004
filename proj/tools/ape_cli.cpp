// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// ape: command-line front end.
//   exit 0 ok | 1 config error | 2 data error | 3 numeric failure

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ape/align_head.hpp"
#include "ape/checkpoint.hpp"
#include "ape/embed_store.hpp"
#include "ape/error.hpp"
#include "ape/synthetic.hpp"
#include "ape/train_config.hpp"
#include "ape/trainer.hpp"
#include "ape/zero_shot.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::uint64_t stored_checksum(std::span<const std::uint8_t> bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[32 + i];
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Writes a shard and returns its checksum.
std::uint64_t emit_shard(const fs::path& path, const ape::EmbeddingShard& shard) {
  const auto bytes = ape::encode_shard(shard);
  ape::write_file_atomic(path, bytes);
  return stored_checksum(bytes);
}

struct Running {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0, sumsq = 0;
  std::uint64_t n = 0;
  void add(double x) {
    min = std::min(min, x);
    max = std::max(max, x);
    sum += x;
    sumsq += x * x;
    ++n;
  }
  ordered_json json() const {
    ordered_json j;
    j["count"] = n;
    if (n == 0) return j;
    const double mean = sum / static_cast<double>(n);
    j["min"] = min;
    j["max"] = max;
    j["mean"] = mean;
    j["std"] = std::sqrt(std::max(0.0, sumsq / static_cast<double>(n) - mean * mean));
    return j;
  }
};

ordered_json inspect_one(const fs::path& path) {
  const auto bytes = ape::read_file_bytes(path);
  ordered_json j;
  j["path"] = path.string();
  j["bytes"] = bytes.size();
  const ape::EmbeddingShard shard = ape::decode_shard(bytes);  // validates everything
  const auto& d = shard.dims;
  j["header"] = {{"magic", "APES"}, {"version", ape::kShardVersion}, {"d_img", d.d_img},
                 {"d_tok", d.d_tok}, {"max_seq", d.max_seq}, {"n_variants", d.n_variants},
                 {"record_count", shard.records.size()}};
  const std::uint64_t stored = stored_checksum(bytes);
  j["checksum"] = {{"stored", hex64(stored)}, {"status", stored == 0 ? "absent" : "ok"}};

  Running tok, valid, img_norm, ntok;
  std::uint32_t max_id = 0;
  std::set<std::uint64_t> ids;
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (const auto& r : shard.records) {
    lo = std::min(lo, r.sample_id);
    hi = std::max(hi, r.sample_id);
    ids.insert(r.sample_id);
    valid.add(static_cast<double>(r.valid_positions()));
    ntok.add(static_cast<double>(r.token_ids.size()));
    for (auto id : r.token_ids) max_id = std::max(max_id, id);
    for (std::size_t t = 0; t < d.max_seq; ++t) {
      if (!r.mask[t]) continue;
      for (std::size_t c = 0; c < d.d_tok; ++c) tok.add(r.token_encodings[t * d.d_tok + c]);
    }
    for (std::size_t v = 0; v < d.n_variants; ++v) {
      double s = 0;
      for (std::size_t c = 0; c < d.d_img; ++c) {
        const double x = r.image_embeddings[v * d.d_img + c];
        s += x * x;
      }
      img_norm.add(std::sqrt(s));
    }
  }
  ordered_json f;
  f["sample_id"] = {{"min", shard.records.empty() ? 0 : lo}, {"max", hi},
                    {"distinct", ids.size()}};
  f["token_encodings"] = tok.json();
  f["mask_valid_positions"] = valid.json();
  f["image_embedding_norm"] = img_norm.json();
  f["n_tokens"] = ntok.json();
  f["max_token_id"] = max_id;
  j["fields"] = f;
  j["errors"] = 0;
  return j;
}

void print_inspect(const ordered_json& j) {
  const auto& h = j["header"];
  std::cout << j["path"].get<std::string>() << " (" << j["bytes"] << " bytes)\n"
            << "  header: version " << h["version"] << ", d_img " << h["d_img"] << ", d_tok "
            << h["d_tok"] << ", max_seq " << h["max_seq"] << ", n_variants " << h["n_variants"]
            << ", records " << h["record_count"] << '\n'
            << "  checksum: " << j["checksum"]["stored"].get<std::string>() << " ("
            << j["checksum"]["status"].get<std::string>() << ")\n";
  for (const auto& [name, v] : j["fields"].items()) std::cout << "  " << name << ": " << v.dump() << '\n';
  std::cout << "  errors: 0\n";
}

ape::TrainConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  return ape::TrainConfig::load(path, sets);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long k = std::stoll(item, &used);
      if (used != item.size() || k <= 0) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw ape::ConfigError("bad k value '" + item + "'");
    }
  }
  if (ks.empty()) throw ape::ConfigError("--k needs at least one value");
  return ks;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << '\n';
  if (!out) throw ape::DataError("cannot append to " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ape: align pretrained embeddings with a small contrastive head"};
  app.require_subcommand(1);

  // gen-synthetic
  ape::SyntheticConfig syn;
  std::string syn_out = "data";
  auto* gen = app.add_subcommand("gen-synthetic", "Write synthetic train/test shards and a manifest");
  gen->add_option("--n", syn.n_train, "training pairs")->capture_default_str();
  gen->add_option("--n-test", syn.n_test, "held-out pairs")->capture_default_str();
  gen->add_option("--latent", syn.latent, "latent dimension")->capture_default_str();
  gen->add_option("--d-img", syn.d_img)->capture_default_str();
  gen->add_option("--d-tok", syn.d_tok)->capture_default_str();
  gen->add_option("--seq-len", syn.seq_len)->capture_default_str();
  gen->add_option("--min-len", syn.min_len, "0 = always seq-len")->capture_default_str();
  gen->add_option("--variants", syn.n_variants, "image variants per sample")->capture_default_str();
  gen->add_option("--sigma", syn.sigma, "noise level")->capture_default_str();
  gen->add_flag("--nonlinear", syn.nonlinear, "pass token codes through tanh(R u)");
  gen->add_option("--bins", syn.bins, "token id quantization levels")->capture_default_str();
  gen->add_option("--classes", syn.classes, "zero-shot classes (0 = none)")->capture_default_str();
  gen->add_option("--templates", syn.templates, "templates per class")->capture_default_str();
  gen->add_option("--eval-per-class", syn.eval_per_class)->capture_default_str();
  gen->add_option("--seed", syn.seed)->capture_default_str();
  gen->add_option("--out", syn_out, "output directory")->capture_default_str();

  // inspect-shard
  std::vector<std::string> inspect_paths;
  bool inspect_json = false;
  auto* inspect = app.add_subcommand("inspect-shard", "Validate shards and print header, checksum and field stats");
  inspect->add_option("paths", inspect_paths, "shard files or directories")->required();
  inspect->add_flag("--json", inspect_json, "machine-readable output");

  // train / resume
  std::string config_path;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "Train an alignment head");
  train->add_option("--config", config_path, "run config (TOML)")->required()->check(CLI::ExistingFile);
  train->add_option("--set", sets, "override a config key: key=value (repeatable)");

  std::string resume_ckpt;
  auto* resume = app.add_subcommand("resume", "Continue a run from a checkpoint");
  resume->add_option("--ckpt", resume_ckpt, "checkpoint to continue from")->required();
  resume->add_option("--config", config_path, "run config (default: config.toml beside the checkpoint)");
  resume->add_option("--set", sets, "override a config key: key=value (repeatable)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->require_subcommand(1);
  std::string eval_ckpt, zs_set, zs_templates, zs_labels, zs_classes, zs_metrics;
  auto* zs = eval->add_subcommand("zeroshot", "Zero-shot classification accuracy");
  zs->add_option("--ckpt", eval_ckpt)->required();
  zs->add_option("--set", zs_set, "labelled eval shard (sample_id = label)")->required();
  zs->add_option("--templates", zs_templates, "template shard (sample_id = class index)")->required();
  zs->add_option("--labels", zs_labels, "label map: eval_label -> class index");
  zs->add_option("--classes", zs_classes, "class names, one per line");
  zs->add_option("--metrics", zs_metrics, "JSON-lines file to append to (default: eval.jsonl beside the checkpoint)");

  std::string rc_data, rc_dir = "i2t", rc_ks = "1,5,10";
  auto* rc = eval->add_subcommand("recall", "Paired retrieval recall@k");
  rc->add_option("--ckpt", eval_ckpt)->required();
  rc->add_option("--data", rc_data, "paired shard")->required();
  rc->add_option("--direction", rc_dir, "i2t | t2i | mean")->capture_default_str();
  rc->add_option("--k", rc_ks, "comma-separated k values")->capture_default_str();

  // count-params
  std::string cp_head = "mlp";
  std::size_t cp_dtok = 768, cp_hidden = 0, cp_dout = 768, cp_layers = 4, cp_vocab = 0, cp_dimg = 0,
              cp_img_layers = 0;
  std::uint64_t cp_tower = 0;
  auto* count = app.add_subcommand("count-params", "Exact trainable parameter counts");
  count->add_option("--head", cp_head, "mlp | lookup")->capture_default_str();
  count->add_option("--d-tok", cp_dtok)->capture_default_str();
  count->add_option("--hidden", cp_hidden, "0 = 2 * d_tok")->capture_default_str();
  count->add_option("--d-out", cp_dout)->capture_default_str();
  count->add_option("--layers", cp_layers)->capture_default_str();
  count->add_option("--vocab", cp_vocab, "lookup vocabulary")->capture_default_str();
  count->add_option("--d-img", cp_dimg, "0 = d_out")->capture_default_str();
  count->add_option("--image-layers", cp_img_layers, "image head depth, 0 = none")->capture_default_str();
  count->add_option("--tower-params", cp_tower, "text tower size for the ratio")->capture_default_str();

  // export-csv
  std::string csv_in, csv_out;
  auto* csv = app.add_subcommand("export-csv", "Convert metrics.jsonl to CSV");
  csv->add_option("metrics", csv_in, "metrics.jsonl")->required();
  csv->add_option("-o,--out", csv_out, "output file (default: stdout)");

  // sweep
  std::string sweep_grid, sweep_out = "sweep";
  std::size_t sweep_jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Grid over lr, weight decay and warmup; pick by validation recall@1");
  sweep->add_option("--config", config_path, "base run config")->required()->check(CLI::ExistingFile);
  sweep->add_option("--set", sets, "override a config key: key=value (repeatable)");
  sweep->add_option("--grid", sweep_grid, "grid file (lr, weight_decay, warmup_frac arrays)");
  sweep->add_option("--out", sweep_out, "directory for trial runs")->capture_default_str();
  sweep->add_option("--jobs", sweep_jobs, "trials run concurrently")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_code = app.exit(e);
    return rc_code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const ape::SyntheticData data = ape::gen_synthetic(syn);
      fs::create_directories(syn_out);
      const fs::path out(syn_out);
      ordered_json m;
      m["generator"] = "synthetic";
      m["config"] = {{"n_train", syn.n_train}, {"n_test", syn.n_test}, {"latent", syn.latent},
                     {"d_img", syn.d_img}, {"d_tok", syn.d_tok}, {"seq_len", syn.seq_len},
                     {"min_len", syn.min_len}, {"n_variants", syn.n_variants}, {"sigma", syn.sigma},
                     {"nonlinear", syn.nonlinear}, {"bins", syn.bins}, {"classes", syn.classes},
                     {"templates", syn.templates}, {"eval_per_class", syn.eval_per_class},
                     {"seed", syn.seed}};
      m["vocab_size"] = data.vocab_size;
      m["shards"] = ordered_json::array();
      auto add = [&](const std::string& role, const std::string& name, const ape::EmbeddingShard& s) {
        const std::uint64_t sum = emit_shard(out / name, s);
        m["shards"].push_back({{"role", role}, {"file", name}, {"records", s.records.size()},
                               {"checksum", hex64(sum)}});
      };
      add("train", "train.apes", data.train);
      add("test", "test.apes", data.test);
      if (data.zs_templates) {
        add("zeroshot_templates", "zs_templates.apes", *data.zs_templates);
        add("zeroshot_eval", "zs_eval.apes", *data.zs_eval);
        std::string names;
        for (std::uint32_t c = 0; c < syn.classes; ++c) names += "class_" + std::to_string(c) + '\n';
        std::ofstream(out / "zs_classes.txt") << names;
      }
      std::ofstream(out / "manifest.json") << m.dump(2) << '\n';
      std::cout << "wrote " << m["shards"].size() << " shards to " << out.string() << '\n';
    } else if (*inspect) {
      ordered_json all = ordered_json::array();
      for (const auto& p : inspect_paths) {
        for (const auto& file : ape::resolve_shard_set(p)) {
          ordered_json j;
          try {
            j = inspect_one(file);
          } catch (const ape::Error& e) {
            throw ape::DataError(file.string() + ": " + e.what());
          }
          if (inspect_json) all.push_back(j);
          else print_inspect(j);
        }
      }
      if (inspect_json) std::cout << all.dump(2) << '\n';
    } else if (*train) {
      ape::Trainer trainer(load_config(config_path, sets));
      const auto result = trainer.run();
      std::cout << "finished " << result.final_step << " steps; last checkpoint "
                << result.last_checkpoint.string() << '\n';
      if (!result.metrics.empty()) std::cout << ape::metrics_to_json(result.metrics.back()) << '\n';
    } else if (*resume) {
      if (config_path.empty()) config_path = (fs::path(resume_ckpt).parent_path() / "config.toml").string();
      auto trainer = ape::Trainer::resume(resume_ckpt, load_config(config_path, sets));
      const auto result = trainer->run();
      std::cout << "finished " << result.final_step << " steps; last checkpoint "
                << result.last_checkpoint.string() << '\n';
    } else if (*zs) {
      ape::AlignmentModel model = ape::restore_model(ape::load_checkpoint(eval_ckpt));
      const auto labels = zs_labels.empty() ? ape::LabelMap{} : ape::read_label_map(zs_labels);
      const auto names = zs_classes.empty() ? std::vector<std::string>{} : ape::read_class_names(zs_classes);
      const ape::EvalSet set = ape::make_eval_set(fs::path(zs_set).stem().string(),
                                                  ape::load_shard_set(zs_set), labels);
      const auto clf = ape::build_classifier(model, ape::load_shard_set(zs_templates), names);
      const double acc = ape::zero_shot_accuracy(clf, model, set);
      ordered_json j;
      j["checkpoint"] = eval_ckpt;
      j["set"] = zs_set;
      j["classes"] = clf.class_names.size();
      j["images"] = set.labels.size();
      j["zeroshot_accuracy"] = acc;
      const fs::path log = zs_metrics.empty() ? fs::path(eval_ckpt).parent_path() / "eval.jsonl" : fs::path(zs_metrics);
      append_line(log, j.dump());
      std::cout << "zero-shot accuracy " << acc << " (" << set.labels.size() << " images, "
                << clf.class_names.size() << " classes)\n";
    } else if (*rc) {
      ape::AlignmentModel model = ape::restore_model(ape::load_checkpoint(eval_ckpt));
      const ape::EmbeddingShard shard = ape::load_shard_set(rc_data);
      const ape::EvalSet set = ape::make_eval_set("recall", shard);
      const auto ks = parse_ks(rc_ks);
      const auto values = ape::recall_at_ks(ape::embed_images(model, set.images),
                                            ape::embed_texts(model, shard), ks,
                                            ape::recall_direction_from_string(rc_dir));
      for (std::size_t i = 0; i < ks.size(); ++i)
        std::cout << "recall@" << ks[i] << " " << values[i] << '\n';
    } else if (*count) {
      ape::HeadConfig h;
      h.kind = ape::head_kind_from_string(cp_head);
      h.d_out = cp_dout;
      h.d_img = cp_dimg ? cp_dimg : cp_dout;
      h.vocab = cp_vocab;
      if (h.kind == ape::HeadKind::mlp)
        h.text_widths = ape::mlp_widths(cp_dtok, cp_hidden ? cp_hidden : 2 * cp_dtok, cp_dout, cp_layers);
      else if (cp_vocab == 0)
        throw ape::ConfigError("--vocab is required for a lookup head");
      if (cp_img_layers) h.image_widths = ape::mlp_widths(h.d_img, h.d_img, cp_dout, cp_img_layers);
      const auto c = ape::count_params(h, cp_tower);
      std::cout << "text_head " << c.text_head << "\nimage_head " << c.image_head
                << "\ntemperature " << c.temperature << "\ntotal " << c.total << '\n';
      if (cp_tower) std::cout << "text_ratio " << c.text_ratio << '\n';
    } else if (*csv) {
      const std::string text = ape::metrics_to_csv(ape::read_metrics(csv_in));
      if (csv_out.empty()) std::cout << text;
      else ape::write_file_atomic(csv_out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    } else if (*sweep) {
      const ape::SweepGrid grid = sweep_grid.empty() ? ape::SweepGrid{} : ape::SweepGrid::load(sweep_grid);
      const auto trials = ape::run_sweep(load_config(config_path, sets), grid, sweep_out, sweep_jobs);
      for (const auto& t : trials) {
        std::cout << t.run_dir.filename().string() << " lr=" << t.lr << " wd=" << t.weight_decay
                  << " warmup=" << t.warmup_steps << " recall@1=" << t.best_recall << '\n';
      }
      std::cout << "best: " << trials.front().run_dir.string() << '\n';
    }
  } catch (const ape::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ape::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ape::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
