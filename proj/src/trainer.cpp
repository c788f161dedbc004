// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ape/error.hpp"
#include "ape/parallel.hpp"
#include "ape/rng.hpp"
#include "json.hpp"

APE_BEGIN_NAMESPACE

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kRecallKs[] = {1, 5, 10};

// Stream ids mixed into data_seed.
constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kSubsetStream = 2;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

MixtureSource parse_source(const std::string& entry) {
  MixtureSource src;
  const auto at = entry.rfind('@');
  if (at == std::string::npos) {
    src.path = entry;
    return src;
  }
  src.path = entry.substr(0, at);
  const std::string w = entry.substr(at + 1);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(w, &used);
    if (used != w.size() || v < 0) throw std::invalid_argument(w);
    src.weight = static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("train_data entry '" + entry + "': weight must be a nonnegative integer");
  }
  return src;
}

std::uint32_t max_token_id(const EmbeddingShard& shard) {
  std::uint32_t m = 0;
  for (const auto& r : shard.records)
    for (auto id : r.token_ids) m = std::max(m, id);
  return m;
}

HeadConfig head_config(const TrainConfig& c, const ShardDims& dims, std::size_t vocab) {
  HeadConfig h;
  h.kind = head_kind_from_string(c.head);
  h.d_img = dims.d_img;
  h.d_out = c.d_out > 0 ? static_cast<std::size_t>(c.d_out) : dims.d_img;
  if (h.kind == HeadKind::mlp) {
    const std::size_t hidden = c.hidden > 0 ? static_cast<std::size_t>(c.hidden) : 2 * dims.d_tok;
    h.text_widths = mlp_widths(dims.d_tok, hidden, h.d_out, static_cast<std::size_t>(c.layers));
  } else {
    h.vocab = vocab;
  }
  if (c.image_head) {
    const std::size_t hidden = c.image_hidden > 0 ? static_cast<std::size_t>(c.image_hidden) : dims.d_img;
    h.image_widths = mlp_widths(dims.d_img, hidden, h.d_out, static_cast<std::size_t>(c.image_layers));
  }
  h.init_log_scale = c.init_log_scale;
  h.max_scale = c.max_scale;
  return h;
}

AdamWConfig adamw_config(const TrainConfig& c) {
  AdamWConfig a;
  a.beta1 = c.beta1;
  a.beta2 = c.beta2;
  a.eps = c.eps;
  a.weight_decay = c.weight_decay;
  return a;
}

}  // namespace

// ---------------------------------------------------------------- metrics

std::string metrics_to_json(const MetricsRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["wall_time_s"] = r.wall_time_s;
  j["train_loss"] = r.train_loss;
  j["temperature"] = r.temperature;
  j["lr"] = r.lr;
  for (const auto& [k, v] : r.recall) j["recall@" + std::to_string(k)] = v;
  j["eval"] = ordered_json::object();
  for (const auto& [name, v] : r.eval) j["eval"][name] = v;
  return j.dump();
}

MetricsRecord metrics_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw DataError(std::string("bad metrics line: ") + e.what());
  }
  auto num = [](const ordered_json& v) {
    return v.is_null() ? std::nan("") : v.get<double>();
  };
  MetricsRecord r;
  try {
    r.step = j.at("step").get<std::uint64_t>();
    r.wall_time_s = num(j.at("wall_time_s"));
    r.train_loss = num(j.at("train_loss"));
    r.temperature = num(j.at("temperature"));
    r.lr = num(j.at("lr"));
    for (const auto& [key, v] : j.items()) {
      if (key.rfind("recall@", 0) == 0) r.recall[std::stoul(key.substr(7))] = num(v);
    }
    if (j.contains("eval"))
      for (const auto& [key, v] : j["eval"].items()) r.eval[key] = num(v);
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("bad metrics line: ") + e.what());
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(metrics_from_json(line));
  }
  return out;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::set<std::size_t> ks;
  std::set<std::string> evals;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.recall) ks.insert(k);
    for (const auto& [n, v] : r.eval) evals.insert(n);
  }
  std::ostringstream os;
  os.precision(17);
  os << "step,wall_time_s,train_loss,temperature,lr";
  for (auto k : ks) os << ",recall@" << k;
  for (const auto& n : evals) os << ",zeroshot:" << n;
  os << '\n';
  for (const auto& r : records) {
    os << r.step << ',' << r.wall_time_s << ',' << r.train_loss << ',' << r.temperature << ','
       << r.lr;
    for (auto k : ks) {
      os << ',';
      if (auto it = r.recall.find(k); it != r.recall.end()) os << it->second;
    }
    for (const auto& n : evals) {
      os << ',';
      if (auto it = r.eval.find(n); it != r.eval.end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------- accumulation

double accumulate_gradients(AlignmentModel& model, const Batch& batch, std::size_t accum) {
  const std::size_t B = batch.size();
  if (accum == 0 || B % accum != 0) {
    throw ConfigError("accum = " + std::to_string(accum) + " does not divide batch size " +
                      std::to_string(B));
  }
  if (accum == 1) return loss_and_grads(model, batch).loss;

  const std::size_t micro = B / accum;
  std::vector<Tensor> txt_parts, img_parts;
  for (std::size_t a = 0; a < accum; ++a) {
    const Batch mb = slice_batch(batch, a * micro, (a + 1) * micro);
    Tape tape;
    txt_parts.push_back(tape.value(model.embed_text(tape, text_input(mb))));
    img_parts.push_back(tape.value(model.embed_image(tape, tape.constant_ref(mb.images))));
  }
  Parameter& log_scale = model.temperature().log_scale;
  const ContrastiveResult full = contrastive_forward_backward(
      concat_rows(img_parts), concat_rows(txt_parts), log_scale.value[0]);

  model.zero_grad();
  for (std::size_t a = 0; a < accum; ++a) {
    const Batch mb = slice_batch(batch, a * micro, (a + 1) * micro);
    const Tensor d_txt = slice_rows(full.d_txt, a * micro, (a + 1) * micro);
    const Tensor d_img = slice_rows(full.d_img, a * micro, (a + 1) * micro);
    Tape tape;
    Var txt = model.embed_text(tape, text_input(mb));
    Var img = model.embed_image(tape, tape.constant_ref(mb.images));
    std::vector<std::pair<Var, const Tensor*>> seeds{{txt, &d_txt}};
    if (tape.requires_grad(img)) seeds.emplace_back(img, &d_img);
    tape.backward(seeds);
  }
  log_scale.grad[0] += static_cast<real>(full.d_log_scale);
  return full.loss;
}

// --------------------------------------------------------------- trainer

struct Trainer::ZeroShotTask {
  std::string name;
  EmbeddingShard templates;
  std::vector<std::string> class_names;
  EvalSet eval;
};

Trainer::Trainer(TrainConfig config) : Trainer(std::move(config), nullptr) {}

Trainer::~Trainer() = default;

std::unique_ptr<Trainer> Trainer::resume(const fs::path& checkpoint, TrainConfig config) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!ckpt.trainer || !ckpt.optimizer) {
    throw DataError(checkpoint.string() + " holds no training state; cannot resume");
  }
  const TrainConfig saved = TrainConfig::from_kv(KeyValueFile::parse(ckpt.run_config, checkpoint.string()), false);
  const auto diff = semantic_diff(saved, config);
  if (!diff.empty()) {
    std::string msg = "config differs from the checkpoint in fields that change results:";
    for (const auto& d : diff) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  return std::unique_ptr<Trainer>(new Trainer(std::move(config), &ckpt));
}

Trainer::Trainer(TrainConfig config, const Checkpoint* ckpt) : config_(std::move(config)) {
  config_.validate();
  set_num_threads(config_.strict ? 1 : static_cast<std::size_t>(config_.threads));
  run_dir_ = config_.run_dir;
  fs::create_directories(run_dir_);

  load_data();
  prepare_subsets();

  std::size_t vocab = static_cast<std::size_t>(config_.vocab_size);
  if (vocab == 0) {
    std::uint32_t m = 0;
    for (const auto& s : sources_) m = std::max(m, max_token_id(s));
    if (val_) m = std::max(m, max_token_id(*val_));
    for (const auto& z : zeroshot_) m = std::max(m, max_token_id(z.templates));
    vocab = static_cast<std::size_t>(m) + 1;
  }

  if (ckpt) {
    model_ = std::make_unique<AlignmentModel>(restore_model(*ckpt));
    if (!(model_->config() == head_config(config_, dims_, vocab))) {
      throw ConfigError("checkpoint architecture does not match the data and config");
    }
  } else {
    model_ = std::make_unique<AlignmentModel>(head_config(config_, dims_, vocab));
    model_->init(static_cast<std::uint64_t>(config_.seed));
  }
  optimizer_ = std::make_unique<AdamW>(model_->parameters(), adamw_config(config_));

  std::vector<const SampleRecord*> pool;
  for (std::size_t s = 0; s < sources_.size(); ++s)
    for (auto idx : subsets_[s]) pool.push_back(&sources_[s].records[idx]);
  sampler_ = std::make_unique<BatchSampler>(
      dims_, std::move(pool), static_cast<std::size_t>(config_.batch_size),
      Rng::derive(static_cast<std::uint64_t>(config_.data_seed), kSamplerStream), config_.drop_last);
  if (config_.steps > 0) {
    schedule_.emplace(config_.lr, static_cast<double>(config_.warmup_steps),
                      static_cast<double>(config_.steps));
  }

  const fs::path metrics_path = run_dir_ / "metrics.jsonl";
  if (ckpt) {
    restore_optimizer(*optimizer_, *ckpt);
    state_ = *ckpt->trainer;
    sampler_->seek({state_.sampler_epoch, state_.sampler_position});
    if (state_.step > 0) last_lr_ = schedule_->lr_at(static_cast<double>(state_.step - 1));
    // Drop anything logged after the checkpoint was taken.
    if (fs::exists(metrics_path)) {
      for (auto& r : read_metrics(metrics_path))
        if (r.step <= state_.step) metrics_.push_back(std::move(r));
    }
    std::string text;
    for (const auto& r : metrics_) text += metrics_to_json(r) + '\n';
    write_text(metrics_path, text);
  } else {
    write_text(run_dir_ / "config.toml", config_.to_toml());
    ordered_json seeds;
    seeds["seed"] = config_.seed;
    seeds["data_seed"] = config_.data_seed;
    seeds["sampler_seed"] = Rng::derive(static_cast<std::uint64_t>(config_.data_seed), kSamplerStream);
    seeds["subset_seed"] = Rng::derive(static_cast<std::uint64_t>(config_.data_seed), kSubsetStream);
    write_text(run_dir_ / "seeds.json", seeds.dump(2) + '\n');
    write_text(metrics_path, "");
    fs::remove(run_dir_ / "timing.jsonl");
  }
}

void Trainer::load_data() {
  if (config_.train_data.empty()) throw ConfigError("train_data is empty");
  for (const auto& entry : config_.train_data) {
    const MixtureSource src = parse_source(entry);
    sources_.push_back(load_shard_set(src.path));
    source_weights_.push_back(src.weight);
    if (sources_.size() == 1) {
      dims_ = sources_.front().dims;
    } else if (!(sources_.back().dims == dims_)) {
      throw DataError("train source '" + src.path + "' has different dimensions from '" +
                      parse_source(config_.train_data.front()).path + "'");
    }
    if (sources_.back().records.empty()) throw DataError("train source '" + src.path + "' is empty");
  }
  if (!config_.val_data.empty()) {
    val_ = load_shard_set(config_.val_data);
    if (val_->dims.d_img != dims_.d_img || val_->dims.d_tok != dims_.d_tok) {
      throw DataError("val_data dimensions do not match train_data");
    }
  }
  for (const auto& spec : config_.zeroshot) {
    const auto parts = split(spec, '|');
    if (parts.size() < 3 || parts.size() > 5) {
      throw ConfigError("zeroshot entry '" + spec +
                        "' must be name|eval_shard|template_shard[|label_map[|class_names]]");
    }
    ZeroShotTask task;
    task.name = parts[0];
    const EmbeddingShard eval = load_shard_set(parts[1]);
    task.templates = load_shard_set(parts[2]);
    LabelMap labels;
    if (parts.size() >= 4 && !parts[3].empty()) labels = read_label_map(parts[3]);
    if (parts.size() == 5 && !parts[4].empty()) task.class_names = read_class_names(parts[4]);
    if (eval.dims.d_img != dims_.d_img || task.templates.dims.d_tok != dims_.d_tok) {
      throw DataError("zeroshot set '" + task.name + "' dimensions do not match train_data");
    }
    task.eval = make_eval_set(task.name, eval, labels);
    zeroshot_.push_back(std::move(task));
  }
}

void Trainer::prepare_subsets() {
  std::vector<std::size_t> sizes;
  for (const auto& s : sources_) sizes.push_back(s.records.size());
  const auto counts =
      mixture_counts(source_weights_, sizes, static_cast<std::uint64_t>(config_.epoch_samples));
  subsets_ = draw_mixture_subsets(
      counts, sizes, Rng::derive(static_cast<std::uint64_t>(config_.data_seed), kSubsetStream));
  for (std::size_t s = 0; s < subsets_.size(); ++s) {
    std::vector<std::uint64_t> ids(subsets_[s].begin(), subsets_[s].end());
    write_index_list(run_dir_ / ("subset_" + std::to_string(s) + ".txt"), ids);
  }
}

MetricsRecord Trainer::evaluate() {
  MetricsRecord r;
  r.step = state_.step;
  r.temperature = 1.0 / static_cast<double>(model_->temperature().scale());
  r.lr = last_lr_;
  if (val_) {
    const EvalSet set = make_eval_set("val", *val_);
    const Tensor img = embed_images(*model_, set.images);
    const Tensor txt = embed_texts(*model_, *val_);
    std::vector<std::size_t> ks;
    for (auto k : kRecallKs)
      if (k <= img.rows()) ks.push_back(k);
    const auto values =
        recall_at_ks(img, txt, ks, recall_direction_from_string(config_.recall_direction));
    for (std::size_t i = 0; i < ks.size(); ++i) r.recall[ks[i]] = values[i];
  }
  for (const auto& task : zeroshot_) {
    const ZeroShotClassifier clf = build_classifier(*model_, task.templates, task.class_names);
    r.eval[task.name] = zero_shot_accuracy(clf, *model_, task.eval);
  }
  return r;
}

void Trainer::write_checkpoint(const fs::path& path) {
  TrainerState st = state_;
  const auto cur = sampler_->cursor();
  st.sampler_epoch = cur.epoch;
  st.sampler_position = cur.position;
  if (config_.strict) st.wall_time_s = 0;
  save_checkpoint(path, snapshot(*model_, optimizer_.get(), &st, config_.semantic_toml()));
}

void Trainer::append_metrics(const MetricsRecord& record) {
  MetricsRecord logged = record;
  if (config_.strict) {
    // Timings are kept out of the main log so strict runs compare byte for byte.
    std::ofstream timing(run_dir_ / "timing.jsonl", std::ios::app);
    ordered_json j;
    j["step"] = record.step;
    j["wall_time_s"] = record.wall_time_s;
    timing << j.dump() << '\n';
    logged.wall_time_s = 0;
  }
  std::ofstream out(run_dir_ / "metrics.jsonl", std::ios::app);
  out << metrics_to_json(logged) << '\n';
  if (!out) throw DataError("cannot append to " + (run_dir_ / "metrics.jsonl").string());
  metrics_.push_back(logged);
}

TrainResult Trainer::run(std::optional<std::uint64_t> stop_at) {
  const std::uint64_t total = static_cast<std::uint64_t>(config_.steps);
  const std::uint64_t target = stop_at ? std::min(*stop_at, total) : total;
  const std::size_t accum = static_cast<std::size_t>(config_.accum);
  const std::uint64_t eval_every = static_cast<std::uint64_t>(config_.eval_every);
  const std::uint64_t ckpt_every = static_cast<std::uint64_t>(config_.checkpoint_every);

  auto record = [&] {
    MetricsRecord r = evaluate();
    r.wall_time_s = state_.wall_time_s;
    r.train_loss = state_.loss_count ? state_.loss_sum / static_cast<double>(state_.loss_count) : 0;
    state_.loss_sum = 0;
    state_.loss_count = 0;
    append_metrics(r);
    if (!r.recall.empty() && r.recall.begin()->second > state_.best_recall) {
      state_.best_recall = r.recall.begin()->second;
      state_.best_step = state_.step;
      write_checkpoint(run_dir_ / "best.apec");
    }
  };

  if (state_.step == 0 && metrics_.empty()) {
    // Step 0: loss of the first batch the run will see, without consuming it.
    BatchSampler peek = *sampler_;
    state_.loss_sum = evaluate_loss(*model_, peek.next());
    state_.loss_count = 1;
    last_lr_ = schedule_ ? schedule_->lr_at(0) : 0.0;
    record();
  }

  while (state_.step < target) {
    const auto t0 = std::chrono::steady_clock::now();
    const Batch batch = sampler_->next();
    const double lr = schedule_->lr_at(static_cast<double>(state_.step));
    double loss = 0;
    try {
      loss = accumulate_gradients(*model_, batch, accum);
      if (!std::isfinite(loss)) {
        throw NumericError("loss is " + std::to_string(loss) + " at step " +
                           std::to_string(state_.step));
      }
      optimizer_->step(lr);
    } catch (const NumericError&) {
      // Parameters are untouched by the failed step; keep them.
      write_checkpoint(run_dir_ / "last.apec");
      throw;
    }
    model_->temperature().clamp();
    last_lr_ = lr;
    ++state_.step;
    state_.loss_sum += loss;
    ++state_.loss_count;
    state_.wall_time_s += seconds_since(t0);

    if (state_.step % eval_every == 0 || state_.step == total) record();
    if (ckpt_every && state_.step % ckpt_every == 0) {
      write_checkpoint(run_dir_ / ("ckpt_" + std::to_string(state_.step) + ".apec"));
    }
  }
  write_checkpoint(run_dir_ / "last.apec");

  TrainResult result;
  result.metrics = metrics_;
  result.last_checkpoint = run_dir_ / "last.apec";
  if (fs::exists(run_dir_ / "best.apec")) result.best_checkpoint = run_dir_ / "best.apec";
  result.best_recall = state_.best_recall;
  result.final_step = state_.step;
  return result;
}

// ----------------------------------------------------------------- sweep

SweepGrid SweepGrid::load(const fs::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  SweepGrid g;
  for (const auto& key : kv.keys()) {
    if (key == "lr") g.lr = toml::parse_double_array(kv.raw(key));
    else if (key == "weight_decay") g.weight_decay = toml::parse_double_array(kv.raw(key));
    else if (key == "warmup_frac") g.warmup_frac = toml::parse_double_array(kv.raw(key));
    else throw ConfigError("unknown sweep key '" + key + "' in " + path.string());
  }
  if (g.lr.empty() || g.weight_decay.empty() || g.warmup_frac.empty()) {
    throw ConfigError("sweep grid axes must be non-empty");
  }
  for (double f : g.warmup_frac)
    if (!(f >= 0 && f < 1)) throw RangeError("warmup_frac must lie in [0, 1)");
  return g;
}

std::vector<SweepTrial> run_sweep(const TrainConfig& base, const SweepGrid& grid,
                                  const fs::path& out_dir, std::size_t jobs) {
  if (base.val_data.empty()) throw ConfigError("sweep selects on validation recall; set val_data");
  fs::create_directories(out_dir);
  std::vector<SweepTrial> trials;
  for (double lr : grid.lr)
    for (double wd : grid.weight_decay)
      for (double wf : grid.warmup_frac) {
        SweepTrial t;
        t.index = trials.size();
        t.lr = lr;
        t.weight_decay = wd;
        t.warmup_steps = static_cast<std::int64_t>(std::llround(wf * static_cast<double>(base.steps)));
        char name[32];
        std::snprintf(name, sizeof name, "trial_%03zu", t.index);
        t.run_dir = out_dir / name;
        trials.push_back(t);
      }

  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= trials.size() || failure) return;
        i = next++;
      }
      try {
        TrainConfig c = base;
        c.lr = trials[i].lr;
        c.weight_decay = trials[i].weight_decay;
        c.warmup_steps = trials[i].warmup_steps;
        c.run_dir = trials[i].run_dir.string();
        if (jobs > 1) c.threads = 1;
        Trainer trainer(c);
        trials[i].best_recall = trainer.run().best_recall;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < std::min(jobs, trials.size()); ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::string log;
  for (const auto& t : trials) {
    ordered_json j;
    j["trial"] = t.index;
    j["lr"] = t.lr;
    j["weight_decay"] = t.weight_decay;
    j["warmup_steps"] = t.warmup_steps;
    j["best_recall@1"] = t.best_recall;
    j["run_dir"] = t.run_dir.string();
    log += j.dump() + '\n';
  }
  write_text(out_dir / "sweep.jsonl", log);
  // Best first; earlier trials win ties.
  std::stable_sort(trials.begin(), trials.end(),
                   [](const SweepTrial& a, const SweepTrial& b) { return a.best_recall > b.best_recall; });
  return trials;
}

APE_END_NAMESPACE
