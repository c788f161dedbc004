// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "acceptance/acceptance.hpp"
#include "ape/contrastive.hpp"
#include "ape/optim.hpp"
#include "ape/synthetic.hpp"
#include "ape/trainer.hpp"
#include "ape/zero_shot.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using acceptance::Outcome;

namespace {

fs::path g_work;

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome closed_form_losses() {
  bool ok = true;
  std::string detail;
  {
    ape::Rng rng(1);
    ape::Tensor img({1, 5}), txt({1, 5});
    for (auto& x : img.data()) x = static_cast<ape::real>(rng.normal());
    for (auto& x : txt.data()) x = static_cast<ape::real>(rng.normal());
    const double l = ape::contrastive_loss_value(img, txt, ape::real(2.3));
    ok = ok && l == 0.0;
    detail += fmt("B=1 loss %g", l);
  }
  double worst = 0;
  for (std::size_t B : {2u, 16u, 128u}) {
    ape::Tensor e({B, 8});
    for (std::size_t i = 0; i < B; ++i) e.row(i)[0] = 1;
    const double l = ape::contrastive_loss_value(e, e, ape::real(std::log(1 / 0.07)));
    worst = std::max(worst, std::abs(l - std::log(double(B))));
  }
  ok = ok && worst < 1e-5;
  detail += fmt("; identical rows |loss - ln B| <= %.2g (tol 1e-5)", worst);
  const ape::Tensor e = ape::Tensor::matrix({{1, 0}, {0, 1}});
  const double l2 = ape::contrastive_loss_value(e, e, 0);
  ok = ok && std::abs(l2 - 0.313262) < 1e-5;
  detail += fmt("; 2x2 case %.6f (want 0.313262)", l2);
  return {ok, detail};
}

Outcome schedule_exactness() {
  struct Case {
    double peak, w, T;
  };
  const Case cases[] = {{1e-3, 50, 1000}, {3e-4, 20, 2000}, {1.0, 1, 3}, {0.5, 7, 10000}, {1e-4, 100, 101}};
  double worst = 0;
  auto rel = [](double got, double want, double scale) { return std::abs(got - want) / scale; };
  for (const auto& c : cases) {
    const ape::CosineSchedule s(c.peak, c.w, c.T);
    worst = std::max(worst, rel(s.lr_at(0), 0, c.peak));
    worst = std::max(worst, rel(s.lr_at(c.w), c.peak, c.peak));
    worst = std::max(worst, rel(s.lr_at(c.w + (c.T - c.w) / 2), c.peak / 2, c.peak / 2));
    worst = std::max(worst, rel(s.lr_at(c.T), 0, c.peak));
    for (double step = 0; step <= c.T; step += std::max(1.0, std::floor(c.T / 37))) {
      worst = std::max(worst, rel(s.lr_at(step), oracle::cosine_lr(step, c.peak, c.w, c.T), c.peak));
    }
  }
  return {worst <= 1e-12, fmt("worst relative deviation %.3g over anchors and sampled steps (tol 1e-12)", worst)};
}

std::vector<double> flat_params(ape::AlignmentModel& m) {
  std::vector<double> out;
  for (ape::Parameter* p : m.parameters())
    for (auto x : p->value.data()) out.push_back(x);
  return out;
}

Outcome accumulation_equivalence() {
  constexpr std::size_t B = 16;
  constexpr int kSteps = 3;
  const ape::ShardDims dims{8, 6, 4, 1};
  double worst = 0;
  int variant = 0;
  for (int head = 0; head < 3; ++head) {
    ape::HeadConfig h;
    h.d_img = h.d_out = 8;
    if (head == 2) {
      h.kind = ape::HeadKind::lookup;
      h.vocab = 20;
    } else {
      h.text_widths = ape::mlp_widths(6, 12, 8, 3);
    }
    if (head == 1) h.image_widths = ape::mlp_widths(8, 8, 8, 2);
    for (std::size_t a : {2u, 4u}) {
      ++variant;
      ape::AlignmentModel whole(h), acc(h);
      for (auto* m : {&whole, &acc}) {
        m->init(40 + head);
        fixtures::spread_parameters(*m, 50 + head);
      }
      const ape::AdamWConfig oc{0.9, 0.999, 1e-8, 0.01};
      ape::AdamW opt_w(whole.parameters(), oc), opt_a(acc.parameters(), oc);
      const auto start = flat_params(whole);
      for (int s = 0; s < kSteps; ++s) {
        const auto shard = fixtures::random_shard(dims, B, 1000 * head + 10 * s + a, 20);
        const ape::Batch batch = fixtures::whole_batch(shard);
        ape::loss_and_grads(whole, batch);
        opt_w.step(1e-2);
        ape::accumulate_gradients(acc, batch, a);
        opt_a.step(1e-2);
      }
      const auto pw = flat_params(whole), pa = flat_params(acc);
      double diff = 0, upd = 0;
      for (std::size_t i = 0; i < pw.size(); ++i) {
        diff += (pw[i] - pa[i]) * (pw[i] - pa[i]);
        upd += (pw[i] - start[i]) * (pw[i] - start[i]);
      }
      worst = std::max(worst, std::sqrt(diff / upd));
    }
  }
  return {worst < 1e-5,
          fmt("%d head/accum variants, %d AdamW steps on B=%zu: worst |dtheta_a - dtheta_1| / |dtheta_1| = %.3g (tol 1e-5)",
              variant, kSteps, B, worst)};
}

ape::SyntheticConfig reference_data() {
  ape::SyntheticConfig c;
  c.n_train = 4096;
  c.n_test = 512;
  c.latent = 16;
  c.d_img = c.d_tok = 64;
  c.seq_len = 8;
  c.sigma = 0.05;
  c.nonlinear = true;
  c.seed = 7;
  return c;
}

// Reference configuration. The criterion allows up to 2,000 steps; 500 is
// enough and keeps the suite short.
constexpr std::int64_t kE2eSteps = 500;

ape::TrainConfig e2e_config(const fs::path& data, const std::string& head) {
  ape::TrainConfig c;
  c.train_data = {(data / "train.apes").string()};
  c.val_data = (data / "test.apes").string();
  c.head = head;
  c.layers = 4;
  c.batch_size = 256;
  c.steps = kE2eSteps;
  c.warmup_steps = 50;
  c.lr = 1e-3;
  c.weight_decay = 0.01;
  c.eval_every = 50;
  c.run_dir = (g_work / ("e2e_" + head)).string();
  return c;
}

Outcome synthetic_end_to_end() {
  const fs::path data = g_work / "e2e_data";
  const auto syn = ape::gen_synthetic(reference_data());
  fs::create_directories(data);
  ape::write_shard(data / "train.apes", syn.train);
  ape::write_shard(data / "test.apes", syn.test);

  const auto t0 = std::chrono::steady_clock::now();
  const auto mlp = ape::Trainer(e2e_config(data, "mlp")).run();
  const double mlp_secs = seconds_since(t0);
  const auto lookup = ape::Trainer(e2e_config(data, "lookup")).run();

  const double r_mlp = mlp.metrics.back().recall.at(1);
  const double r_lookup = lookup.metrics.back().recall.at(1);
  std::int64_t first = -1;
  for (const auto& m : mlp.metrics) {
    if (m.recall.at(1) >= 0.95) {
      first = static_cast<std::int64_t>(m.step);
      break;
    }
  }
  const bool ok = r_mlp >= 0.95 && mlp.final_step <= 2000 && mlp_secs < 600 && r_lookup < r_mlp;
  return {ok, fmt("4-layer MLP recall@1 %.4f after %llu steps (>= 0.95 first at step %lld, %.1f s, limit 600 s); "
                  "lookup recall@1 %.4f under the same budget (must be lower)",
                  r_mlp, (unsigned long long)mlp.final_step, (long long)first, mlp_secs, r_lookup)};
}

std::vector<unsigned char> bytes(const fs::path& p) {
  const auto v = ape::read_file_bytes(p);
  return {v.begin(), v.end()};
}

Outcome determinism() {
  const fs::path data = g_work / "det_data";
  ape::SyntheticConfig s;
  s.latent = 6;
  s.d_img = 12;
  s.d_tok = 10;
  s.seq_len = 5;
  s.min_len = 2;
  s.n_train = 512;
  s.n_test = 96;
  s.nonlinear = true;
  s.classes = 5;
  s.templates = 3;
  s.eval_per_class = 12;
  s.seed = 11;
  const auto syn = ape::gen_synthetic(s);
  fs::create_directories(data);
  ape::write_shard(data / "train.apes", syn.train);
  ape::write_shard(data / "test.apes", syn.test);
  ape::write_shard(data / "zs_t.apes", *syn.zs_templates);
  ape::write_shard(data / "zs_e.apes", *syn.zs_eval);

  std::vector<fs::path> dirs;
  for (const char* name : {"det_a", "det_b"}) {
    ape::TrainConfig c;
    c.train_data = {(data / "train.apes").string()};
    c.val_data = (data / "test.apes").string();
    c.zeroshot = {"toy|" + (data / "zs_e.apes").string() + "|" + (data / "zs_t.apes").string()};
    c.layers = 3;
    c.image_head = true;
    c.batch_size = 32;
    c.accum = 2;
    c.steps = 60;
    c.warmup_steps = 6;
    c.eval_every = 10;
    c.checkpoint_every = 20;
    c.seed = 5;
    c.data_seed = 9;
    c.strict = true;
    c.run_dir = (g_work / name).string();
    fs::remove_all(c.run_dir);
    ape::Trainer(c).run();
    dirs.emplace_back(c.run_dir);
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const auto name = entry.path().filename();
    // config.toml records its own run_dir; timing.jsonl is the wall-clock sidecar.
    if (name == "config.toml" || name == "timing.jsonl") continue;
    ++compared;
    if (!fs::exists(dirs[1] / name) || bytes(entry.path()) != bytes(dirs[1] / name)) ++differing;
  }
  const bool has_metrics = fs::exists(dirs[0] / "metrics.jsonl") && fs::exists(dirs[0] / "ckpt_20.apec");
  return {has_metrics && differing == 0 && compared >= 5,
          fmt("%zu run files compared (metrics, checkpoints, seeds, subsets), %zu differ", compared, differing)};
}

Outcome format_round_trip() {
  ape::Rng rng(4242);
  std::size_t round_trips = 0, rejected = 0;
  constexpr std::size_t kN = 1000;
  for (std::size_t i = 0; i < kN; ++i) {
    ape::ShardDims dims;
    dims.d_img = 1 + static_cast<std::uint32_t>(rng.index(9));
    dims.d_tok = 1 + static_cast<std::uint32_t>(rng.index(9));
    dims.max_seq = 1 + static_cast<std::uint32_t>(rng.index(12));
    dims.n_variants = 1 + static_cast<std::uint32_t>(rng.index(3));
    const auto shard = fixtures::random_shard(dims, rng.index(8), rng.next_u64(), 1000);
    const auto first = ape::encode_shard(shard);
    bool same;
    if (i % 10 == 0) {  // a slice of them through the filesystem
      const fs::path p = g_work / "rt.apes";
      ape::write_shard(p, shard);
      same = ape::read_file_bytes(p) == first && ape::encode_shard(ape::read_shard(p)) == first;
    } else {
      const auto back = ape::decode_shard(first);
      same = back == shard && ape::encode_shard(back) == first;
    }
    if (same) ++round_trips;

    auto bad = first;
    if (rng.index(2) == 0) {
      bad.resize(rng.index(first.size()));
    } else {
      const std::size_t at = rng.index(bad.size());
      bad[at] ^= static_cast<std::uint8_t>(1 + rng.index(255));
    }
    try {
      (void)ape::decode_shard(bad);
    } catch (const ape::DataError&) {
      ++rejected;
    }
  }
  return {round_trips == kN && rejected == kN,
          fmt("%zu/%zu byte-identical round trips, %zu/%zu truncations or corruptions rejected", round_trips, kN,
              rejected, kN)};
}

Outcome zero_shot_sanity() {
  // Orthonormal classes: every image is its own class vector.
  constexpr std::size_t C = 10, d = 16;
  std::vector<ape::Tensor> per_class;
  ape::Tensor images({C * 3, d});
  std::vector<std::uint32_t> labels;
  for (std::size_t c = 0; c < C; ++c) {
    ape::Tensor t({1, d});
    t[c] = 1;
    per_class.push_back(t);
    for (int k = 0; k < 3; ++k) {
      images.row(labels.size())[c] = 1;
      labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  const double ortho = ape::zero_shot_accuracy(ape::classifier_from_embeddings(per_class), images, labels);

  // Random unit images against random class vectors.
  constexpr std::size_t N = 20000, Cr = 8, dr = 32;
  ape::Rng rng(808);
  auto unit_rows = [&](std::size_t n) {
    ape::Tensor t({n, dr});
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0;
      for (std::size_t j = 0; j < dr; ++j) {
        t.row(i)[j] = static_cast<ape::real>(rng.normal());
        norm += double(t.row(i)[j]) * t.row(i)[j];
      }
      for (std::size_t j = 0; j < dr; ++j) t.row(i)[j] = static_cast<ape::real>(t.row(i)[j] / std::sqrt(norm));
    }
    return t;
  };
  std::vector<ape::Tensor> rand_classes;
  for (std::size_t c = 0; c < Cr; ++c) rand_classes.push_back(unit_rows(2));
  const ape::Tensor rand_images = unit_rows(N);
  std::vector<std::uint32_t> rand_labels(N);
  for (auto& l : rand_labels) l = static_cast<std::uint32_t>(rng.index(Cr));
  const double acc = ape::zero_shot_accuracy(ape::classifier_from_embeddings(rand_classes), rand_images, rand_labels);
  const double p = 1.0 / Cr, sigma = std::sqrt(p * (1 - p) / N);
  const bool ok = ortho == 1.0 && std::abs(acc - p) <= 3 * sigma;
  return {ok, fmt("orthonormal accuracy %.4f (want 1); random accuracy %.4f vs 1/C = %.4f, |diff| %.4f <= 3 sigma %.4f (N=%zu)",
                  ortho, acc, p, std::abs(acc - p), 3 * sigma, N)};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_work";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient correctness", acceptance::gradient_correctness},
      {"closed-form loss values", closed_form_losses},
      {"schedule exactness", schedule_exactness},
      {"accumulation equivalence", accumulation_equivalence},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"determinism", determinism},
      {"format round-trip", format_round_trip},
      {"zero-shot sanity", zero_shot_sanity},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
