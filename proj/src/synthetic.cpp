// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/synthetic.hpp"

#include <cmath>

#include "ape/error.hpp"
#include "ape/rng.hpp"

APE_BEGIN_NAMESPACE

namespace {

using Matrix = std::vector<double>;  // row-major

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows * cols);
  for (auto& v : m) v = rng.normal() * scale;
  return m;
}

std::vector<double> apply(const Matrix& m, std::size_t rows, std::size_t cols,
                          const std::vector<double>& x) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r] += m[r * cols + c] * x[c];
  }
  return y;
}

// Standard normal CDF, used to turn a projection into equiprobable bins.
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

class Generator {
 public:
  explicit Generator(const SyntheticConfig& c) : c_(c) {
    Rng rng(Rng::derive(c.seed, 0xA11CE));
    const double s = 1.0 / std::sqrt(static_cast<double>(c.latent));
    image_map_ = gaussian_matrix(rng, c.d_img, c.latent, s);
    for (std::uint32_t t = 0; t < c.seq_len; ++t) {
      token_maps_.push_back(gaussian_matrix(rng, c.d_tok, c.latent, s));
    }
    mix_ = gaussian_matrix(rng, c.d_tok, c.d_tok, 1.0 / std::sqrt(static_cast<double>(c.d_tok)));
    for (std::uint32_t t = 0; t < c.seq_len; ++t) {
      auto dir = gaussian_matrix(rng, 1, c.latent, 1.0);
      double norm = 0;
      for (double v : dir) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : dir) v /= norm;
      id_dirs_.push_back(std::move(dir));
    }
  }

  ShardDims dims() const { return {c_.d_img, c_.d_tok, c_.seq_len, c_.n_variants}; }

  std::vector<double> latent(Rng& rng) const {
    std::vector<double> z(c_.latent);
    for (auto& v : z) v = rng.normal();
    return z;
  }

  std::vector<float> image(const std::vector<double>& z, Rng& rng) const {
    auto y = apply(image_map_, c_.d_img, c_.latent, z);
    double norm = 0;
    for (auto& v : y) {
      v += c_.sigma * rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<float>(y[i] / norm);
    return out;
  }

  SampleRecord record(std::uint64_t id, const std::vector<double>& z, std::uint32_t length,
                      Rng& rng, bool with_images) const {
    SampleRecord r;
    r.sample_id = id;
    r.token_encodings.assign(std::size_t{c_.seq_len} * c_.d_tok, 0.0f);
    r.mask.assign(c_.seq_len, 0);
    for (std::uint32_t t = 0; t < length; ++t) {
      r.mask[t] = 1;
      auto u = apply(token_maps_[t], c_.d_tok, c_.latent, z);
      for (auto& v : u) v += c_.sigma * rng.normal();
      if (c_.nonlinear) {
        u = apply(mix_, c_.d_tok, c_.d_tok, u);
        for (auto& v : u) v = std::tanh(v);
      }
      for (std::uint32_t k = 0; k < c_.d_tok; ++k) {
        r.token_encodings[std::size_t{t} * c_.d_tok + k] = static_cast<float>(u[k]);
      }
      double proj = 0;
      for (std::uint32_t k = 0; k < c_.latent; ++k) proj += id_dirs_[t][k] * z[k];
      auto bin = static_cast<std::uint32_t>(normal_cdf(proj) * c_.bins);
      if (bin >= c_.bins) bin = c_.bins - 1;
      r.token_ids.push_back(t * c_.bins + bin);
    }
    if (with_images) {
      for (std::uint32_t v = 0; v < c_.n_variants; ++v) {
        auto img = image(z, rng);
        r.image_embeddings.insert(r.image_embeddings.end(), img.begin(), img.end());
      }
    }
    return r;
  }

  std::uint32_t draw_length(Rng& rng) const {
    const std::uint32_t lo = c_.min_len == 0 ? c_.seq_len : c_.min_len;
    return lo + static_cast<std::uint32_t>(rng.index(c_.seq_len - lo + 1));
  }

 private:
  const SyntheticConfig& c_;
  std::vector<double> image_map_;
  std::vector<std::vector<double>> token_maps_;
  std::vector<double> mix_;
  std::vector<std::vector<double>> id_dirs_;
};

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& c) {
  if (c.latent == 0 || c.d_img == 0 || c.d_tok == 0 || c.seq_len == 0 || c.n_variants == 0 ||
      c.bins == 0) {
    throw ConfigError("gen_synthetic: all dimensions must be at least 1");
  }
  if (c.min_len > c.seq_len) throw ConfigError("gen_synthetic: min_len exceeds seq_len");
  if (!(c.sigma >= 0)) throw ConfigError("gen_synthetic: sigma must be nonnegative");
  if (c.classes > 0 && c.templates == 0) {
    throw ConfigError("gen_synthetic: zero-shot task needs at least one template per class");
  }

  Generator gen(c);
  SyntheticData out;
  out.vocab_size = c.seq_len * c.bins;
  out.train.dims = out.test.dims = gen.dims();

  Rng train_rng(Rng::derive(c.seed, 1));
  for (std::uint32_t i = 0; i < c.n_train; ++i) {
    auto z = gen.latent(train_rng);
    const auto len = gen.draw_length(train_rng);
    out.train.records.push_back(gen.record(i, z, len, train_rng, true));
  }
  Rng test_rng(Rng::derive(c.seed, 2));
  for (std::uint32_t i = 0; i < c.n_test; ++i) {
    auto z = gen.latent(test_rng);
    const auto len = gen.draw_length(test_rng);
    out.test.records.push_back(gen.record(std::uint64_t{c.n_train} + i, z, len, test_rng, true));
  }

  if (c.classes > 0) {
    Rng cls_rng(Rng::derive(c.seed, 3));
    std::vector<std::vector<double>> prototypes;
    for (std::uint32_t k = 0; k < c.classes; ++k) prototypes.push_back(gen.latent(cls_rng));

    EmbeddingShard templates;
    templates.dims = gen.dims();
    for (std::uint32_t k = 0; k < c.classes; ++k) {
      for (std::uint32_t p = 0; p < c.templates; ++p) {
        auto z = prototypes[k];
        for (auto& v : z) v += 0.1 * cls_rng.normal();
        auto r = gen.record(k, z, c.seq_len, cls_rng, false);
        r.image_embeddings.assign(std::size_t{c.n_variants} * c.d_img, 0.0f);
        templates.records.push_back(std::move(r));
      }
    }
    EmbeddingShard eval;
    eval.dims = ShardDims{c.d_img, 1, 1, 1};
    for (std::uint32_t k = 0; k < c.classes; ++k) {
      for (std::uint32_t i = 0; i < c.eval_per_class; ++i) {
        auto z = prototypes[k];
        for (auto& v : z) v += 0.3 * cls_rng.normal();
        SampleRecord r;
        r.sample_id = k;
        r.token_encodings = {0.0f};
        r.mask = {1};
        r.token_ids = {0};
        r.image_embeddings = gen.image(z, cls_rng);
        eval.records.push_back(std::move(r));
      }
    }
    out.zs_templates = std::move(templates);
    out.zs_eval = std::move(eval);
  }
  return out;
}

APE_END_NAMESPACE
