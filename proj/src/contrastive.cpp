// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/contrastive.hpp"

#include <cmath>
#include <memory>
#include <sstream>

APE_BEGIN_NAMESPACE

ContrastiveResult contrastive_forward_backward(const Tensor& img, const Tensor& txt,
                                               real log_scale) {
  if (img.rank() != 2 || txt.shape() != img.shape() || img.dim(0) == 0) {
    throw DimensionError("contrastive loss: image " + shape_to_string(img.shape()) +
                         " and text " + shape_to_string(txt.shape()) + " must both be B x d");
  }
  const std::size_t n = img.dim(0);
  const std::size_t d = img.dim(1);
  const double scale = std::exp(static_cast<double>(log_scale));

  std::vector<double> logits(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const real* a = img.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const real* b = txt.row(j);
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(a[k]) * b[k];
      const double s = scale * dot;
      if (!std::isfinite(s)) {
        std::ostringstream os;
        os << "non-finite logit " << s << " for image " << i << " / text " << j;
        throw NumericError(os.str());
      }
      logits[i * n + j] = s;
    }
  }

  // dL/dS = (P_row - I + P_col - I) / (2n)
  std::vector<double> d_logits(n * n, 0.0);
  double row_loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = &logits[i * n];
    double mx = s[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s[j]);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(s[j] - mx);
    const double lse = mx + std::log(z);
    row_loss += lse - s[i];
    for (std::size_t j = 0; j < n; ++j) d_logits[i * n + j] += std::exp(s[j] - lse);
    d_logits[i * n + i] -= 1.0;
  }
  double col_loss = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double mx = logits[j];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i * n + j]);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i * n + j] - mx);
    const double lse = mx + std::log(z);
    col_loss += lse - logits[j * n + j];
    for (std::size_t i = 0; i < n; ++i) d_logits[i * n + j] += std::exp(logits[i * n + j] - lse);
    d_logits[j * n + j] -= 1.0;
  }
  const double inv = 1.0 / (2.0 * static_cast<double>(n));
  for (auto& g : d_logits) g *= inv;

  ContrastiveResult r;
  r.loss = 0.5 * (row_loss + col_loss) / static_cast<double>(n);
  r.d_img = Tensor(img.shape());
  r.d_txt = Tensor(txt.shape());
  std::vector<double> acc(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double g = d_logits[i * n + j];
      const real* b = txt.row(j);
      for (std::size_t k = 0; k < d; ++k) acc[k] += g * b[k];
    }
    for (std::size_t k = 0; k < d; ++k) r.d_img.row(i)[k] = static_cast<real>(scale * acc[k]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = d_logits[i * n + j];
      const real* a = img.row(i);
      for (std::size_t k = 0; k < d; ++k) acc[k] += g * a[k];
    }
    for (std::size_t k = 0; k < d; ++k) r.d_txt.row(j)[k] = static_cast<real>(scale * acc[k]);
  }
  // S = exp(log_scale) G, so dS/dlog_scale = S.
  double dls = 0;
  for (std::size_t i = 0; i < n * n; ++i) dls += d_logits[i] * logits[i];
  r.d_log_scale = dls;
  return r;
}

double contrastive_loss_value(const Tensor& img, const Tensor& txt, real log_scale) {
  return contrastive_forward_backward(img, txt, log_scale).loss;
}

Var contrastive_loss(Tape& tape, Var img, Var txt, Var log_scale, double* loss_out) {
  auto result = std::make_shared<ContrastiveResult>(
      contrastive_forward_backward(tape.value(img), tape.value(txt), tape.value(log_scale).item()));
  if (loss_out) *loss_out = result->loss;
  Tensor out = Tensor::scalar(static_cast<real>(result->loss));
  Tape::BackwardFn fn;
  if (tape.requires_grad(img) || tape.requires_grad(txt) || tape.requires_grad(log_scale)) {
    fn = [img, txt, log_scale, result](Tape& t, Var self) {
      const double g = t.grad(self)[0];
      if (t.requires_grad(img)) {
        Tensor& di = t.grad_buffer(img);
        for (std::size_t k = 0; k < di.numel(); ++k) di[k] += static_cast<real>(g * result->d_img[k]);
      }
      if (t.requires_grad(txt)) {
        Tensor& dt = t.grad_buffer(txt);
        for (std::size_t k = 0; k < dt.numel(); ++k) dt[k] += static_cast<real>(g * result->d_txt[k]);
      }
      if (t.requires_grad(log_scale)) {
        t.grad_buffer(log_scale)[0] += static_cast<real>(g * result->d_log_scale);
      }
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

LossAndGrads loss_and_grads(AlignmentModel& model, const Batch& batch) {
  model.zero_grad();
  Tape tape;
  Var txt = model.embed_text(tape, text_input(batch));
  Var img = model.embed_image(tape, tape.constant_ref(batch.images));
  LossAndGrads out;
  Var loss = contrastive_loss(tape, img, txt, tape.parameter(model.temperature().log_scale),
                              &out.loss);
  tape.backward(loss);
  out.txt_emb = tape.value(txt);
  out.img_emb = tape.value(img);
  return out;
}

double evaluate_loss(AlignmentModel& model, const Batch& batch) {
  Tape tape;
  Var txt = model.embed_text(tape, text_input(batch));
  Var img = model.embed_image(tape, tape.constant_ref(batch.images));
  return contrastive_loss_value(tape.value(img), tape.value(txt),
                                model.temperature().log_scale.value[0]);
}

APE_END_NAMESPACE
