// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ape/align_head.hpp"
#include "ape/dataset.hpp"
#include "ape/tape.hpp"

APE_BEGIN_NAMESPACE

/// Symmetric batch contrastive loss. With S[i][j] = exp(log_scale) <img_i, txt_j>
/// the loss is the mean of the row-wise (image -> text) and column-wise
/// (text -> image) cross-entropies, each targeting the diagonal.
struct ContrastiveResult {
  double loss = 0;
  Tensor d_img;  // B x d
  Tensor d_txt;  // B x d
  double d_log_scale = 0;
};

/// Loss and its gradients w.r.t. both embedding matrices and log_scale.
/// Softmaxes subtract the row/column max and all reductions run in double.
/// A non-finite logit raises NumericError naming the (image, text) pair.
ContrastiveResult contrastive_forward_backward(const Tensor& img, const Tensor& txt,
                                               real log_scale);

double contrastive_loss_value(const Tensor& img, const Tensor& txt, real log_scale);

/// Tape op producing a [1] loss node. `loss_out`, when given, receives the
/// double-precision value before it is rounded to `real`.
Var contrastive_loss(Tape& tape, Var img, Var txt, Var log_scale, double* loss_out = nullptr);

struct LossAndGrads {
  double loss = 0;
  Tensor txt_emb;
  Tensor img_emb;
};

/// Full pipeline on one tape: embed_text, embed_image, contrastive_loss.
/// Zeroes and then fills the gradient of every model parameter.
LossAndGrads loss_and_grads(AlignmentModel& model, const Batch& batch);

/// Forward only: the loss of `batch` under the current parameters.
double evaluate_loss(AlignmentModel& model, const Batch& batch);

APE_END_NAMESPACE
