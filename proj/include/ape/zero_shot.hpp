// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ape/align_head.hpp"
#include "ape/embed_store.hpp"

APE_BEGIN_NAMESPACE

struct ZeroShotClassifier {
  std::vector<std::string> class_names;
  Tensor class_vectors;  // C x d_out, unit rows
};

/// Class vector = normalize(mean of normalized template embeddings).
/// `per_class[c]` is a [P_c x d] matrix of template embeddings.
ZeroShotClassifier classifier_from_embeddings(const std::vector<Tensor>& per_class,
                                              std::vector<std::string> class_names = {});

/// Embeds every template record through the text head and averages per class.
/// Records carry their class index in sample_id. The class count is
/// class_names.size() when given, otherwise max(sample_id) + 1; a class with
/// no template raises ConfigError naming it.
ZeroShotClassifier build_classifier(AlignmentModel& model, const EmbeddingShard& templates,
                                    std::vector<std::string> class_names = {},
                                    std::size_t batch_size = 256);

/// Maps raw eval labels onto classifier indices ("eval_label→classifier_index").
using LabelMap = std::map<std::uint64_t, std::uint32_t>;
LabelMap read_label_map(const std::filesystem::path& path);
LabelMap parse_label_map(const std::string& text);
std::vector<std::string> read_class_names(const std::filesystem::path& path);

struct EvalSet {
  std::string name;
  Tensor images;                      // N x d_img (variant 0)
  std::vector<std::uint32_t> labels;  // classifier indices
};

/// Labels come from each record's sample_id, remapped through `labels` when
/// non-empty. Unmapped labels raise DataError.
EvalSet make_eval_set(std::string name, const EmbeddingShard& shard, const LabelMap& labels = {});

/// Unit image embeddings [N x d_out] through the (optional) image head.
Tensor embed_images(AlignmentModel& model, const Tensor& images, std::size_t batch_size = 512);
/// Unit text embeddings [N x d_out] for every record of a shard.
Tensor embed_texts(AlignmentModel& model, const EmbeddingShard& shard,
                   std::size_t batch_size = 256);

/// argmax_c <image, class_c>, ties to the lowest class index.
std::vector<std::uint32_t> predict(const ZeroShotClassifier& classifier, const Tensor& image_emb);
double zero_shot_accuracy(const ZeroShotClassifier& classifier, const Tensor& image_emb,
                          std::span<const std::uint32_t> labels);
double zero_shot_accuracy(const ZeroShotClassifier& classifier, AlignmentModel& model,
                          const EvalSet& set);

enum class RecallDirection { image_to_text, text_to_image, mean };

/// Fraction of queries whose true partner (same row index) ranks within the
/// top k by inner product. Ties rank the lower index first. k > N raises
/// RangeError.
double recall_at_k(const Tensor& img, const Tensor& txt, std::size_t k,
                   RecallDirection direction = RecallDirection::image_to_text);
/// Several k at once from a single ranking pass.
std::vector<double> recall_at_ks(const Tensor& img, const Tensor& txt,
                                 std::span<const std::size_t> ks,
                                 RecallDirection direction = RecallDirection::image_to_text);
RecallDirection recall_direction_from_string(const std::string& s);

APE_END_NAMESPACE
