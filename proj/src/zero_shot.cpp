// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/zero_shot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ape/dataset.hpp"
#include "ape/ops.hpp"

APE_BEGIN_NAMESPACE

namespace {

// Number of items that outrank item `target` for one query row.
std::size_t rank_of(const std::vector<double>& scores, std::size_t target) {
  const double s = scores[target];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < target)) ++rank;
  }
  return rank;
}

std::vector<std::size_t> ranks(const Tensor& queries, const Tensor& items) {
  const std::size_t n = queries.dim(0);
  const std::size_t d = queries.dim(1);
  std::vector<std::size_t> out(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const real* q = queries.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const real* it = items.row(j);
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(q[k]) * it[k];
      scores[j] = dot;
    }
    out[i] = rank_of(scores, i);
  }
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace

ZeroShotClassifier classifier_from_embeddings(const std::vector<Tensor>& per_class,
                                              std::vector<std::string> class_names) {
  if (per_class.empty()) throw ConfigError("zero-shot classifier needs at least one class");
  if (!class_names.empty() && class_names.size() != per_class.size()) {
    throw ConfigError("got " + std::to_string(class_names.size()) + " class names for " +
                      std::to_string(per_class.size()) + " classes");
  }
  const std::size_t d = per_class.front().cols();
  ZeroShotClassifier c;
  c.class_vectors = Tensor({per_class.size(), d});
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const Tensor& t = per_class[k];
    const std::string name = class_names.empty() ? std::to_string(k) : class_names[k];
    if (t.rank() != 2 || t.dim(0) == 0) {
      throw ConfigError("class '" + name + "' has no templates");
    }
    if (t.dim(1) != d) throw DimensionError("class '" + name + "' template width mismatch");
    const Tensor unit = normalized_rows(t);
    std::vector<double> mean(d, 0.0);
    for (std::size_t p = 0; p < unit.dim(0); ++p) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += unit.row(p)[j];
    }
    double norm = 0;
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0)) throw NumericError("class '" + name + "' templates average to zero");
    for (std::size_t j = 0; j < d; ++j) c.class_vectors.row(k)[j] = static_cast<real>(mean[j] / norm);
  }
  if (class_names.empty()) {
    for (std::size_t k = 0; k < per_class.size(); ++k) class_names.push_back(std::to_string(k));
  }
  c.class_names = std::move(class_names);
  return c;
}

Tensor embed_texts(AlignmentModel& model, const EmbeddingShard& shard, std::size_t batch_size) {
  std::vector<Tensor> parts;
  const auto pool = record_pool(shard);
  for (std::size_t begin = 0; begin < pool.size(); begin += batch_size) {
    const std::size_t end = std::min(pool.size(), begin + batch_size);
    std::vector<std::uint32_t> variants(end - begin, 0);
    const Batch b = assemble_batch(shard.dims, std::span(pool).subspan(begin, end - begin), variants);
    Tape tape;
    parts.push_back(tape.value(model.embed_text(tape, text_input(b))));
  }
  if (parts.empty()) return Tensor({0, model.config().d_out});
  return concat_rows(parts);
}

Tensor embed_images(AlignmentModel& model, const Tensor& images, std::size_t batch_size) {
  std::vector<Tensor> parts;
  const std::size_t n = images.rank() ? images.dim(0) : 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    const Tensor chunk = slice_rows(images, begin, end);
    Tape tape;
    parts.push_back(tape.value(model.embed_image(tape, tape.constant_ref(chunk))));
  }
  if (parts.empty()) return Tensor({0, model.config().d_out});
  return concat_rows(parts);
}

ZeroShotClassifier build_classifier(AlignmentModel& model, const EmbeddingShard& templates,
                                    std::vector<std::string> class_names,
                                    std::size_t batch_size) {
  std::size_t n_classes = class_names.size();
  if (n_classes == 0) {
    for (const auto& r : templates.records) {
      n_classes = std::max<std::size_t>(n_classes, static_cast<std::size_t>(r.sample_id) + 1);
    }
  }
  const Tensor emb = embed_texts(model, templates, batch_size);
  std::vector<std::vector<std::size_t>> rows(n_classes);
  for (std::size_t i = 0; i < templates.records.size(); ++i) {
    const auto cls = templates.records[i].sample_id;
    if (cls >= n_classes) {
      throw DataError("template record " + std::to_string(i) + " names class " +
                      std::to_string(cls) + " but only " + std::to_string(n_classes) +
                      " classes exist");
    }
    rows[cls].push_back(i);
  }
  std::vector<Tensor> per_class;
  for (std::size_t k = 0; k < n_classes; ++k) {
    if (rows[k].empty()) {
      const std::string name = class_names.empty() ? std::to_string(k) : class_names[k];
      throw ConfigError("class '" + name + "' (index " + std::to_string(k) + ") has no templates");
    }
    Tensor t({rows[k].size(), emb.cols()});
    for (std::size_t p = 0; p < rows[k].size(); ++p) {
      std::copy(emb.row(rows[k][p]), emb.row(rows[k][p]) + emb.cols(), t.row(p));
    }
    per_class.push_back(std::move(t));
  }
  return classifier_from_embeddings(per_class, std::move(class_names));
}

LabelMap parse_label_map(const std::string& text) {
  LabelMap map;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::string lhs;
    std::string rhs;
    for (const std::string sep : {"\xE2\x86\x92", "->", "\t", " ", ","}) {
      if (auto pos = line.find(sep); pos != std::string::npos) {
        lhs = trim(line.substr(0, pos));
        rhs = trim(line.substr(pos + sep.size()));
        break;
      }
    }
    try {
      std::size_t a = 0;
      std::size_t b = 0;
      const auto from = std::stoull(lhs, &a);
      const auto to = std::stoul(rhs, &b);
      if (a != lhs.size() || b != rhs.size() || lhs.empty() || rhs.empty()) throw std::exception();
      if (!map.emplace(from, static_cast<std::uint32_t>(to)).second) {
        throw DataError("label map line " + std::to_string(line_no) + ": duplicate label " + lhs);
      }
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("label map line " + std::to_string(line_no) + ": expected "
                      "'eval_label\xE2\x86\x92" "classifier_index', got '" + line + "'");
    }
  }
  return map;
}

LabelMap read_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label map " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_label_map(ss.str());
}

std::vector<std::string> read_class_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open class names " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

EvalSet make_eval_set(std::string name, const EmbeddingShard& shard, const LabelMap& labels) {
  EvalSet set;
  set.name = std::move(name);
  const std::size_t n = shard.records.size();
  set.images = Tensor({n, shard.dims.d_img});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = shard.records[i];
    std::copy(r.image_embeddings.begin(), r.image_embeddings.begin() + shard.dims.d_img,
              set.images.row(i));
    if (labels.empty()) {
      set.labels.push_back(static_cast<std::uint32_t>(r.sample_id));
    } else {
      auto it = labels.find(r.sample_id);
      if (it == labels.end()) {
        throw DataError("eval set '" + set.name + "': label " + std::to_string(r.sample_id) +
                        " of record " + std::to_string(i) + " missing from label map");
      }
      set.labels.push_back(it->second);
    }
  }
  return set;
}

std::vector<std::uint32_t> predict(const ZeroShotClassifier& classifier, const Tensor& image_emb) {
  const Tensor& cv = classifier.class_vectors;
  if (image_emb.rank() != 2 || image_emb.cols() != cv.cols()) {
    throw DimensionError("image embeddings " + shape_to_string(image_emb.shape()) +
                         " vs class vectors " + shape_to_string(cv.shape()));
  }
  const std::size_t d = cv.cols();
  std::vector<std::uint32_t> out(image_emb.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const real* x = image_emb.row(i);
    double best = 0;
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < cv.dim(0); ++c) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(x[k]) * cv.row(c)[k];
      if (c == 0 || dot > best) {
        best = dot;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    out[i] = arg;
  }
  return out;
}

double zero_shot_accuracy(const ZeroShotClassifier& classifier, const Tensor& image_emb,
                          std::span<const std::uint32_t> labels) {
  const auto pred = predict(classifier, image_emb);
  if (pred.size() != labels.size()) {
    throw DimensionError(std::to_string(pred.size()) + " images but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (pred.empty()) return 0.0;
  const auto n_classes = classifier.class_vectors.dim(0);
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " outside [0, " +
                      std::to_string(n_classes) + ")");
    }
    correct += pred[i] == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double zero_shot_accuracy(const ZeroShotClassifier& classifier, AlignmentModel& model,
                          const EvalSet& set) {
  return zero_shot_accuracy(classifier, embed_images(model, set.images), set.labels);
}

std::vector<double> recall_at_ks(const Tensor& img, const Tensor& txt,
                                 std::span<const std::size_t> ks, RecallDirection direction) {
  if (img.rank() != 2 || img.shape() != txt.shape()) {
    throw DimensionError("recall: image " + shape_to_string(img.shape()) + " vs text " +
                         shape_to_string(txt.shape()));
  }
  const std::size_t n = img.dim(0);
  for (auto k : ks) {
    if (k < 1 || k > n) {
      throw RangeError("recall@" + std::to_string(k) + " needs 1 <= k <= N = " + std::to_string(n));
    }
  }
  std::vector<double> out(ks.size(), 0.0);
  auto accumulate = [&](const std::vector<std::size_t>& r, double weight) {
    for (std::size_t q = 0; q < ks.size(); ++q) {
      const auto hits = std::count_if(r.begin(), r.end(), [&](auto x) { return x < ks[q]; });
      out[q] += weight * static_cast<double>(hits) / static_cast<double>(n);
    }
  };
  if (direction == RecallDirection::image_to_text) accumulate(ranks(img, txt), 1.0);
  if (direction == RecallDirection::text_to_image) accumulate(ranks(txt, img), 1.0);
  if (direction == RecallDirection::mean) {
    accumulate(ranks(img, txt), 0.5);
    accumulate(ranks(txt, img), 0.5);
  }
  return out;
}

double recall_at_k(const Tensor& img, const Tensor& txt, std::size_t k, RecallDirection direction) {
  const std::size_t ks[] = {k};
  return recall_at_ks(img, txt, ks, direction).front();
}

RecallDirection recall_direction_from_string(const std::string& s) {
  if (s == "i2t" || s == "image_to_text") return RecallDirection::image_to_text;
  if (s == "t2i" || s == "text_to_image") return RecallDirection::text_to_image;
  if (s == "mean" || s == "both") return RecallDirection::mean;
  throw ConfigError("unknown recall direction '" + s + "' (expected i2t, t2i or mean)");
}

APE_END_NAMESPACE
