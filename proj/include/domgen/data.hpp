// domgen/data.hpp
//
// Dataset manifests, soft valence labels from annotator ratings, class
// weights, cross-corpus fold construction, and padded batch assembly.

// Copyright 2026  The domgen authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "domgen/common.hpp"
#include "domgen/features.hpp"
#include "domgen/tensor.hpp"

namespace domgen {

inline constexpr int kNumClasses = 3;  // low / mid / high valence

struct UtteranceRecord {
  std::string id;
  std::string dataset;
  std::string subject;
  std::string feature_path;  // MFB1 cache; may be empty if audio_path is set
  std::string audio_path;    // WAV; may be empty if feature_path is set
  std::vector<double> ratings;   // empty for unlabeled utterances
  double scale_midpoint = 0.0;   // 3 on a 1-5 scale, 5 on a 1-9 scale

  bool labeled() const { return !ratings.empty(); }
};

// Probability over (low, mid, high). Constructed only through bin_ratings,
// which rejects ties, so the majority bin is always unique.
struct SoftLabel {
  std::array<double, 3> p{0.0, 0.0, 0.0};

  int majority() const {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (p[static_cast<std::size_t>(k)] > p[static_cast<std::size_t>(best)]) best = k;
    return best;
  }
};

// Counts ratings below / at / above the scale midpoint and normalizes.
// Returns nothing when the maximum count is shared (no clear majority bin);
// such utterances are dropped from training and evaluation.
inline std::optional<SoftLabel> bin_ratings(const std::vector<double>& ratings,
                                            double midpoint) {
  require(!ratings.empty(), "bin_ratings: empty ratings");
  std::array<int, 3> counts{0, 0, 0};
  for (double r : ratings) {
    if (r < midpoint)
      ++counts[0];
    else if (r > midpoint)
      ++counts[2];
    else
      ++counts[1];
  }
  const int top = std::max({counts[0], counts[1], counts[2]});
  int winners = 0;
  for (int c : counts) winners += c == top ? 1 : 0;
  if (winners != 1) return std::nullopt;

  SoftLabel label;
  const double total = static_cast<double>(ratings.size());
  for (int k = 0; k < 3; ++k) label.p[static_cast<std::size_t>(k)] = counts[static_cast<std::size_t>(k)] / total;
  return label;
}

// w_k = N / (3 n_k) over majority-bin counts, so that each bin carries
// equal total weight.
inline std::array<double, 3> class_weights(const std::vector<SoftLabel>& labels) {
  require(!labels.empty(), "class_weights: no labels");
  std::array<std::int64_t, 3> counts{0, 0, 0};
  for (const SoftLabel& l : labels) ++counts[static_cast<std::size_t>(l.majority())];
  std::array<double, 3> w{};
  const double n = static_cast<double>(labels.size());
  for (int k = 0; k < 3; ++k) {
    require(counts[static_cast<std::size_t>(k)] > 0, "class_weights: bin ", k,
            " has no examples; cannot equalize");
    w[static_cast<std::size_t>(k)] = n / (3.0 * static_cast<double>(counts[static_cast<std::size_t>(k)]));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Fold plans

struct FoldPlan {
  std::vector<std::string> train_src;
  std::vector<std::string> train_tar_labeled;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::vector<std::string> unlabeled_tar_pool;
  int half = 1;
  bool val_from_src = false;
};

namespace detail {

inline std::vector<std::string> sorted_shuffled(std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  return ids;
}

inline std::int64_t train_share(std::int64_t n) {
  return std::llround(0.8 * static_cast<double>(n));
}

}  // namespace detail

// SRC 80:20 train/val; the whole TAR set serves as both the unlabeled pool
// and the test set (transductive, no TAR labels).
inline FoldPlan split_exp1(const std::vector<std::string>& src_ids,
                           const std::vector<std::string>& tar_ids, std::uint64_t seed) {
  require(src_ids.size() >= 5, "split_exp1: need at least 5 SRC utterances, got ",
          src_ids.size());
  require(!tar_ids.empty(), "split_exp1: empty TAR set");

  std::vector<std::string> src = detail::sorted_shuffled(src_ids, derive_seed(seed, "src-split"));
  const std::int64_t n_train = detail::train_share(static_cast<std::int64_t>(src.size()));

  FoldPlan plan;
  plan.train_src.assign(src.begin(), src.begin() + n_train);
  plan.val.assign(src.begin() + n_train, src.end());
  plan.val_from_src = true;
  plan.test = tar_ids;
  std::sort(plan.test.begin(), plan.test.end());
  plan.unlabeled_tar_pool = plan.test;
  return plan;
}

// TAR is halved by one seeded permutation; `half` picks which half is the
// test set. n_labeled utterances from the other half become labeled TAR,
// split 80:20 train/val; the rest of that half is discarded so the amount
// of unlabeled data stays constant across budgets. The unlabeled pool is
// the test half plus the labeled-TAR train portion. With n_labeled = 0
// validation falls back to a SRC 80:20 split.
inline FoldPlan split_fig4(const std::vector<std::string>& src_ids,
                           const std::vector<std::string>& tar_ids, std::int64_t n_labeled,
                           int half, std::uint64_t seed) {
  require(half == 1 || half == 2, "split_fig4: half must be 1 or 2, got ", half);
  require(n_labeled >= 0, "split_fig4: negative label budget");
  require(src_ids.size() >= 5, "split_fig4: need at least 5 SRC utterances, got ",
          src_ids.size());
  require(tar_ids.size() >= 2, "split_fig4: need at least 2 TAR utterances");

  std::vector<std::string> tar = detail::sorted_shuffled(tar_ids, derive_seed(seed, "tar-halves"));
  const std::size_t cut = tar.size() / 2;
  std::vector<std::string> first(tar.begin(), tar.begin() + static_cast<std::int64_t>(cut));
  std::vector<std::string> second(tar.begin() + static_cast<std::int64_t>(cut), tar.end());
  std::vector<std::string>& test_half = half == 1 ? first : second;
  std::vector<std::string>& label_half = half == 1 ? second : first;

  require(n_labeled <= static_cast<std::int64_t>(label_half.size()),
          "split_fig4: label budget ", n_labeled, " exceeds half size ", label_half.size());

  FoldPlan plan;
  plan.half = half;
  plan.test = test_half;
  plan.unlabeled_tar_pool = test_half;

  if (n_labeled == 0) {
    std::vector<std::string> src =
        detail::sorted_shuffled(src_ids, derive_seed(seed, "src-split"));
    const std::int64_t n_train = detail::train_share(static_cast<std::int64_t>(src.size()));
    plan.train_src.assign(src.begin(), src.begin() + n_train);
    plan.val.assign(src.begin() + n_train, src.end());
    plan.val_from_src = true;
    return plan;
  }

  plan.train_src = src_ids;
  std::sort(plan.train_src.begin(), plan.train_src.end());
  const std::int64_t n_train_tar = detail::train_share(n_labeled);
  plan.train_tar_labeled.assign(label_half.begin(), label_half.begin() + n_train_tar);
  plan.val.assign(label_half.begin() + n_train_tar, label_half.begin() + n_labeled);
  plan.unlabeled_tar_pool.insert(plan.unlabeled_tar_pool.end(), plan.train_tar_labeled.begin(),
                                 plan.train_tar_labeled.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Materialized utterances and batches

struct Utterance {
  std::string id;
  int dataset = 0;  // contiguous index, 0..D-1
  std::string subject;
  Tensor features;  // 40 x T
  bool labeled = false;
  SoftLabel label;
};

struct Batch {
  std::vector<Tensor> features;  // each 40 x T_max, zero-padded to the batch max
  std::vector<std::int64_t> lengths;
  std::vector<SoftLabel> labels;  // empty when assembled without labels
  std::vector<int> dataset_indices;

  std::size_t size() const { return features.size(); }
};

inline Batch make_batch(const std::vector<const Utterance*>& items, bool with_labels) {
  require(!items.empty(), "make_batch: empty batch");
  std::int64_t t_max = 0;
  for (const Utterance* u : items) t_max = std::max(t_max, u->features.dim(1));

  Batch batch;
  for (const Utterance* u : items) {
    const std::int64_t t = u->features.dim(1);
    Tensor padded({kNumMelBins, t_max});
    for (std::int64_t c = 0; c < kNumMelBins; ++c)
      std::copy_n(u->features.values().begin() + c * t, static_cast<std::size_t>(t),
                  padded.values().begin() + c * t_max);
    batch.features.push_back(std::move(padded));
    batch.lengths.push_back(t);
    batch.dataset_indices.push_back(u->dataset);
    if (with_labels) {
      require(u->labeled, "make_batch: utterance ", u->id, " has no label");
      batch.labels.push_back(u->label);
    }
  }
  return batch;
}

// Sequential slices of a per-epoch permutation; reshuffles when exhausted.
// The final slice of an epoch may be short.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    require(n > 0, "EpochSampler: empty pool");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> next(std::size_t m) {
    require(m > 0, "EpochSampler: batch size must be positive");
    if (pos_ >= order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    const std::size_t take = std::min(m, order_.size() - pos_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::int64_t>(pos_),
                                 order_.begin() + static_cast<std::int64_t>(pos_ + take));
    pos_ += take;
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// I.i.d. with replacement.
class UniformSampler {
 public:
  UniformSampler(std::size_t n, std::uint64_t seed) : rng_(seed), n_(n) {
    require(n > 0, "UniformSampler: empty pool");
  }

  std::vector<std::size_t> next(std::size_t m) {
    require(m > 0, "UniformSampler: batch size must be positive");
    std::vector<std::size_t> out(m);
    for (std::size_t& i : out) i = static_cast<std::size_t>(rng_.below(n_));
    return out;
  }

 private:
  Rng rng_;
  std::size_t n_;
};

// ---------------------------------------------------------------------------
// JSON-lines manifests

inline std::vector<UtteranceRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(detail::str_cat("cannot open manifest ", path));
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(detail::str_cat(path, ":", line_no, ": invalid JSON: ", e.what()));
    }
    UtteranceRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.dataset = j.at("dataset").get<std::string>();
      rec.subject = j.at("subject").get<std::string>();
      rec.feature_path = j.value("feature_path", std::string());
      rec.audio_path = j.value("audio_path", std::string());
      if (j.contains("ratings")) rec.ratings = j["ratings"].get<std::vector<double>>();
      rec.scale_midpoint = j.value("scale_midpoint", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(detail::str_cat(path, ":", line_no, ": bad record: ", e.what()));
    }
    require(!rec.id.empty(), path, ":", line_no, ": empty id");
    require(!rec.dataset.empty(), path, ":", line_no, ": empty dataset");
    require(!rec.subject.empty(), path, ":", line_no, ": empty subject");
    require(!rec.feature_path.empty() || !rec.audio_path.empty(), path, ":", line_no,
            ": need feature_path or audio_path");
    if (rec.labeled())
      require(rec.scale_midpoint > 0.0, path, ":", line_no,
              ": labeled record needs a scale midpoint");
    records.push_back(std::move(rec));
  }
  return records;
}

inline void write_manifest(const std::vector<UtteranceRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(detail::str_cat("cannot open ", path, " for writing"));
  for (const UtteranceRecord& rec : records) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["dataset"] = rec.dataset;
    j["subject"] = rec.subject;
    if (!rec.feature_path.empty()) j["feature_path"] = rec.feature_path;
    if (!rec.audio_path.empty()) j["audio_path"] = rec.audio_path;
    if (rec.labeled()) {
      j["ratings"] = rec.ratings;
      j["scale_midpoint"] = rec.scale_midpoint;
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError(detail::str_cat("short write to ", path));
}

// Per-dataset histogram of majority bins (plus tie-rejected and unlabeled
// counts), as reported by manifest validation.
struct LabelHistogram {
  std::array<std::int64_t, 3> bins{0, 0, 0};
  std::int64_t rejected = 0;
  std::int64_t unlabeled = 0;
};

inline std::map<std::string, LabelHistogram> label_histograms(
    const std::vector<UtteranceRecord>& records) {
  std::map<std::string, LabelHistogram> out;
  for (const UtteranceRecord& rec : records) {
    LabelHistogram& h = out[rec.dataset];
    if (!rec.labeled()) {
      ++h.unlabeled;
      continue;
    }
    const std::optional<SoftLabel> label = bin_ratings(rec.ratings, rec.scale_midpoint);
    if (!label) {
      ++h.rejected;
      continue;
    }
    ++h.bins[static_cast<std::size_t>(label->majority())];
  }
  return out;
}

}  // namespace domgen
