// domgen/train.hpp
//
// Loss functions and the training procedures: the plain CNN baseline, the
// target-only SP baseline, ADDoG (adversarial two-set alignment with a
// Wasserstein critic), and MADDoG (one-vs-all multi-dataset critic), plus
// the epoch loop with validation-based model selection.

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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/data.hpp"
#include "domgen/gradcheck.hpp"
#include "domgen/models.hpp"
#include "domgen/optim.hpp"
#include "domgen/tensor.hpp"

namespace domgen {

enum class Method { kCnn, kSp, kAddog, kMaddog };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kCnn: return "cnn";
    case Method::kSp: return "sp";
    case Method::kAddog: return "addog";
    case Method::kMaddog: return "maddog";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::kCnn, Method::kSp, Method::kAddog, Method::kMaddog})
    if (name == method_name(m)) return m;
  throw ValueError(detail::str_cat("unknown method '", name,
                                   "'; expected cnn, sp, addog, or maddog"));
}

struct TrainConfig {
  Method method = Method::kCnn;
  int m = 32;           // batch size
  int n_critic = 5;     // critic cycles per encoder/classifier cycle
  double clip_c = 0.01; // critic weight clip bound
  double lambda = 0.1;  // critic-loss weight in the MADDoG encoder update
  int epochs = 30;
  int channels = 128;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    require(m > 0, "TrainConfig: batch size must be positive, got ", m);
    require(n_critic > 0, "TrainConfig: n_critic must be positive, got ", n_critic);
    require(clip_c > 0.0, "TrainConfig: clip bound must be positive, got ", clip_c);
    require(lambda >= 0.0, "TrainConfig: lambda must be nonnegative, got ", lambda);
    require(epochs > 0, "TrainConfig: epochs must be positive, got ", epochs);
    require(channels > 0, "TrainConfig: channels must be positive, got ", channels);
    require(learning_rate > 0.0, "TrainConfig: learning rate must be positive, got ",
            learning_rate);
  }
};

// The five utterance pools a training run can see. Test labels are never
// consulted: the trainer strips them on construction.
struct TrainData {
  std::vector<Utterance> train_src;
  std::vector<Utterance> train_tar_labeled;
  std::vector<Utterance> unlabeled_tar;
  std::vector<Utterance> val;
  std::vector<Utterance> test;
};

// ---------------------------------------------------------------------------
// Losses

// -(1/B) sum_i sum_k y_ik * w_k * log(p_ik), log clamped at 1e-12.
inline Tensor weighted_xent(const Tensor& probs, const std::vector<SoftLabel>& labels,
                            const std::array<double, 3>& w) {
  require(probs.rank() == 2 && probs.dim(1) == kNumClasses,
          "weighted_xent: probabilities must be B x ", kNumClasses);
  require(probs.dim(0) == static_cast<std::int64_t>(labels.size()),
          "weighted_xent: ", probs.dim(0), " probability rows vs ", labels.size(), " labels");
  const std::int64_t b = probs.dim(0);
  Tensor yw({b, kNumClasses});
  for (std::int64_t i = 0; i < b; ++i)
    for (int k = 0; k < kNumClasses; ++k)
      yw.values()[static_cast<std::size_t>(i * kNumClasses + k)] =
          labels[static_cast<std::size_t>(i)].p[static_cast<std::size_t>(k)] *
          w[static_cast<std::size_t>(k)];
  return scale(sum(mul(log_clamped(probs), yw)), -1.0 / static_cast<double>(b));
}

enum class CriticPhase { kCriticPhase, kEncoderPhase };

// Critic phase: mean(S) - mean(T), pushing TAR scores up and SRC scores
// down. Encoder phase: the exact negation.
inline Tensor critic_loss_addog(const Tensor& src_scores, const Tensor& tar_scores,
                                CriticPhase phase) {
  require(src_scores.size() == tar_scores.size(), "critic_loss_addog: ", src_scores.size(),
          " SRC scores vs ", tar_scores.size(), " TAR scores");
  return phase == CriticPhase::kCriticPhase ? sub(mean(src_scores), mean(tar_scores))
                                            : sub(mean(tar_scores), mean(src_scores));
}

// One-vs-all dataset weights DS_w[d] = (N - n_d) / n_d, so each dataset's
// own samples carry the same total weight as everyone else's.
inline std::vector<double> dsw_weights(const std::vector<std::int64_t>& counts) {
  require(!counts.empty(), "dsw_weights: no datasets");
  std::int64_t total = 0;
  for (std::int64_t c : counts) {
    require(c > 0, "dsw_weights: dataset with zero utterances");
    total += c;
  }
  std::vector<double> w(counts.size());
  for (std::size_t d = 0; d < counts.size(); ++d)
    w[d] = static_cast<double>(total - counts[d]) / static_cast<double>(counts[d]);
  return w;
}

// Flip each row's own-dataset column, scale it by -DS_w, then take the mean
// over all m * D entries.
inline Tensor maddog_critic_loss(const Tensor& scores, const std::vector<int>& ds,
                                 const std::vector<double>& ds_w) {
  require(scores.rank() == 2, "maddog_critic_loss: scores must be m x D");
  const std::int64_t m = scores.dim(0), d = scores.dim(1);
  require(static_cast<std::int64_t>(ds.size()) == m, "maddog_critic_loss: ", ds.size(),
          " dataset indices for ", m, " rows");
  require(static_cast<std::int64_t>(ds_w.size()) == d, "maddog_critic_loss: ", ds_w.size(),
          " weights for ", d, " critic outputs");
  Tensor flip({m, d});
  std::fill(flip.values().begin(), flip.values().end(), 1.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const int own = ds[static_cast<std::size_t>(i)];
    require(own >= 0 && own < d, "maddog_critic_loss: dataset index ", own, " out of range [0, ",
            d, ")");
    flip.values()[static_cast<std::size_t>(i * d + own)] = -ds_w[static_cast<std::size_t>(own)];
  }
  return scale(sum(mul(scores, flip)), 1.0 / static_cast<double>(m * d));
}

// Each utterance contributes only its own dataset's critic output; the two
// sets are meaned separately and summed.
inline Tensor maddog_encoder_critic_loss(const Tensor& src_scores, const std::vector<int>& src_ds,
                                         const Tensor& tar_scores,
                                         const std::vector<int>& tar_ds) {
  auto onehot = [](const Tensor& scores, const std::vector<int>& ds) {
    require(scores.rank() == 2, "maddog_encoder_critic_loss: scores must be m x D");
    const std::int64_t m = scores.dim(0), d = scores.dim(1);
    require(static_cast<std::int64_t>(ds.size()) == m, "maddog_encoder_critic_loss: ", ds.size(),
            " dataset indices for ", m, " rows");
    Tensor pick({m, d});
    for (std::int64_t i = 0; i < m; ++i) {
      const int own = ds[static_cast<std::size_t>(i)];
      require(own >= 0 && own < d, "maddog_encoder_critic_loss: dataset index ", own,
              " out of range [0, ", d, ")");
      pick.values()[static_cast<std::size_t>(i * d + own)] = 1.0;
    }
    return pick;
  };
  Tensor tar_term = scale(sum(mul(tar_scores, onehot(tar_scores, tar_ds))),
                          1.0 / static_cast<double>(tar_scores.dim(0)));
  Tensor src_term = scale(sum(mul(src_scores, onehot(src_scores, src_ds))),
                          1.0 / static_cast<double>(src_scores.dim(0)));
  return add(tar_term, src_term);
}

// Unweighted average recall: the mean of per-class recalls. Every class
// must appear among the truths, otherwise its recall is undefined.
inline double uar(const std::vector<int>& predictions, const std::vector<int>& truths,
                  int n_classes = kNumClasses) {
  require(!truths.empty(), "uar: no utterances");
  require(predictions.size() == truths.size(), "uar: ", predictions.size(), " predictions vs ",
          truths.size(), " truths");
  std::vector<std::int64_t> hit(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> count(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    require(t >= 0 && t < n_classes, "uar: truth class ", t, " out of range [0, ", n_classes, ")");
    ++count[static_cast<std::size_t>(t)];
    if (predictions[i] == t) ++hit[static_cast<std::size_t>(t)];
  }
  double total = 0.0;
  for (int k = 0; k < n_classes; ++k) {
    require(count[static_cast<std::size_t>(k)] > 0, "uar: class ", k,
            " absent from the truths; recall undefined");
    total += static_cast<double>(hit[static_cast<std::size_t>(k)]) /
             static_cast<double>(count[static_cast<std::size_t>(k)]);
  }
  return total / static_cast<double>(n_classes);
}

// ---------------------------------------------------------------------------
// Trainer

struct EpochLosses {
  double loss_e = 0.0;
  double loss_c = 0.0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss_e = 0.0;
  double loss_c = 0.0;
  double val_uar = 0.0;
  std::vector<int> test_predictions;
};

struct FitResult {
  std::vector<EpochRecord> records;
  int selected_epoch = 0;  // 1-based; argmax validation UAR, first on ties
  std::vector<int> test_predictions;
};

// A single deterministic training run. All randomness flows from named
// streams derived from config.seed:
//
//   params                        parameter init
//   train/cnn                     CNN/SP epoch sampler
//   train/critic/{src,tar,all}    critic-phase batch draws
//   train/enc/{src,tar,ltar}      encoder-phase batch draws
//   train/dropout                 dropout masks (encoder phases only)
//
// Per ADDoG/MADDoG iteration the event order is fixed: n_critic critic
// cycles (batches encoded in inference mode, no dropout draws), then one
// encoder/classifier cycle that samples SRC, TAR, and labeled-TAR batches
// and encodes them in that order with dropout active. Critic weights are
// clipped after every critic Adam step.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const TrainData& data)
      : config_(config),
        src_(data.train_src),
        ltar_(data.train_tar_labeled),
        utar_(data.unlabeled_tar),
        val_(data.val),
        test_(data.test),
        dropout_rng_(derive_seed(config.seed, "train/dropout")) {
    config_.validate();
    for (Utterance& u : test_) {
      u.labeled = false;
      u.label = SoftLabel{};
    }
    for (const Utterance& u : src_)
      require(u.labeled, "Trainer: SRC utterance ", u.id, " has no label");
    for (const Utterance& u : ltar_)
      require(u.labeled, "Trainer: labeled-TAR utterance ", u.id, " has no label");

    int critic_outputs = 1;
    switch (config_.method) {
      case Method::kCnn: {
        cnn_pool_ = src_;
        cnn_pool_.insert(cnn_pool_.end(), ltar_.begin(), ltar_.end());
        require(!cnn_pool_.empty(), "Trainer: CNN has no labeled data");
        break;
      }
      case Method::kSp: {
        require(!ltar_.empty(), "Trainer: SP cannot train with zero labeled TAR utterances");
        cnn_pool_ = ltar_;
        break;
      }
      case Method::kAddog: {
        require(!src_.empty(), "Trainer: ADDoG needs a labeled SRC pool");
        require(!utar_.empty(), "Trainer: ADDoG needs a TAR pool");
        break;
      }
      case Method::kMaddog: {
        require(!src_.empty(), "Trainer: MADDoG needs a labeled SRC pool");
        require(!utar_.empty(), "Trainer: MADDoG needs a TAR pool");
        all_pool_ = src_;
        all_pool_.insert(all_pool_.end(), utar_.begin(), utar_.end());
        int max_ds = 0;
        for (const Utterance& u : all_pool_) {
          require(u.dataset >= 0, "Trainer: negative dataset index on ", u.id);
          max_ds = std::max(max_ds, u.dataset);
        }
        n_datasets_ = max_ds + 1;
        require(n_datasets_ >= 2, "Trainer: MADDoG needs at least 2 datasets, found ",
                n_datasets_);
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_datasets_), 0);
        for (const Utterance& u : all_pool_) ++counts[static_cast<std::size_t>(u.dataset)];
        ds_w_ = dsw_weights(counts);
        critic_outputs = n_datasets_;
        break;
      }
    }

    if (!cnn_pool_.empty()) {
      std::vector<SoftLabel> labels;
      for (const Utterance& u : cnn_pool_) labels.push_back(u.label);
      cnn_w_ = class_weights(labels);
      cnn_sampler_.emplace(cnn_pool_.size(), derive_seed(config_.seed, "train/cnn"));
    }
    if (config_.method == Method::kAddog || config_.method == Method::kMaddog) {
      std::vector<SoftLabel> labels;
      for (const Utterance& u : src_) labels.push_back(u.label);
      src_w_ = class_weights(labels);
      if (!ltar_.empty()) {
        labels.clear();
        for (const Utterance& u : ltar_) labels.push_back(u.label);
        ltar_w_ = class_weights(labels);
        enc_ltar_.emplace(ltar_.size(), derive_seed(config_.seed, "train/enc/ltar"));
      }
      enc_src_.emplace(src_.size(), derive_seed(config_.seed, "train/enc/src"));
      enc_tar_.emplace(utar_.size(), derive_seed(config_.seed, "train/enc/tar"));
      if (config_.method == Method::kAddog) {
        critic_src_.emplace(src_.size(), derive_seed(config_.seed, "train/critic/src"));
        critic_tar_.emplace(utar_.size(), derive_seed(config_.seed, "train/critic/tar"));
      } else {
        critic_all_.emplace(all_pool_.size(), derive_seed(config_.seed, "train/critic/all"));
      }
    }

    params_ = init_params(derive_seed(config_.seed, "params"), config_.channels, critic_outputs);
    opt_enc_.emplace(params_.enc.tensors(), config_.learning_rate);
    opt_cls_.emplace(params_.cls.tensors(), config_.learning_rate);
    opt_cri_.emplace(params_.cri.tensors(), config_.learning_rate);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  EpochLosses run_epoch() {
    switch (config_.method) {
      case Method::kCnn:
      case Method::kSp: return run_xent_epoch();
      case Method::kAddog: return run_addog_epoch();
      case Method::kMaddog: return run_maddog_epoch();
    }
    throw ValueError("Trainer: unknown method");
  }

  // Inference-mode class predictions (argmax, lowest index on ties),
  // evaluated in fixed-order batches of the configured size.
  std::vector<int> predict(const std::vector<Utterance>& items) {
    std::vector<int> out;
    out.reserve(items.size());
    const std::size_t m = static_cast<std::size_t>(config_.m);
    for (std::size_t start = 0; start < items.size(); start += m) {
      std::vector<const Utterance*> ptrs;
      for (std::size_t i = start; i < std::min(items.size(), start + m); ++i)
        ptrs.push_back(&items[i]);
      Batch batch = make_batch(ptrs, /*with_labels=*/false);
      Tensor probs = classify(params_.cls, encode(params_.enc, batch, false, dropout_rng_));
      for (std::int64_t r = 0; r < probs.dim(0); ++r) {
        int best = 0;
        for (int k = 1; k < kNumClasses; ++k)
          if (probs(r, k) > probs(r, best)) best = k;
        out.push_back(best);
      }
    }
    return out;
  }

  // Selection metric: mean recall over the classes the validation truths
  // actually contain. Unlike `uar` this tolerates absent classes, which
  // small validation folds produce routinely.
  double validation_uar() {
    require(!val_.empty(), "Trainer: validation set is empty");
    const std::vector<int> preds = predict(val_);
    std::array<std::int64_t, 3> hit{0, 0, 0};
    std::array<std::int64_t, 3> count{0, 0, 0};
    for (std::size_t i = 0; i < val_.size(); ++i) {
      const Utterance& u = val_[i];
      require(u.labeled, "Trainer: validation utterance ", u.id, " has no label");
      const auto t = static_cast<std::size_t>(u.label.majority());
      ++count[t];
      hit[t] += preds[i] == u.label.majority() ? 1 : 0;
    }
    double recall_sum = 0.0;
    int present = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (count[k] == 0) continue;
      recall_sum += static_cast<double>(hit[k]) / static_cast<double>(count[k]);
      ++present;
    }
    return recall_sum / present;
  }

  std::vector<int> test_predictions() { return test_.empty() ? std::vector<int>{} : predict(test_); }

  ModelParams& params() { return params_; }
  const TrainConfig& config() const { return config_; }
  int n_datasets() const { return n_datasets_; }

  // Invoked after every critic Adam step + clip.
  std::function<void(const CriticParams&)> critic_step_hook;

 private:
  Batch take(const std::vector<Utterance>& pool, const std::vector<std::size_t>& idx,
             bool with_labels) {
    std::vector<const Utterance*> ptrs;
    ptrs.reserve(idx.size());
    for (std::size_t i : idx) ptrs.push_back(&pool[i]);
    return make_batch(ptrs, with_labels);
  }

  void critic_step(Tape& tape, const Tensor& loss) {
    tape.backward(loss);
    opt_cri_->step();
    clip_weights(params_.cri.tensors(), config_.clip_c);
    if (critic_step_hook) critic_step_hook(params_.cri);
  }

  EpochLosses run_xent_epoch() {
    const std::size_t m = static_cast<std::size_t>(config_.m);
    const std::size_t batches = (cnn_pool_.size() + m - 1) / m;
    double sum_e = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      Batch batch = take(cnn_pool_, cnn_sampler_->next(m), /*with_labels=*/true);
      Tape tape;
      EncoderParams enc = params_.enc.watched(tape);
      ClassifierParams cls = params_.cls.watched(tape);
      Tensor probs = classify(cls, encode(enc, batch, /*training=*/true, dropout_rng_));
      Tensor loss = weighted_xent(probs, batch.labels, cnn_w_);
      tape.backward(loss);
      opt_enc_->step();
      opt_cls_->step();
      sum_e += loss.value();
    }
    return {sum_e / static_cast<double>(batches), 0.0};
  }

  EpochLosses run_addog_epoch() {
    const std::size_t m = static_cast<std::size_t>(config_.m);
    const std::size_t n = std::max<std::size_t>(1, src_.size() / m);
    double sum_e = 0.0, sum_c = 0.0;
    for (std::size_t it = 0; it < n; ++it) {
      for (int t = 0; t < config_.n_critic; ++t) {
        Batch sb = take(src_, critic_src_->next(m), false);
        Batch tb = take(utar_, critic_tar_->next(m), false);
        Tensor sr = encode(params_.enc, sb, false, dropout_rng_);
        Tensor tr = encode(params_.enc, tb, false, dropout_rng_);
        Tape tape;
        CriticParams cri = params_.cri.watched(tape);
        Tensor loss = critic_loss_addog(criticize(cri, sr), criticize(cri, tr),
                                        CriticPhase::kCriticPhase);
        critic_step(tape, loss);
      }

      Batch sb = take(src_, enc_src_->next(m), true);
      Batch tb = take(utar_, enc_tar_->next(m), false);
      Tape tape;
      EncoderParams enc = params_.enc.watched(tape);
      ClassifierParams cls = params_.cls.watched(tape);
      Tensor sr = encode(enc, sb, true, dropout_rng_);
      Tensor tr = encode(enc, tb, true, dropout_rng_);
      Tensor loss_c = critic_loss_addog(criticize(params_.cri, sr), criticize(params_.cri, tr),
                                        CriticPhase::kEncoderPhase);
      Tensor loss_e = weighted_xent(classify(cls, sr), sb.labels, src_w_);
      if (!ltar_.empty()) {
        Batch lb = take(ltar_, enc_ltar_->next(m), true);
        Tensor lr = encode(enc, lb, true, dropout_rng_);
        loss_e = add(loss_e, weighted_xent(classify(cls, lr), lb.labels, ltar_w_));
      }
      tape.backward(add(loss_c, loss_e));
      opt_enc_->step();
      opt_cls_->step();
      sum_c += loss_c.value();
      sum_e += loss_e.value();
    }
    return {sum_e / static_cast<double>(n), sum_c / static_cast<double>(n)};
  }

  EpochLosses run_maddog_epoch() {
    const std::size_t m = static_cast<std::size_t>(config_.m);
    const std::size_t n = std::max<std::size_t>(1, (src_.size() + utar_.size()) / m);
    double sum_e = 0.0, sum_c = 0.0;
    for (std::size_t it = 0; it < n; ++it) {
      for (int t = 0; t < config_.n_critic; ++t) {
        Batch b = take(all_pool_, critic_all_->next(m), false);
        Tensor reps = encode(params_.enc, b, false, dropout_rng_);
        Tape tape;
        CriticParams cri = params_.cri.watched(tape);
        Tensor loss = maddog_critic_loss(criticize(cri, reps), b.dataset_indices, ds_w_);
        critic_step(tape, loss);
      }

      Batch sb = take(src_, enc_src_->next(m), true);
      Batch tb = take(utar_, enc_tar_->next(m), false);
      Tape tape;
      EncoderParams enc = params_.enc.watched(tape);
      ClassifierParams cls = params_.cls.watched(tape);
      Tensor sr = encode(enc, sb, true, dropout_rng_);
      Tensor tr = encode(enc, tb, true, dropout_rng_);
      Tensor loss_c = maddog_encoder_critic_loss(criticize(params_.cri, sr), sb.dataset_indices,
                                                 criticize(params_.cri, tr), tb.dataset_indices);
      Tensor loss_e = weighted_xent(classify(cls, sr), sb.labels, src_w_);
      if (!ltar_.empty()) {
        Batch lb = take(ltar_, enc_ltar_->next(m), true);
        Tensor lr = encode(enc, lb, true, dropout_rng_);
        loss_e = add(loss_e, weighted_xent(classify(cls, lr), lb.labels, ltar_w_));
      }
      tape.backward(add(scale(loss_c, config_.lambda), loss_e));
      opt_enc_->step();
      opt_cls_->step();
      sum_c += loss_c.value();
      sum_e += loss_e.value();
    }
    return {sum_e / static_cast<double>(n), sum_c / static_cast<double>(n)};
  }

  TrainConfig config_;
  std::vector<Utterance> src_, ltar_, utar_, val_, test_;
  std::vector<Utterance> cnn_pool_;  // labeled pool for CNN/SP
  std::vector<Utterance> all_pool_;  // SRC + TAR, for the MADDoG critic
  int n_datasets_ = 1;
  std::vector<double> ds_w_;
  std::array<double, 3> cnn_w_{}, src_w_{}, ltar_w_{};
  ModelParams params_;
  std::optional<Adam> opt_enc_, opt_cls_, opt_cri_;
  Rng dropout_rng_;
  std::optional<EpochSampler> cnn_sampler_;
  std::optional<UniformSampler> critic_src_, critic_tar_, critic_all_;
  std::optional<UniformSampler> enc_src_, enc_tar_, enc_ltar_;
};

// ---------------------------------------------------------------------------
// Epoch loop with validation-based selection

// Runs config.epochs epochs, recording losses, pooled validation UAR, and a
// test prediction snapshot per epoch; returns the snapshot from the best
// validation epoch (first on ties). When epoch_csv is nonempty, appends one
// `epoch,loss_e,loss_c,val_uar` row per epoch (with a header on creation).
// The trainer is left in its final-epoch state.
inline FitResult fit(Trainer& trainer, const std::string& epoch_csv = "") {
  const TrainConfig& config = trainer.config();

  std::ofstream csv;
  if (!epoch_csv.empty()) {
    const bool fresh =
        !std::filesystem::exists(epoch_csv) || std::filesystem::file_size(epoch_csv) == 0;
    csv.open(epoch_csv, std::ios::app);
    if (!csv) throw IoError(detail::str_cat("cannot open ", epoch_csv, " for appending"));
    if (fresh) csv << "epoch,loss_e,loss_c,val_uar\n";
  }

  FitResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochLosses losses = trainer.run_epoch();
    EpochRecord record;
    record.epoch = epoch;
    record.loss_e = losses.loss_e;
    record.loss_c = losses.loss_c;
    record.val_uar = trainer.validation_uar();
    record.test_predictions = trainer.test_predictions();
    if (csv.is_open()) {
      char line[128];
      std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f\n", epoch, record.loss_e,
                    record.loss_c, record.val_uar);
      csv << line;
    }
    result.records.push_back(std::move(record));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.records.size(); ++i)
    if (result.records[i].val_uar > result.records[best].val_uar) best = i;
  result.selected_epoch = result.records[best].epoch;
  result.test_predictions = result.records[best].test_predictions;
  return result;
}

inline FitResult fit(const TrainConfig& config, const TrainData& data,
                     const std::string& epoch_csv = "") {
  require(!data.val.empty(), "fit: validation set is empty");
  Trainer trainer(config, data);
  return fit(trainer, epoch_csv);
}

// ---------------------------------------------------------------------------
// Full-graph gradient self-check

// Finite-difference check of one adversarial training step's loss surface:
// two utterances flow through the encoder (seeded dropout), the classifier,
// and the critic; the loss is the encoder-phase critic term plus weighted
// cross-entropy, so every parameter tensor is exercised in a single
// backward pass. All randomness derives from `seed`.
inline GradCheckReport full_graph_gradcheck(std::uint64_t seed, int channels = 8,
                                            std::int64_t frames = 30, double epsilon = 1e-5) {
  require(frames >= kMinFrames, "full_graph_gradcheck: ", frames,
          " frames is below the encoder's receptive field of ", kMinFrames);

  const auto draw_utterance = [&](const char* stream, int dataset) {
    Rng rng(derive_seed(seed, detail::str_cat("gradcheck/", stream)));
    Utterance u;
    u.id = stream;
    u.dataset = dataset;
    u.subject = stream;
    u.features = Tensor({40, frames});
    for (double& v : u.features.values()) v = rng.gaussian();
    u.labeled = true;
    u.label.p[rng.below(3)] = 1.0;
    return u;
  };
  const std::vector<Utterance> src{draw_utterance("src", 0)};
  const std::vector<Utterance> tar{draw_utterance("tar", 1)};
  const Batch sb = make_batch({&src[0]}, true);
  const Batch tb = make_batch({&tar[0]}, false);
  const std::uint64_t drop_seed = derive_seed(seed, "gradcheck/dropout");
  const std::array<double, 3> w{1.2, 0.9, 1.0};

  ModelParams mp = init_params(derive_seed(seed, "gradcheck/params"), channels);
  const auto loss_fn = [&](const std::vector<Tensor>& p) {
    EncoderParams enc;
    enc.conv1 = p[0];
    enc.conv2 = p[1];
    ClassifierParams cls{p[2], p[3], p[4]};
    CriticParams cri{p[5], p[6], p[7]};
    Rng drop(drop_seed);
    Tensor sr = encode(enc, sb, true, drop);
    Tensor tr = encode(enc, tb, true, drop);
    Tensor loss_c = critic_loss_addog(criticize(cri, sr), criticize(cri, tr),
                                      CriticPhase::kEncoderPhase);
    Tensor loss_e = weighted_xent(classify(cls, sr), sb.labels, w);
    return add(loss_c, loss_e);
  };
  std::vector<Tensor*> params{&mp.enc.conv1, &mp.enc.conv2, &mp.cls.fc1, &mp.cls.fc2,
                              &mp.cls.fc3,   &mp.cri.fc1,   &mp.cri.fc2, &mp.cri.fc3};
  // Entries where both gradients sit below 2e-6 are skipped: there the
  // difference quotient measures rounding noise of the loss, not the
  // derivative, and a genuinely wrong gradient still shows on one side.
  return check_gradients(params, loss_fn, epsilon, 2e-6);
}

}  // namespace domgen
