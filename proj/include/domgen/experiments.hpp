// domgen/experiments.hpp
//
// Synthetic domain-shift corpus generation, subject-level UAR reports, and
// the cross-corpus experiment driver (repeated splits, method grid, CSV
// output).

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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "domgen/audio.hpp"
#include "domgen/common.hpp"
#include "domgen/data.hpp"
#include "domgen/features.hpp"
#include "domgen/models.hpp"
#include "domgen/train.hpp"

namespace domgen {

// ---------------------------------------------------------------------------
// Synthetic corpus
//
// Each utterance carries one of three classes, rendered as a Gaussian bump
// over the mel axis. On top of that sit three controlled effects:
//
//   * a per-dataset additive offset vector (spectral tilt), so datasets live
//     in shifted feature spaces;
//   * a nuisance comb whose level tracks the class inside source datasets
//     (strength rho) but is drawn independently of the class in targets, so
//     a model leaning on it transfers badly;
//   * i.i.d. Gaussian cell noise of strength sigma.
//
// Labels come from three simulated annotators rating around a class-specific
// mean on a 1-5 scale; triples without a unique majority bin are redrawn.
// Every utterance is generated from its own seed stream, so corpora are
// reproducible utterance by utterance and insensitive to generation order.

struct SynthDataset {
  std::string name;
  int n_utterances = 0;
  int n_subjects = 0;
  std::vector<double> domain_offset;  // per-mel-bin shift; empty means none
  double rho = 0.0;    // class-nuisance coupling in [0, 1]
  double sigma = 0.0;  // cell noise stddev
  bool target = false; // targets draw the nuisance level independently
};

struct SynthSpec {
  std::vector<SynthDataset> datasets;
  double template_gain = 2.0;
  double nuisance_gain = 2.0;
  double rating_noise = 0.4;
  int min_frames = 30;
  int max_frames = 60;
  std::uint64_t seed = 0;

  void validate() const {
    require(!datasets.empty(), "SynthSpec: no datasets");
    require(template_gain > 0.0, "SynthSpec: template_gain must be positive, got ",
            template_gain);
    require(nuisance_gain >= 0.0, "SynthSpec: nuisance_gain must be non-negative, got ",
            nuisance_gain);
    require(rating_noise >= 0.0, "SynthSpec: rating_noise must be non-negative, got ",
            rating_noise);
    require(min_frames >= kMinFrames, "SynthSpec: min_frames ", min_frames,
            " is below the encoder's receptive field of ", kMinFrames);
    require(max_frames >= min_frames, "SynthSpec: max_frames ", max_frames,
            " is below min_frames ", min_frames);

    std::set<std::string> names;
    for (const SynthDataset& ds : datasets) {
      require(!ds.name.empty(), "SynthSpec: dataset with empty name");
      require(names.insert(ds.name).second, "SynthSpec: duplicate dataset name ", ds.name);
      require(ds.n_utterances > 0, "SynthSpec: dataset ", ds.name, " has no utterances");
      require(ds.n_subjects > 0, "SynthSpec: dataset ", ds.name, " has no subjects");
      require(ds.rho >= 0.0 && ds.rho <= 1.0, "SynthSpec: dataset ", ds.name,
              " has rho ", ds.rho, " outside [0, 1]");
      require(ds.sigma >= 0.0, "SynthSpec: dataset ", ds.name, " has negative sigma");
      require(ds.domain_offset.empty() ||
                  ds.domain_offset.size() == static_cast<std::size_t>(kNumMelBins),
              "SynthSpec: dataset ", ds.name, " offset has ", ds.domain_offset.size(),
              " bins, want ", kNumMelBins);

      // Classes and subjects are assigned round-robin, so the per-subject
      // per-class count follows directly from the utterance count. Subject
      // UARs need every class at least twice per subject to be meaningful.
      std::vector<int> cell(static_cast<std::size_t>(ds.n_subjects) * 3, 0);
      for (int i = 0; i < ds.n_utterances; ++i)
        ++cell[static_cast<std::size_t>(((i / 3) % ds.n_subjects) * 3 + i % 3)];
      const int quota = *std::min_element(cell.begin(), cell.end());
      require(quota >= 2, "SynthSpec: dataset ", ds.name, " gives some subject only ",
              quota, " utterances of a class; need at least 2 (raise n_utterances or ",
              "lower n_subjects)");
    }
  }
};

inline constexpr std::array<double, 3> kSynthClassCenters{8.0, 20.0, 32.0};
inline constexpr std::array<double, 3> kSynthRatingMeans{1.7, 3.0, 4.3};
inline constexpr double kSynthPatternWidth = 3.0;
inline constexpr double kSynthNuisanceCenter = 26.0;
inline constexpr double kSynthSourceJitter = 0.15;

// Smooth spectral tilt usable as a domain offset: scale * cos over the mel
// axis, with `waves` full periods across the 40 bins.
inline std::vector<double> cosine_tilt(int waves, double scale) {
  require(waves > 0, "cosine_tilt: waves must be positive, got ", waves);
  std::vector<double> offset(static_cast<std::size_t>(kNumMelBins));
  for (int f = 0; f < kNumMelBins; ++f)
    offset[static_cast<std::size_t>(f)] =
        scale * std::cos(2.0 * detail::kPi * waves * (f + 0.5) / kNumMelBins);
  return offset;
}

namespace detail {

inline double synth_bump(double f, double center) {
  const double d = f - center;
  return std::exp(-d * d / (2.0 * kSynthPatternWidth * kSynthPatternWidth));
}

// Alternating-sign comb: large overlap with nothing smooth, so it neither
// mimics a class template nor disappears under the class bumps.
inline double synth_nuisance(int f) {
  const double sign = (f % 2 == 0) ? 1.0 : -1.0;
  return sign * synth_bump(static_cast<double>(f), kSynthNuisanceCenter);
}

struct SynthDraw {
  int klass = 0;
  int subject = 0;
  std::int64_t frames = 0;
  double level = 0.0;               // nuisance level
  std::array<double, 40> base{};    // noiseless mel profile
};

// Consumes, in order: frame count, nuisance level. The caller continues on
// the same stream (cell noise in feature mode, tone phases in audio mode).
inline SynthDraw synth_draw(const SynthSpec& spec, const SynthDataset& ds, int index,
                            Rng& rng) {
  SynthDraw d;
  d.klass = index % 3;
  d.subject = (index / 3) % ds.n_subjects;
  d.frames = static_cast<std::int64_t>(spec.min_frames) +
             static_cast<std::int64_t>(
                 rng.below(static_cast<std::uint64_t>(spec.max_frames - spec.min_frames + 1)));
  d.level = ds.target ? static_cast<double>(static_cast<std::int64_t>(rng.below(3)) - 1)
                      : (d.klass - 1) + kSynthSourceJitter * rng.gaussian();
  for (int f = 0; f < kNumMelBins; ++f) {
    double v = spec.template_gain *
               synth_bump(static_cast<double>(f),
                          kSynthClassCenters[static_cast<std::size_t>(d.klass)]);
    if (!ds.domain_offset.empty()) v += ds.domain_offset[static_cast<std::size_t>(f)];
    v += ds.rho * d.level * spec.nuisance_gain * synth_nuisance(f);
    d.base[static_cast<std::size_t>(f)] = v;
  }
  return d;
}

inline std::string synth_id(const std::string& name, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-%05d", index);
  return str_cat(name, buf);
}

inline std::string synth_subject(const std::string& name, int subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-s%03d", subject);
  return str_cat(name, buf);
}

}  // namespace detail

// Three annotator ratings around the class mean, redrawn until the majority
// bin is unique. Drawn from a stream separate from the signal so feature-mode
// and audio-mode corpora carry identical labels.
inline std::vector<double> synth_ratings(const SynthSpec& spec, std::size_t dataset,
                                         int index) {
  const SynthDataset& ds = spec.datasets.at(dataset);
  Rng rng(derive_seed(spec.seed, detail::str_cat("synth-ratings/", ds.name),
                      static_cast<std::uint64_t>(index)));
  const double mean = kSynthRatingMeans[static_cast<std::size_t>(index % 3)];
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<double> ratings(3);
    for (double& r : ratings)
      r = std::clamp(static_cast<double>(std::llround(mean + spec.rating_noise * rng.gaussian())),
                     1.0, 5.0);
    if (bin_ratings(ratings, 3.0)) return ratings;
  }
  throw ValueError(detail::str_cat("synth_ratings: no unique majority after 64 draws for ",
                                   ds.name, " index ", index, "; rating_noise ",
                                   spec.rating_noise, " is too large"));
}

// Feature-mode generation: base profile plus cell noise, stored as float32
// (the same precision the feature cache holds) in frame-major order.
inline FeatureMatrix synth_features(const SynthSpec& spec, std::size_t dataset, int index) {
  const SynthDataset& ds = spec.datasets.at(dataset);
  Rng rng(derive_seed(spec.seed, detail::str_cat("synth/", ds.name),
                      static_cast<std::uint64_t>(index)));
  const detail::SynthDraw d = detail::synth_draw(spec, ds, index, rng);

  FeatureMatrix m;
  m.rows = d.frames;
  m.cols = kNumMelBins;
  m.sample_rate = 16000;
  m.values.resize(static_cast<std::size_t>(m.rows * m.cols));
  for (std::int64_t t = 0; t < m.rows; ++t)
    for (int f = 0; f < kNumMelBins; ++f)
      m.values[static_cast<std::size_t>(t * m.cols + f)] = static_cast<float>(
          d.base[static_cast<std::size_t>(f)] + ds.sigma * rng.gaussian());
  return m;
}

// Audio-mode generation: one tone per mel bin at the bin's filter center,
// amplitude exp(base/2) so the extracted log mel energy tracks the base
// profile. Cell noise is a feature-space construct and is not rendered.
// Consumes the same leading draws as feature mode (frame count, nuisance
// level), then one phase per bin.
inline AudioClip synth_clip(const SynthSpec& spec, std::size_t dataset, int index) {
  const SynthDataset& ds = spec.datasets.at(dataset);
  Rng rng(derive_seed(spec.seed, detail::str_cat("synth/", ds.name),
                      static_cast<std::uint64_t>(index)));
  const detail::SynthDraw d = detail::synth_draw(spec, ds, index, rng);

  const int rate = 16000;
  const std::int64_t win = static_cast<std::int64_t>(rate) * kFrameLengthMs / 1000;
  const std::int64_t shift = static_cast<std::int64_t>(rate) * kFrameShiftMs / 1000;
  const std::int64_t n = win + (d.frames - 1) * shift;

  const double mel_low = hz_to_mel(kMelLowHz);
  const double mel_delta = (hz_to_mel(rate / 2.0) - mel_low) / (kNumMelBins + 1);

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(static_cast<std::size_t>(n), 0.0);
  for (int f = 0; f < kNumMelBins; ++f) {
    const double hz = mel_to_hz(mel_low + (f + 1) * mel_delta);
    const double amp = std::exp(d.base[static_cast<std::size_t>(f)] / 2.0);
    const double phase = rng.uniform(0.0, 2.0 * detail::kPi);
    const double step = 2.0 * detail::kPi * hz / rate;
    for (std::int64_t t = 0; t < n; ++t)
      clip.samples[static_cast<std::size_t>(t)] += amp * std::sin(step * t + phase);
  }
  clip = peak_normalize(clip);
  for (double& s : clip.samples) s *= 0.5;
  return clip;
}

// Feature cache (frames x bins, float32) to model input (bins x frames).
inline Tensor features_to_tensor(const FeatureMatrix& m) {
  require(m.cols == kNumMelBins, "features_to_tensor: ", m.cols, " bins, want ",
          kNumMelBins);
  Tensor x({static_cast<std::int64_t>(kNumMelBins), m.rows});
  std::vector<double>& v = x.values();
  for (std::int64_t t = 0; t < m.rows; ++t)
    for (std::int64_t f = 0; f < kNumMelBins; ++f)
      v[static_cast<std::size_t>(f * m.rows + t)] = static_cast<double>(m.at(t, f));
  return x;
}

inline Utterance synth_utterance(const SynthSpec& spec, std::size_t dataset, int index) {
  const SynthDataset& ds = spec.datasets.at(dataset);
  require(index >= 0 && index < ds.n_utterances, "synth_utterance: index ", index,
          " out of range for ", ds.name, " with ", ds.n_utterances, " utterances");
  Utterance u;
  u.id = detail::synth_id(ds.name, index);
  u.dataset = static_cast<int>(dataset);
  u.subject = detail::synth_subject(ds.name, (index / 3) % ds.n_subjects);
  u.features = features_to_tensor(synth_features(spec, dataset, index));
  const std::optional<SoftLabel> label = bin_ratings(synth_ratings(spec, dataset, index), 3.0);
  require(label.has_value(), "synth_utterance: rating triple lost its majority");
  u.labeled = true;
  u.label = *label;
  return u;
}

inline std::vector<Utterance> synth_dataset(const SynthSpec& spec, std::size_t dataset) {
  const SynthDataset& ds = spec.datasets.at(dataset);
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(ds.n_utterances));
  for (int i = 0; i < ds.n_utterances; ++i) out.push_back(synth_utterance(spec, dataset, i));
  return out;
}

// In-memory corpus, index-aligned with spec.datasets.
inline std::vector<std::vector<Utterance>> synth_corpus(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::vector<Utterance>> out;
  out.reserve(spec.datasets.size());
  for (std::size_t d = 0; d < spec.datasets.size(); ++d) out.push_back(synth_dataset(spec, d));
  return out;
}

// Materializes the corpus under out_dir: manifest.jsonl plus one feature
// cache (or WAV, in audio mode) per utterance. Paths inside the manifest are
// relative to the manifest's directory.
inline void synth_write(const SynthSpec& spec, const std::string& out_dir, bool wav_mode) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<UtteranceRecord> records;
  for (std::size_t d = 0; d < spec.datasets.size(); ++d) {
    const SynthDataset& ds = spec.datasets[d];
    fs::create_directories(fs::path(out_dir) / ds.name);
    for (int i = 0; i < ds.n_utterances; ++i) {
      UtteranceRecord rec;
      rec.id = detail::synth_id(ds.name, i);
      rec.dataset = ds.name;
      rec.subject = detail::synth_subject(ds.name, (i / 3) % ds.n_subjects);
      rec.ratings = synth_ratings(spec, d, i);
      rec.scale_midpoint = 3.0;
      const std::string stem = detail::str_cat(ds.name, "/", rec.id);
      if (wav_mode) {
        rec.audio_path = stem + ".wav";
        write_wav(synth_clip(spec, d, i), (fs::path(out_dir) / rec.audio_path).string());
      } else {
        rec.feature_path = stem + ".mfb";
        cache_write(synth_features(spec, d, i), (fs::path(out_dir) / rec.feature_path).string());
      }
      records.push_back(std::move(rec));
    }
  }
  write_manifest(records, (fs::path(out_dir) / "manifest.jsonl").string());
}

// ---------------------------------------------------------------------------
// Manifest loading

struct LoadedCorpus {
  std::vector<std::string> names;               // datasets, in first-appearance order
  std::vector<std::vector<Utterance>> sets;     // aligned with names
  std::int64_t rejected = 0;                    // labeled records without a majority
};

// Reads a manifest and the feature caches it points at. Records whose rating
// triple has no majority bin are dropped (counted in `rejected`); records
// without ratings load as unlabeled. Audio-only records are refused here;
// extract features first.
inline LoadedCorpus load_corpus(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  LoadedCorpus out;
  std::map<std::string, std::size_t> index;
  for (const UtteranceRecord& rec : read_manifest(manifest_path)) {
    require(!rec.feature_path.empty(), "load_corpus: record ", rec.id,
            " has no feature cache; run feature extraction first");
    std::optional<SoftLabel> label;
    if (rec.labeled()) {
      label = bin_ratings(rec.ratings, rec.scale_midpoint);
      if (!label) {
        ++out.rejected;
        continue;
      }
    }
    auto [it, fresh] = index.try_emplace(rec.dataset, out.names.size());
    if (fresh) {
      out.names.push_back(rec.dataset);
      out.sets.emplace_back();
    }
    const fs::path cache = fs::path(rec.feature_path).is_absolute()
                               ? fs::path(rec.feature_path)
                               : base / rec.feature_path;
    Utterance u;
    u.id = rec.id;
    u.dataset = static_cast<int>(it->second);
    u.subject = rec.subject;
    u.features = features_to_tensor(cache_read(cache.string()));
    u.labeled = label.has_value();
    if (label) u.label = *label;
    out.sets[it->second].push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subject-level reports

// Pooled test predictions of one repeat (both halves, under half-swapping).
struct RepeatOutcome {
  std::vector<int> predictions;
  std::vector<int> truths;
  std::vector<std::string> subjects;
};

// Per-subject UARs for one (method, budget) cell: rows are repeats, columns
// are subjects. The headline numbers follow the repeat axis: `mean` averages
// the per-repeat subject means, `stddev` is the sample deviation of those
// repeat means (0 with fewer than two repeats).
struct SubjectUarMatrix {
  std::string method;
  int budget = 0;
  std::vector<std::string> subjects;        // sorted
  std::vector<std::vector<double>> values;  // [repeat][subject]

  std::vector<double> repeat_means() const {
    std::vector<double> means;
    means.reserve(values.size());
    for (const std::vector<double>& row : values) {
      require(row.size() == subjects.size(), "SubjectUarMatrix: ragged row");
      require(!row.empty(), "SubjectUarMatrix: no subjects");
      double s = 0.0;
      for (double v : row) s += v;
      means.push_back(s / static_cast<double>(row.size()));
    }
    return means;
  }

  double mean() const {
    const std::vector<double> means = repeat_means();
    require(!means.empty(), "SubjectUarMatrix: no repeats");
    double s = 0.0;
    for (double m : means) s += m;
    return s / static_cast<double>(means.size());
  }

  double stddev() const {
    const std::vector<double> means = repeat_means();
    if (means.size() < 2) return 0.0;
    const double mu = mean();
    double ss = 0.0;
    for (double m : means) ss += (m - mu) * (m - mu);
    return std::sqrt(ss / static_cast<double>(means.size() - 1));
  }
};

// Groups each repeat's predictions by subject and scores them with UAR.
// Every repeat must cover exactly the same subjects, and every subject's
// truth must contain all three classes.
inline SubjectUarMatrix subject_report(const std::vector<RepeatOutcome>& outcomes,
                                       const std::string& method, int budget) {
  require(!outcomes.empty(), "subject_report: no repeats");

  SubjectUarMatrix out;
  out.method = method;
  out.budget = budget;
  {
    std::set<std::string> names(outcomes.front().subjects.begin(),
                                outcomes.front().subjects.end());
    out.subjects.assign(names.begin(), names.end());
  }
  require(!out.subjects.empty(), "subject_report: first repeat has no subjects");

  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const RepeatOutcome& o = outcomes[r];
    require(o.predictions.size() == o.truths.size() &&
                o.predictions.size() == o.subjects.size(),
            "subject_report: repeat ", r, " has mismatched prediction/truth/subject sizes");
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < o.subjects.size(); ++i) groups[o.subjects[i]].push_back(i);
    require(groups.size() == out.subjects.size(), "subject_report: repeat ", r, " covers ",
            groups.size(), " subjects, want ", out.subjects.size());

    std::vector<double> row;
    row.reserve(out.subjects.size());
    for (const std::string& subject : out.subjects) {
      const auto it = groups.find(subject);
      require(it != groups.end(), "subject_report: repeat ", r, " is missing subject ",
              subject);
      std::vector<int> preds, truths;
      preds.reserve(it->second.size());
      truths.reserve(it->second.size());
      for (std::size_t i : it->second) {
        preds.push_back(o.predictions[i]);
        truths.push_back(o.truths[i]);
      }
      row.push_back(uar(preds, truths));
    }
    out.values.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment driver

// A full experiment: a method grid evaluated over repeated splits of the
// given corpora, reported per subject.
//
// Protocols:
//   exp1          train on SRC (80:20 train/val), evaluate on all of TAR;
//                 budgets are ignored (no TAR labels exist).
//   exp2..exp4    half-swapped TAR: per repeat each TAR half takes a turn as
//                 the test set while the other donates `budget` labeled
//                 utterances; the two halves' predictions pool into one
//                 full-coverage outcome. The protocols differ only in which
//                 corpora they are pointed at.
//
// Within one repeat every method and budget sees the same split stream, so
// methods are compared on identical folds and smaller budgets are nested in
// larger ones.
struct ExperimentPlan {
  std::string protocol = "exp1";
  std::vector<std::vector<Utterance>> sources;
  std::vector<Utterance> target;
  std::vector<Method> methods;
  std::vector<int> budgets{0};
  int repeats = 0;  // 0 picks the protocol default: 50 for exp1, 10 otherwise
  TrainConfig base; // method and seed are overwritten per fit
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ExperimentReport {
  std::vector<SubjectUarMatrix> cells;  // method-major, then budget, plan order
};

inline std::uint64_t fit_seed(std::uint64_t experiment_seed, Method method, int budget,
                              int repeat, int half) {
  return derive_seed(experiment_seed,
                     detail::str_cat("fit/", method_name(method), "/b", budget, "/r", repeat,
                                     "/h", half));
}

// The experiment's corpora with dataset indices remapped (sources 0..S-1,
// target S) and folds materialized on demand. Every utterance must be
// labeled: sources train on labels, and target labels provide the truths
// (the trainer strips them from its test copy).
class ExperimentCorpus {
 public:
  ExperimentCorpus(const std::vector<std::vector<Utterance>>& sources,
                   std::vector<Utterance> target) {
    require(!sources.empty(), "ExperimentCorpus: no source datasets");
    for (std::size_t s = 0; s < sources.size(); ++s) {
      require(!sources[s].empty(), "ExperimentCorpus: source dataset ", s, " is empty");
      for (Utterance u : sources[s]) {
        u.dataset = static_cast<int>(s);
        src_pool_.push_back(std::move(u));
      }
    }
    require(!target.empty(), "ExperimentCorpus: empty target dataset");
    for (Utterance& u : target) {
      u.dataset = static_cast<int>(sources.size());
      tar_pool_.push_back(std::move(u));
    }
    n_sources_ = sources.size();

    for (const Utterance& u : src_pool_)
      require(u.labeled, "ExperimentCorpus: source utterance ", u.id, " has no label");
    for (const Utterance& u : tar_pool_)
      require(u.labeled, "ExperimentCorpus: target utterance ", u.id,
              " has no label; it cannot be scored");

    const auto build = [](const std::vector<Utterance>& pool,
                          std::map<std::string, const Utterance*>& m) {
      for (const Utterance& u : pool)
        require(m.emplace(u.id, &u).second, "ExperimentCorpus: duplicate utterance id ",
                u.id);
    };
    build(src_pool_, src_by_id_);
    build(tar_pool_, tar_by_id_);
    for (const auto& [id, u] : tar_by_id_)
      require(src_by_id_.find(id) == src_by_id_.end(), "ExperimentCorpus: utterance id ", id,
              " appears in both SRC and TAR");
    for (const Utterance& u : src_pool_) src_ids_.push_back(u.id);
    for (const Utterance& u : tar_pool_) tar_ids_.push_back(u.id);
  }

  ExperimentCorpus(const ExperimentCorpus&) = delete;
  ExperimentCorpus& operator=(const ExperimentCorpus&) = delete;

  std::size_t n_sources() const { return n_sources_; }
  std::size_t n_target_utterances() const { return tar_pool_.size(); }

  // Splits and materializes one fold. Repeats index the split stream, so
  // every method and budget sees the same folds at the same repeat.
  TrainData fold(const std::string& protocol, int budget, int repeat, int half,
                 std::uint64_t experiment_seed) const {
    const std::uint64_t split_seed =
        derive_seed(experiment_seed, "split", static_cast<std::uint64_t>(repeat));
    FoldPlan plan;
    if (protocol == "exp1") {
      require(half == 1, "ExperimentCorpus: ", protocol, " has no half ", half);
      plan = split_exp1(src_ids_, tar_ids_, split_seed);
    } else {
      require(protocol == "exp2" || protocol == "exp3" || protocol == "exp4",
              "ExperimentCorpus: unknown protocol ", protocol);
      plan = split_fig4(src_ids_, tar_ids_, budget, half, split_seed);
    }
    TrainData data;
    data.train_src = pick(plan.train_src, src_by_id_);
    data.train_tar_labeled = pick(plan.train_tar_labeled, tar_by_id_);
    data.unlabeled_tar = pick(plan.unlabeled_tar_pool, tar_by_id_);
    data.val = pick(plan.val, plan.val_from_src ? src_by_id_ : tar_by_id_);
    data.test = pick(plan.test, tar_by_id_);
    return data;
  }

 private:
  static std::vector<Utterance> pick(const std::vector<std::string>& ids,
                                     const std::map<std::string, const Utterance*>& m) {
    std::vector<Utterance> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
      const auto it = m.find(id);
      require(it != m.end(), "ExperimentCorpus: split references unknown utterance ", id);
      out.push_back(*it->second);
    }
    return out;
  }

  std::vector<Utterance> src_pool_, tar_pool_;
  std::map<std::string, const Utterance*> src_by_id_, tar_by_id_;
  std::vector<std::string> src_ids_, tar_ids_;
  std::size_t n_sources_ = 0;
};

// One CSV row per (method, budget, repeat, subject).
inline void write_report_csv(const ExperimentReport& report, const std::string& path) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError(detail::str_cat("cannot open ", tmp, " for writing"));
    out << "method,budget,repeat,subject,uar\n";
    for (const SubjectUarMatrix& cell : report.cells)
      for (std::size_t r = 0; r < cell.values.size(); ++r)
        for (std::size_t s = 0; s < cell.subjects.size(); ++s) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6f", cell.values[r][s]);
          out << cell.method << ',' << cell.budget << ',' << r << ',' << cell.subjects[s]
              << ',' << buf << '\n';
        }
    if (!out) throw IoError(detail::str_cat("short write to ", tmp));
  }
  fs::rename(tmp, path);
}

namespace detail {

struct FitJob {
  std::size_t cell = 0;
  int repeat = 0;
  int half = 1;
  TrainConfig config;
  TrainData data;
  std::vector<int> predictions;
};

inline void run_fit_job(FitJob& job) {
  job.predictions = fit(job.config, job.data).test_predictions;
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentPlan& plan,
                                       const std::string& csv_path = "") {
  const bool single_split = plan.protocol == "exp1";
  require(single_split || plan.protocol == "exp2" || plan.protocol == "exp3" ||
              plan.protocol == "exp4",
          "run_experiment: unknown protocol ", plan.protocol);
  require(!plan.methods.empty(), "run_experiment: no methods");
  for (std::size_t i = 0; i < plan.methods.size(); ++i)
    for (std::size_t j = i + 1; j < plan.methods.size(); ++j)
      require(plan.methods[i] != plan.methods[j], "run_experiment: duplicate method ",
              method_name(plan.methods[i]));
  require(!plan.sources.empty(), "run_experiment: no source datasets");
  for (std::size_t s = 0; s < plan.sources.size(); ++s)
    require(!plan.sources[s].empty(), "run_experiment: source dataset ", s, " is empty");
  require(!plan.target.empty(), "run_experiment: empty target dataset");
  require(plan.repeats >= 0, "run_experiment: negative repeats");
  require(plan.threads >= 1, "run_experiment: threads must be at least 1, got ",
          plan.threads);

  const int repeats = plan.repeats > 0 ? plan.repeats : (single_split ? 50 : 10);
  std::vector<int> budgets = single_split ? std::vector<int>{0} : plan.budgets;
  require(!budgets.empty(), "run_experiment: no budgets");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    require(budgets[i] >= 0, "run_experiment: negative budget ", budgets[i]);
    for (std::size_t j = i + 1; j < budgets.size(); ++j)
      require(budgets[i] != budgets[j], "run_experiment: duplicate budget ", budgets[i]);
  }

  const bool has_maddog =
      std::find(plan.methods.begin(), plan.methods.end(), Method::kMaddog) !=
      plan.methods.end();
  require(!has_maddog || plan.sources.size() >= 2,
          "run_experiment: maddog needs at least two source datasets, got ",
          plan.sources.size());
  const bool has_sp = std::find(plan.methods.begin(), plan.methods.end(), Method::kSp) !=
                      plan.methods.end();
  if (has_sp) {
    require(!single_split, "run_experiment: sp needs labeled target utterances, which ",
            plan.protocol, " never provides");
    for (int b : budgets)
      require(b > 0, "run_experiment: sp cannot run at budget 0; drop the budget or the method");
  }

  const ExperimentCorpus corpus(plan.sources, plan.target);

  // Lay out one job per fit, in deterministic report order.
  std::vector<detail::FitJob> jobs;
  const std::size_t n_cells = plan.methods.size() * budgets.size();
  for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
    const Method method = plan.methods[mi];
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
      const int budget = budgets[bi];
      const std::size_t cell = mi * budgets.size() + bi;
      for (int r = 0; r < repeats; ++r)
        for (int half = 1; half <= (single_split ? 1 : 2); ++half) {
          detail::FitJob job;
          job.cell = cell;
          job.repeat = r;
          job.half = half;
          job.config = plan.base;
          job.config.method = method;
          job.config.seed = fit_seed(plan.seed, method, budget, r, half);
          job.data = corpus.fold(plan.protocol, budget, r, half, plan.seed);
          jobs.push_back(std::move(job));
        }
    }
  }

  if (plan.threads <= 1) {
    for (detail::FitJob& job : jobs) detail::run_fit_job(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(plan.threads), jobs.size());
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        while (!failed.load()) {
          const std::size_t i = next.fetch_add(1);
          if (i >= jobs.size()) return;
          try {
            detail::run_fit_job(jobs[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!failed.exchange(true)) error = std::current_exception();
            return;
          }
        }
      });
    for (std::thread& t : workers) t.join();
    if (failed.load()) std::rethrow_exception(error);
  }

  // Pool each repeat's halves into one outcome and score per subject.
  std::vector<std::vector<RepeatOutcome>> outcomes(
      n_cells, std::vector<RepeatOutcome>(static_cast<std::size_t>(repeats)));
  for (const detail::FitJob& job : jobs) {
    RepeatOutcome& o = outcomes[job.cell][static_cast<std::size_t>(job.repeat)];
    require(job.predictions.size() == job.data.test.size(),
            "run_experiment: fit returned ", job.predictions.size(), " predictions for ",
            job.data.test.size(), " test utterances");
    o.predictions.insert(o.predictions.end(), job.predictions.begin(), job.predictions.end());
    for (const Utterance& u : job.data.test) {
      o.truths.push_back(u.label.majority());
      o.subjects.push_back(u.subject);
    }
  }
  for (const std::vector<RepeatOutcome>& cell : outcomes)
    for (const RepeatOutcome& o : cell)
      require(o.predictions.size() == corpus.n_target_utterances(),
              "run_experiment: a repeat covered ", o.predictions.size(), " of ",
              corpus.n_target_utterances(), " target utterances");

  ExperimentReport report;
  for (std::size_t mi = 0; mi < plan.methods.size(); ++mi)
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
      const std::size_t cell = mi * budgets.size() + bi;
      report.cells.push_back(subject_report(outcomes[cell],
                                            method_name(plan.methods[mi]), budgets[bi]));
    }
  if (!csv_path.empty()) write_report_csv(report, csv_path);
  return report;
}

}  // namespace domgen
