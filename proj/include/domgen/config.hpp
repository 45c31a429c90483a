// domgen/config.hpp
//
// Flat key=value config files and the parsers that turn them into synthetic
// corpus specs, experiment plans, and single-fit descriptions.

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

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "domgen/common.hpp"
#include "domgen/experiments.hpp"
#include "domgen/train.hpp"

namespace domgen {

// One key=value per line. Blank lines and lines starting with '#' (after
// optional whitespace) are ignored; there are no inline comments, so paths
// may contain '#'. Keys must be unique. Every key must be consumed by a
// typed getter before finish(), so misspelled keys fail loudly instead of
// silently falling back to defaults.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValues kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      const std::size_t eq = trimmed.find('=');
      require(eq != std::string::npos, origin, ":", line_no, ": expected key=value, got \"",
              trimmed, "\"");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      require(!key.empty(), origin, ":", line_no, ": empty key");
      require(kv.values_.emplace(key, value).second, origin, ":", line_no,
              ": duplicate key ", key);
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(detail::str_cat("cannot open config ", path));
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str(), path);
  }

  const std::string& origin() const { return origin_; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    const auto it = values_.find(key);
    require(it != values_.end(), origin_, ": missing required key ", key);
    consumed_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  std::int64_t get_int(const std::string& key) { return to_int(key, get_string(key)); }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_uint(const std::string& key) {
    const std::int64_t v = get_int(key);
    require(v >= 0, origin_, ": key ", key, " must be non-negative, got ", v);
    return static_cast<std::uint64_t>(v);
  }
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) {
    return has(key) ? get_uint(key) : fallback;
  }

  double get_double(const std::string& key) {
    const std::string raw = get_string(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == raw.size() && !raw.empty(), origin_, ": key ", key,
            " wants a number, got \"", raw, "\"");
    return v;
  }
  double get_double(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    if (raw == "1" || raw == "true") return true;
    if (raw == "0" || raw == "false") return false;
    throw ValueError(detail::str_cat(origin_, ": key ", key, " wants 0/1/true/false, got \"",
                                     raw, "\""));
  }

  // Comma-separated, items trimmed, empty items rejected.
  std::vector<std::string> get_list(const std::string& key) {
    const std::string raw = get_string(key);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
      std::size_t comma = raw.find(',', start);
      if (comma == std::string::npos) comma = raw.size();
      const std::string item = trim(raw.substr(start, comma - start));
      require(!item.empty(), origin_, ": key ", key, " has an empty list item");
      out.push_back(item);
      start = comma + 1;
    }
    return out;
  }

  std::vector<std::int64_t> get_int_list(const std::string& key) {
    std::vector<std::int64_t> out;
    for (const std::string& item : get_list(key)) out.push_back(to_int(key, item));
    return out;
  }

  // Rejects any key no getter has touched.
  void finish() const {
    for (const auto& [key, value] : values_)
      require(consumed_.count(key) > 0, origin_, ": unknown key ", key);
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::int64_t to_int(const std::string& key, const std::string& raw) const {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == raw.size() && !raw.empty(), origin_, ": key ", key,
            " wants an integer, got \"", raw, "\"");
    return v;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::string origin_;
};

// ---------------------------------------------------------------------------
// Synthetic corpus specs
//
//   seed=7                      template_gain=2.0
//   min_frames=30               nuisance_gain=2.0
//   max_frames=60               rating_noise=0.4
//   datasets=2
//   dataset.0.name=alpha        dataset.0.utterances=600
//   dataset.0.subjects=10       dataset.0.rho=0.8
//   dataset.0.sigma=0.3         dataset.0.target=0
//   dataset.0.offset_scale=1.0  dataset.0.offset_waves=1
//
// A non-zero offset_scale materializes as a cosine tilt with offset_waves
// periods across the mel axis; scale 0 (the default) means no offset.

inline SynthSpec parse_synth_spec(KeyValues& kv) {
  SynthSpec spec;
  spec.seed = kv.get_uint("seed");
  spec.template_gain = kv.get_double("template_gain", spec.template_gain);
  spec.nuisance_gain = kv.get_double("nuisance_gain", spec.nuisance_gain);
  spec.rating_noise = kv.get_double("rating_noise", spec.rating_noise);
  spec.min_frames = static_cast<int>(kv.get_int("min_frames", spec.min_frames));
  spec.max_frames = static_cast<int>(kv.get_int("max_frames", spec.max_frames));

  const std::int64_t n = kv.get_int("datasets");
  require(n > 0, kv.origin(), ": datasets must be positive, got ", n);
  for (std::int64_t d = 0; d < n; ++d) {
    const std::string p = detail::str_cat("dataset.", d, ".");
    SynthDataset ds;
    ds.name = kv.get_string(p + "name");
    ds.n_utterances = static_cast<int>(kv.get_int(p + "utterances"));
    ds.n_subjects = static_cast<int>(kv.get_int(p + "subjects"));
    ds.rho = kv.get_double(p + "rho", 0.0);
    ds.sigma = kv.get_double(p + "sigma", 0.0);
    ds.target = kv.get_bool(p + "target", false);
    const double scale = kv.get_double(p + "offset_scale", 0.0);
    const int waves = static_cast<int>(kv.get_int(p + "offset_waves", d + 1));
    if (scale != 0.0) ds.domain_offset = cosine_tilt(waves, scale);
    spec.datasets.push_back(std::move(ds));
  }
  kv.finish();
  spec.validate();
  return spec;
}

inline SynthSpec load_synth_spec(const std::string& path) {
  KeyValues kv = KeyValues::load(path);
  return parse_synth_spec(kv);
}

// ---------------------------------------------------------------------------
// Experiment and single-fit configs
//
// Corpora come either from a synthetic spec (synth_spec=<path>, generated in
// memory) or from a manifest with feature caches (manifest=<path>). Dataset
// roles are picked by name:
//
//   sources=alpha,gamma
//   target=beta
//
// Relative synth_spec/manifest paths resolve against the config's directory;
// output paths (report, epoch_csv, checkpoint) stay relative to the working
// directory.

struct NamedCorpus {
  std::vector<std::vector<Utterance>> sources;
  std::vector<Utterance> target;
};

namespace detail {

inline std::string resolve_near(const std::string& base_dir, const std::string& path) {
  namespace fs = std::filesystem;
  if (base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

inline NamedCorpus pick_named_corpus(std::vector<std::string> names,
                                     std::vector<std::vector<Utterance>> sets,
                                     const std::vector<std::string>& sources,
                                     const std::string& target, const std::string& origin) {
  const auto find = [&](const std::string& name) -> std::vector<Utterance>& {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return sets[i];
    throw ValueError(str_cat(origin, ": dataset ", name, " not found in the corpus"));
  };
  NamedCorpus out;
  for (const std::string& name : sources) {
    require(name != target, origin, ": dataset ", name, " listed as both source and target");
    out.sources.push_back(find(name));
  }
  out.target = find(target);
  return out;
}

inline NamedCorpus parse_corpus_keys(KeyValues& kv, const std::string& base_dir) {
  const std::vector<std::string> sources = kv.get_list("sources");
  const std::string target = kv.get_string("target");
  const bool from_synth = kv.has("synth_spec");
  const bool from_manifest = kv.has("manifest");
  require(from_synth != from_manifest, kv.origin(),
          ": need exactly one of synth_spec or manifest");
  if (from_synth) {
    const SynthSpec spec =
        load_synth_spec(resolve_near(base_dir, kv.get_string("synth_spec")));
    std::vector<std::string> names;
    for (const SynthDataset& ds : spec.datasets) names.push_back(ds.name);
    return pick_named_corpus(names, synth_corpus(spec), sources, target, kv.origin());
  }
  LoadedCorpus corpus = load_corpus(resolve_near(base_dir, kv.get_string("manifest")));
  return pick_named_corpus(std::move(corpus.names), std::move(corpus.sets), sources, target,
                           kv.origin());
}

inline void parse_train_keys(KeyValues& kv, TrainConfig& config) {
  config.epochs = static_cast<int>(kv.get_int("epochs", config.epochs));
  config.channels = static_cast<int>(kv.get_int("channels", config.channels));
  config.m = static_cast<int>(kv.get_int("batch", config.m));
  config.n_critic = static_cast<int>(kv.get_int("n_critic", config.n_critic));
  config.clip_c = kv.get_double("clip", config.clip_c);
  config.lambda = kv.get_double("lambda", config.lambda);
  config.learning_rate = kv.get_double("learning_rate", config.learning_rate);
}

inline std::vector<Method> parse_method_list(KeyValues& kv, const std::string& key) {
  std::vector<Method> out;
  for (const std::string& name : kv.get_list(key)) out.push_back(parse_method(name));
  return out;
}

}  // namespace detail

struct ExperimentConfig {
  ExperimentPlan plan;
  std::string report_path;  // empty when the config names no report
};

inline ExperimentConfig parse_experiment_config(KeyValues& kv, const std::string& base_dir) {
  ExperimentConfig out;
  out.plan.protocol = kv.get_string("protocol");
  NamedCorpus corpus = detail::parse_corpus_keys(kv, base_dir);
  out.plan.sources = std::move(corpus.sources);
  out.plan.target = std::move(corpus.target);
  out.plan.methods = detail::parse_method_list(kv, "methods");
  if (kv.has("budgets")) {
    out.plan.budgets.clear();
    for (std::int64_t b : kv.get_int_list("budgets"))
      out.plan.budgets.push_back(static_cast<int>(b));
  }
  out.plan.repeats = static_cast<int>(kv.get_int("repeats", 0));
  out.plan.seed = kv.get_uint("seed");
  detail::parse_train_keys(kv, out.plan.base);
  out.report_path = kv.get_string("report", "");
  kv.finish();
  return out;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  KeyValues kv = KeyValues::load(path);
  return parse_experiment_config(kv, std::filesystem::path(path).parent_path().string());
}

// A single fit out of the experiment grid, addressed by method, budget,
// repeat, and half. Uses the same split and seed streams as run_experiment,
// so its epoch log describes exactly one of the experiment's fits.
struct FitConfig {
  std::string protocol;
  NamedCorpus corpus;
  Method method = Method::kCnn;
  int budget = 0;
  int repeat = 0;
  int half = 1;
  TrainConfig train;
  std::uint64_t seed = 0;  // experiment seed; the fit seed derives from it
  std::string epoch_csv;
  std::string checkpoint;
};

inline FitConfig parse_fit_config(KeyValues& kv, const std::string& base_dir) {
  FitConfig out;
  out.protocol = kv.get_string("protocol");
  out.corpus = detail::parse_corpus_keys(kv, base_dir);
  out.method = parse_method(kv.get_string("method"));
  out.budget = static_cast<int>(kv.get_int("budget", 0));
  out.repeat = static_cast<int>(kv.get_int("repeat", 0));
  out.half = static_cast<int>(kv.get_int("half", 1));
  out.seed = kv.get_uint("seed");
  detail::parse_train_keys(kv, out.train);
  out.epoch_csv = kv.get_string("epoch_csv", "");
  out.checkpoint = kv.get_string("checkpoint", "");
  kv.finish();
  out.train.method = out.method;
  out.train.seed = fit_seed(out.seed, out.method, out.budget, out.repeat, out.half);
  return out;
}

inline FitConfig load_fit_config(const std::string& path) {
  KeyValues kv = KeyValues::load(path);
  return parse_fit_config(kv, std::filesystem::path(path).parent_path().string());
}

}  // namespace domgen
