// domgen command line interface.
//
// Subcommands: synth, extract-features, train, experiment, gradcheck,
// validate-manifest. Exit codes: 0 success, 1 runtime failure, 2 unknown
// subcommand, 3 invalid configuration or usage. Errors print one line to
// stderr, prefixed "error:".

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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "domgen/config.hpp"
#include "domgen/experiments.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUnknownCommand = 2;
constexpr int kExitBadConfig = 3;

int fail(int code, const std::exception& e) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return code;
}

// Phase split: `load` covers reading flags/configs/referenced inputs (bad
// input exits 3), `run` covers the actual work (failures exit 1).
template <typename Load, typename Run>
int staged(Load&& load, Run&& run) {
  decltype(load()) state;
  try {
    state = load();
  } catch (const std::exception& e) {
    return fail(kExitBadConfig, e);
  }
  try {
    return run(std::move(state));
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e);
  }
}

int env_threads() {
  const char* raw = std::getenv("DOMGEN_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  domgen::require(end != raw && *end == '\0' && v >= 1,
                  "DOMGEN_THREADS must be a positive integer, got \"", raw, "\"");
  return static_cast<int>(v);
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, bool wav) {
  return staged(
      [&] { return domgen::load_synth_spec(spec_path); },
      [&](domgen::SynthSpec spec) {
        domgen::synth_write(spec, out_dir, wav);
        int total = 0;
        for (const domgen::SynthDataset& ds : spec.datasets) total += ds.n_utterances;
        std::printf("wrote %d utterances (%zu datasets, %s) to %s/manifest.jsonl\n", total,
                    spec.datasets.size(), wav ? "wav" : "feature caches", out_dir.c_str());
        return 0;
      });
}

int cmd_extract(const std::string& manifest_path, const std::string& out_dir, int rate) {
  return staged(
      [&] {
        domgen::require(rate > 0, "rate must be positive, got ", rate);
        return domgen::read_manifest(manifest_path);
      },
      [&](std::vector<domgen::UtteranceRecord> records) {
        namespace fs = std::filesystem;
        const fs::path base = fs::path(manifest_path).parent_path();
        fs::create_directories(out_dir);
        for (domgen::UtteranceRecord& rec : records) {
          domgen::require(!rec.audio_path.empty(), "record ", rec.id,
                          " has no audio_path; nothing to extract");
          const fs::path wav = fs::path(rec.audio_path).is_absolute()
                                   ? fs::path(rec.audio_path)
                                   : base / rec.audio_path;
          domgen::AudioClip clip = domgen::peak_normalize(domgen::read_wav(wav.string()));
          if (clip.silence_warning)
            std::fprintf(stderr, "warning: %s is silent\n", rec.id.c_str());
          if (clip.sample_rate != rate) clip = domgen::resample(clip, rate);
          const domgen::FeatureMatrix feats = domgen::extract_mfb(clip);
          rec.feature_path = rec.dataset + "/" + rec.id + ".mfb";
          rec.audio_path.clear();
          fs::create_directories(fs::path(out_dir) / rec.dataset);
          domgen::cache_write(feats, (fs::path(out_dir) / rec.feature_path).string());
        }
        const std::string out_manifest = (fs::path(out_dir) / "manifest.jsonl").string();
        domgen::write_manifest(records, out_manifest);
        std::printf("extracted %zu feature caches to %s\n", records.size(),
                    out_manifest.c_str());
        return 0;
      });
}

int cmd_train(const std::string& config_path) {
  return staged(
      [&] { return domgen::load_fit_config(config_path); },
      [&](domgen::FitConfig cfg) {
        const domgen::ExperimentCorpus corpus(cfg.corpus.sources, cfg.corpus.target);
        const domgen::TrainData data =
            corpus.fold(cfg.protocol, cfg.budget, cfg.repeat, cfg.half, cfg.seed);
        domgen::Trainer trainer(cfg.train, data);
        const domgen::FitResult result = domgen::fit(trainer, cfg.epoch_csv);
        if (!cfg.checkpoint.empty())
          domgen::save_checkpoint(trainer.params(), cfg.checkpoint);

        const domgen::EpochRecord& best =
            result.records[static_cast<std::size_t>(result.selected_epoch - 1)];
        std::printf("%s fit: %d epochs, selected epoch %d (val uar %.4f)\n",
                    domgen::method_name(cfg.method), cfg.train.epochs, result.selected_epoch,
                    best.val_uar);
        if (!cfg.epoch_csv.empty())
          std::printf("epoch log appended to %s\n", cfg.epoch_csv.c_str());
        if (!cfg.checkpoint.empty())
          std::printf("final-epoch checkpoint written to %s\n", cfg.checkpoint.c_str());
        return 0;
      });
}

int cmd_experiment(const std::string& config_path, const std::string& report_override) {
  return staged(
      [&] {
        domgen::ExperimentConfig cfg = domgen::load_experiment_config(config_path);
        cfg.plan.threads = env_threads();
        if (!report_override.empty()) cfg.report_path = report_override;
        return cfg;
      },
      [&](domgen::ExperimentConfig cfg) {
        const domgen::ExperimentReport report =
            domgen::run_experiment(cfg.plan, cfg.report_path);
        for (const domgen::SubjectUarMatrix& cell : report.cells)
          std::printf("%-8s budget %-5d uar %.4f +/- %.4f  (%zu repeats, %zu subjects)\n",
                      cell.method.c_str(), cell.budget, cell.mean(), cell.stddev(),
                      cell.values.size(), cell.subjects.size());
        if (!cfg.report_path.empty())
          std::printf("report written to %s\n", cfg.report_path.c_str());
        return 0;
      });
}

int cmd_gradcheck(std::uint64_t seed) {
  try {
    const domgen::GradCheckReport report = domgen::full_graph_gradcheck(seed);
    std::printf("max relative error %.3e over %lld comparisons\n", report.max_rel_error,
                static_cast<long long>(report.evaluated));
    return report.passed(1e-4) ? 0 : kExitRuntime;
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e);
  }
}

int cmd_validate(const std::string& manifest_path) {
  return staged(
      [&] { return domgen::read_manifest(manifest_path); },
      [&](std::vector<domgen::UtteranceRecord> records) {
        std::int64_t rejected = 0;
        for (const auto& [name, h] : domgen::label_histograms(records)) {
          std::printf("%s: %lld low / %lld mid / %lld high, %lld tie-rejected, %lld unlabeled\n",
                      name.c_str(), static_cast<long long>(h.bins[0]),
                      static_cast<long long>(h.bins[1]), static_cast<long long>(h.bins[2]),
                      static_cast<long long>(h.rejected),
                      static_cast<long long>(h.unlabeled));
          rejected += h.rejected;
        }
        std::printf("%zu records, %lld tie-rejected\n", records.size(),
                    static_cast<long long>(rejected));
        return 0;
      });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-corpus utterance classification: synthetic corpora, feature "
               "extraction, adversarial domain generalization training, experiments"};
  app.require_subcommand(1);

  const std::set<std::string> known{"synth",      "extract-features", "train",
                                    "experiment", "gradcheck",        "validate-manifest"};
  if (argc < 2) {
    std::fprintf(stderr, "%s", app.help().c_str());
    return kExitUnknownCommand;
  }
  const std::string first = argv[1];
  if (known.count(first) == 0 && first != "-h" && first != "--help") {
    std::fprintf(stderr, "error: unknown subcommand \"%s\"\n", first.c_str());
    return kExitUnknownCommand;
  }

  std::string spec_path, out_dir, manifest_path, config_path, report_override;
  bool wav = false;
  int rate = 16000;
  std::uint64_t seed = 7;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic domain-shift corpus");
  synth->add_option("--spec", spec_path, "Synthetic corpus spec (key=value)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_flag("--wav", wav, "Write WAV files instead of feature caches");

  CLI::App* extract =
      app.add_subcommand("extract-features", "Extract log mel features from WAV manifests");
  extract->add_option("--manifest", manifest_path, "Manifest with audio_path records")
      ->required()
      ->check(CLI::ExistingFile);
  extract->add_option("--out", out_dir, "Output directory for caches and manifest")
      ->required();
  extract->add_option("--rate", rate, "Resample rate in Hz (default 16000)");

  CLI::App* train = app.add_subcommand("train", "Run a single fit from the experiment grid");
  train->add_option("--config", config_path, "Fit config (key=value)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* experiment =
      app.add_subcommand("experiment", "Run a method grid over repeated splits");
  experiment->add_option("--config", config_path, "Experiment config (key=value)")
      ->required()
      ->check(CLI::ExistingFile);
  experiment->add_option("--report", report_override,
                         "Write the subject report CSV here (overrides the config)");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of the training graph");
  gradcheck->add_option("--seed", seed, "Instance seed (default 7)");

  CLI::App* validate =
      app.add_subcommand("validate-manifest", "Summarize labels in a manifest");
  validate->add_option("manifest", manifest_path, "Manifest to validate")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadConfig;
  }

  if (synth->parsed()) return cmd_synth(spec_path, out_dir, wav);
  if (extract->parsed()) return cmd_extract(manifest_path, out_dir, rate);
  if (train->parsed()) return cmd_train(config_path);
  if (experiment->parsed()) return cmd_experiment(config_path, report_override);
  if (gradcheck->parsed()) return cmd_gradcheck(seed);
  if (validate->parsed()) return cmd_validate(manifest_path);
  return kExitUnknownCommand;
}
