// tools/voicepd.cc

// Copyright 2026  The voicepd Authors

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

// Command-line front end: demo-data, extract, augment, train, evaluate, det.
// Exit codes: 0 success, 1 data error, 2 configuration error, 3 numerical
// failure.

#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voicepd/demo.h"
#include "voicepd/experiment.h"

namespace fs = std::filesystem;
using namespace voicepd;

namespace {

struct ExperimentFlags {
  std::string manifest, out, channel = "highquality", preset, sex = "M";
  std::vector<std::string> tasks;
  std::string classifier = "gmm", backend, augment_backend = "off";
  std::optional<int> train_per_class, gmm_components;
  int runs = 40;
  double seg_min = 1.0, seg_max = 5.0;
  uint64_t seed = 0;
  std::string embedder, embedder_manifest;
  int embedder_steps = EmbedderOptions{}.train.steps;
  int threads = 1;
  bool compare_simple = false;
};

void add_experiment_flags(CLI::App *cmd, ExperimentFlags &f) {
  cmd->add_option("--manifest", f.manifest, "Cohort manifest (JSON lines)")
      ->required();
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--channel", f.channel, "highquality or telephone");
  cmd->add_option("--preset", f.preset, "Front-end preset");
  cmd->add_option("--sex", f.sex, "M, F or both");
  cmd->add_option("--task", f.tasks, "Keep only these tasks");
  cmd->add_option("--classifier", f.classifier,
                  "gmm, xvec-cos, xvec-lda-cos or xvec-plda");
  cmd->add_option("--backend", f.backend,
                  "x-vector back end: cos, lda-cos or plda");
  cmd->add_option("--augment-backend-training", f.augment_backend, "on or off");
  cmd->add_option("--train-per-class", f.train_per_class,
                  "Training subjects per class and run");
  cmd->add_option("--runs", f.runs, "Number of random splits");
  cmd->add_option("--segment-min", f.seg_min, "Shortest x-vector segment (s)");
  cmd->add_option("--segment-max", f.seg_max,
                  "Longest x-vector segment (s); inf keeps whole recordings");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--gmm-components", f.gmm_components,
                  "Override the number of mixture components");
  cmd->add_option("--embedder", f.embedder, "Pretrained embedder weights");
  cmd->add_option("--embedder-manifest", f.embedder_manifest,
                  "Background manifest for training the embedder");
  cmd->add_option("--embedder-steps", f.embedder_steps,
                  "Embedder training steps");
  cmd->add_option("--threads", f.threads, "Worker threads");
}

ExperimentConfig to_config(const ExperimentFlags &f) {
  ExperimentConfig c;
  c.channel = parse_channel(f.channel);
  if (!f.preset.empty()) c.preset = parse_frontend_preset(f.preset);
  c.sex = parse_sex_filter(f.sex);
  for (const auto &t : f.tasks) c.tasks.push_back(parse_task(t));
  c.classifier = parse_classifier(f.classifier);
  if (!f.backend.empty()) {
    static const std::map<std::string, Classifier> kBackends = {
        {"cos", Classifier::kXvecCos},
        {"lda-cos", Classifier::kXvecLdaCos},
        {"plda", Classifier::kXvecPlda}};
    const auto it = kBackends.find(f.backend);
    if (it == kBackends.end())
      throw ConfigError("unknown back end '" + f.backend + "'");
    if (f.classifier != "gmm" && c.classifier != it->second)
      throw ConfigError("--backend contradicts --classifier");
    c.classifier = it->second;
  }
  if (f.augment_backend != "on" && f.augment_backend != "off")
    throw ConfigError("--augment-backend-training takes on or off");
  c.augment_backend = f.augment_backend == "on";
  c.train_per_class = f.train_per_class;
  c.n_runs = f.runs;
  c.segment_min_s = f.seg_min;
  c.segment_max_s = f.seg_max;
  c.seed = f.seed;
  c.gmm_components = f.gmm_components;
  if (!f.embedder.empty()) c.embedder_path = f.embedder;
  if (!f.embedder_manifest.empty()) c.embedder_manifest = f.embedder_manifest;
  c.embedder.train.steps = f.embedder_steps;
  c.threads = f.threads;
  c.validate();
  return c;
}

int run(int argc, char **argv) {
  CLI::App app{"Parkinson's disease detection from speech"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

  // demo-data
  auto *demo = app.add_subcommand("demo-data", "Write a synthetic cohort");
  std::string demo_out, demo_sex = "M", demo_channel = "highquality";
  DemoOptions dopts;
  demo->add_option("--out", demo_out, "Output directory")->required();
  demo->add_option("--n-pd", dopts.n_pd, "PD subjects");
  demo->add_option("--n-hc", dopts.n_hc, "HC subjects");
  demo->add_option("--sex", demo_sex, "M, F or both (alternating)");
  demo->add_option("--channel", demo_channel, "highquality or telephone");
  demo->add_option("--seconds", dopts.utterance_s, "Recording length");
  demo->add_option("--background", dopts.n_background,
                   "Background speakers for embedder training");
  demo->add_option("--seed", dopts.seed, "Seed");

  // extract
  auto *extract = app.add_subcommand("extract", "Compute features");
  std::string ex_manifest, ex_out, ex_preset, ex_classifier = "gmm",
                                                ex_channel = "highquality";
  uint64_t ex_seed = 0;
  int ex_threads = 1;
  extract->add_option("--manifest", ex_manifest, "Manifest")->required();
  extract->add_option("--out", ex_out, "Output directory")->required();
  extract->add_option("--preset", ex_preset, "Front-end preset");
  extract->add_option("--classifier", ex_classifier,
                      "Pick the preset for this classifier");
  extract->add_option("--channel", ex_channel,
                      "Pick the preset for this channel");
  extract->add_option("--seed", ex_seed, "Global seed (recorded)");
  extract->add_option("--threads", ex_threads, "Worker threads");

  // augment
  auto *augment = app.add_subcommand("augment", "Write corrupted copies");
  std::string au_manifest, au_out, au_pools, au_mode = "on";
  AugmentPools pools;
  uint64_t au_seed = 0;
  augment->add_option("--manifest", au_manifest, "Manifest")->required();
  augment->add_option("--out", au_out, "Output directory")->required();
  augment->add_option("--pools", au_pools,
                      "Directory with rir/, noise/, music/ and babble/");
  augment->add_option("--rir", pools.rir, "Room impulse responses");
  augment->add_option("--noise", pools.noise, "Noise recordings");
  augment->add_option("--music", pools.music, "Music recordings");
  augment->add_option("--babble", pools.babble, "Speech for babble");
  augment->add_option("--augmentation", au_mode, "on or off");
  augment->add_option("--seed", au_seed, "Global seed");

  // train / evaluate
  ExperimentFlags train_flags, eval_flags;
  auto *train = app.add_subcommand("train", "Fit models for every split");
  add_experiment_flags(train, train_flags);
  auto *evaluate = app.add_subcommand("evaluate", "Score and report");
  add_experiment_flags(evaluate, eval_flags);
  evaluate->add_flag("--compare-simple", eval_flags.compare_simple,
                     "Also report the simple-model EER");

  // det
  auto *det = app.add_subcommand("det", "DET curve and EER of a scores.csv");
  std::string det_scores, det_out;
  det->add_option("--scores", det_scores, "scores.csv")->required();
  det->add_option("--out", det_out, "Output CSV (default det_curve.csv "
                                    "next to the scores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                    : quiet ? spdlog::level::warn
                            : spdlog::level::info);
  const auto root = data_root_from_env();

  if (*demo) {
    if (demo_sex == "both")
      dopts.sex.reset();
    else
      dopts.sex = parse_sex(demo_sex);
    dopts.channel = parse_channel(demo_channel);
    const DemoLayout l = generate_demo(demo_out, dopts);
    std::cout << l.manifest.string() << "\n";
    return 0;
  }
  if (*extract) {
    FrontendPreset preset;
    if (!ex_preset.empty()) {
      preset = parse_frontend_preset(ex_preset);
    } else {
      ExperimentConfig c;
      c.classifier = parse_classifier(ex_classifier);
      c.channel = parse_channel(ex_channel);
      preset = c.frontend_preset();
    }
    const Manifest m = load_manifest(ex_manifest, root, true);
    const ExtractSummary s = cmd_extract(m, preset, ex_out, ex_seed, ex_threads);
    return s.n_failed > 0 ? static_cast<int>(ErrorKind::kData) : 0;
  }
  if (*augment) {
    if (au_mode != "on" && au_mode != "off")
      throw ConfigError("--augmentation takes on or off");
    if (!au_pools.empty()) {
      const fs::path base = au_pools;
      if (pools.rir.empty()) pools.rir = base / "rir";
      if (pools.noise.empty()) pools.noise = base / "noise";
      if (pools.music.empty()) pools.music = base / "music";
      if (pools.babble.empty()) pools.babble = base / "babble";
    }
    const Manifest m = load_manifest(au_manifest, root, true);
    std::cout << cmd_augment(m, pools, au_out, au_seed, au_mode == "on")
                     .string()
              << "\n";
    return 0;
  }
  if (*train) {
    const ExperimentConfig c = to_config(train_flags);
    const Manifest m = load_manifest(train_flags.manifest, root, false);
    std::cout << cmd_train(m, c, train_flags.out).run_dir.string() << "\n";
    return 0;
  }
  if (*evaluate) {
    const ExperimentConfig c = to_config(eval_flags);
    const Manifest m = load_manifest(eval_flags.manifest, root, false);
    const EvaluateResult r =
        cmd_evaluate(m, c, eval_flags.out, eval_flags.compare_simple);
    for (const auto &rep : r.reports) {
      std::cout << sex_dir(rep.sex) << " eer=" << rep.det.eer;
      if (rep.simple) std::cout << " eer_simple=" << rep.simple->eer;
      std::cout << " report=" << (rep.dir / "summary.json").string() << "\n";
    }
    return 0;
  }
  if (*det) {
    const fs::path out = det_out.empty()
                             ? fs::path(det_scores).parent_path() / "det_curve.csv"
                             : fs::path(det_out);
    const EerResult e = cmd_det(det_scores, out);
    std::cout << "eer=" << e.eer << " threshold=" << e.threshold << "\n";
    return 0;
  }
  return static_cast<int>(ErrorKind::kConfig);
}

}  // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const Error &e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error &e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::kData);
  } catch (const nlohmann::json::exception &e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::kData);
  }
}
