// voicepd/experiment.h

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

#ifndef VOICEPD_EXPERIMENT_H_
#define VOICEPD_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voicepd/backend.h"
#include "voicepd/eval.h"
#include "voicepd/frontend.h"
#include "voicepd/manifest.h"
#include "voicepd/tdnn.h"

namespace voicepd {

enum class Classifier { kGmm, kXvecCos, kXvecLdaCos, kXvecPlda };

std::string_view to_string(Classifier c);
Classifier parse_classifier(std::string_view s);
bool is_xvector(Classifier c);
BackendKind backend_kind(Classifier c);

enum class SexFilter { kMale, kFemale, kBoth };

std::string_view to_string(SexFilter s);
SexFilter parse_sex_filter(std::string_view s);
/// "male" or "female"; used for per-sex output directories.
std::string sex_dir(Sex s);

/// Speaker-embedding network trained on a background corpus.
struct EmbedderOptions {
  int frame_width = 64;
  int last_frame_width = 128;
  int embed_dim = 64;
  EmbedderTrainOptions train = {.steps = 1500};
};

struct ExperimentConfig {
  Channel channel = Channel::kHighQuality;
  /// Unset selects the preset matching classifier and channel.
  std::optional<FrontendPreset> preset;
  SexFilter sex = SexFilter::kMale;
  /// Empty keeps every task.
  std::vector<Task> tasks;
  Classifier classifier = Classifier::kGmm;
  /// Add the augmented copies of training recordings to backend training.
  bool augment_backend = false;
  /// Unset means two thirds of the smaller group.
  std::optional<int> train_per_class;
  int n_runs = 40;
  double segment_min_s = 1.0;
  double segment_max_s = 5.0;
  uint64_t seed = 0;
  /// Unset means 20 (high quality) or 50 (telephone).
  std::optional<int> gmm_components;
  int gmm_max_iter = 50;
  double sigmoid_slope = 1.0;
  int lda_dim = 2;
  EmbedderOptions embedder;
  /// Pretrained embedder weights; otherwise one is trained from
  /// `embedder_manifest`.
  std::optional<std::filesystem::path> embedder_path;
  std::optional<std::filesystem::path> embedder_manifest;
  /// Worker threads; results do not depend on it.
  int threads = 1;

  FrontendPreset frontend_preset() const;
  int num_gmm_components() const;
  std::vector<Sex> sexes() const;
  /// Throws ConfigError.
  void validate() const;
  /// Every setting that influences results (not `threads`).
  nlohmann::json to_json() const;
};

/// Hex digest of the configuration together with the data it runs on.
std::string config_fingerprint(const ExperimentConfig &cfg,
                               const std::string &manifest_digest,
                               const std::string &embedder_digest);

/// Digest of a frontend configuration.
std::string frontend_fingerprint(const FrontendConfig &cfg);

// ---------------------------------------------------------------------------
// Feature store: <out>/features/<preset>/ with one container per utterance and
// an index.jsonl describing them.

class FeatureStore {
 public:
  FeatureStore(const std::filesystem::path &out_dir, FrontendPreset preset);

  const std::filesystem::path &dir() const { return dir_; }
  FrontendPreset preset() const { return preset_; }
  std::filesystem::path feature_path(std::string_view utterance_id) const;
  bool has(std::string_view utterance_id) const;
  /// Throws DataError when the features were never extracted.
  FeatureMatrix load(std::string_view utterance_id) const;

 private:
  std::filesystem::path dir_;
  FrontendPreset preset_;
};

struct ExtractSummary {
  int n_records = 0;
  int n_written = 0;
  int n_failed = 0;
  std::vector<std::string> failures;
};

/// Runs the front end on every record; spectral subtraction only for
/// high-quality recordings that come with a noise file. Per-file failures
/// are logged and counted.
ExtractSummary cmd_extract(const Manifest &manifest, FrontendPreset preset,
                           const std::filesystem::path &out_dir,
                           uint64_t seed, int threads = 1);

struct AugmentPools {
  std::filesystem::path rir, noise, music, babble;
};

/// Writes the original plus two corrupted copies of every original record
/// to <out>/augmented/ and returns the path of the combined manifest
/// <out>/augmented.jsonl. When disabled the records are copied unchanged.
std::filesystem::path cmd_augment(const Manifest &manifest,
                                  const AugmentPools &pools,
                                  const std::filesystem::path &out_dir,
                                  uint64_t seed, bool enabled = true);

/// Trains (or loads) the embedder the configuration asks for. Returns its
/// path and digest.
struct EmbedderRef {
  std::filesystem::path path;
  std::string digest;
};
EmbedderRef prepare_embedder(const ExperimentConfig &cfg,
                             const std::filesystem::path &out_dir,
                             bool train_if_missing);

/// <out>/run-<fingerprint>.
std::filesystem::path run_directory(const std::filesystem::path &out_dir,
                                    const ExperimentConfig &cfg,
                                    const Manifest &manifest,
                                    const std::string &embedder_digest);

struct TrainSummary {
  std::filesystem::path run_dir;
  std::string fingerprint;
};

/// Fits the per-sex models of every split and stores them in the run
/// directory.
TrainSummary cmd_train(const Manifest &manifest, const ExperimentConfig &cfg,
                       const std::filesystem::path &out_dir);

struct SexReport {
  Sex sex = Sex::kMale;
  AggregatedScores scores;
  DetCurve det;
  std::optional<DetCurve> simple;
  std::filesystem::path dir;
};

struct EvaluateResult {
  std::filesystem::path run_dir;
  std::string fingerprint;
  std::vector<SexReport> reports;
};

/// Scores the test subjects of every split with the trained models and
/// writes scores.csv, det_curve.csv and summary.json per sex.
EvaluateResult cmd_evaluate(const Manifest &manifest,
                            const ExperimentConfig &cfg,
                            const std::filesystem::path &out_dir,
                            bool compare_simple);

/// Reads a scores.csv and writes its DET curve; returns the EER.
EerResult cmd_det(const std::filesystem::path &scores_csv,
                  const std::filesystem::path &out_csv);

}  // namespace voicepd

#endif  // VOICEPD_EXPERIMENT_H_
