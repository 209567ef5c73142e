// voicepd/tdnn.h

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

#ifndef VOICEPD_TDNN_H_
#define VOICEPD_TDNN_H_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voicepd/common.h"
#include "voicepd/frontend.h"

namespace voicepd {

// The x-vector network: five frame-level TDNN layers (affine + ReLU over
// spliced frames), mean + standard-deviation statistics pooling, two
// segment-level layers and a softmax output. The embedding is the
// pre-activation output of the first segment-level layer.
//
// Splicing wraps around the segment ends (frame t + o is taken modulo T),
// so a segment and its repetition produce identical pooled statistics.

struct TdnnLayerSpec {
  std::vector<int> offsets;  // splice offsets, ascending
  int out_dim = 512;
};

struct TdnnConfig {
  int input_dim = 24;  // K
  std::vector<TdnnLayerSpec> frame_layers;
  int embed_dim = 512;  // segment6
  int seg7_dim = 512;
  int n_classes = 2;  // N

  /// Full-size network: 512, 512, 512, 512, 1500 frame-level units,
  /// 3000-dim pooling, 512-dim segment layers.
  static TdnnConfig table3(int input_dim, int n_classes);
  /// Same topology and contexts with reduced widths, for small-data training.
  static TdnnConfig compact(int input_dim, int n_classes, int frame_width,
                            int last_frame_width, int embed_dim);

  int pooled_dim() const { return 2 * frame_layers.back().out_dim; }
  /// Number of input frames seen by one output frame (15 for the default).
  int receptive_field() const;
  /// Whether every width equals the full-size network's.
  bool is_table3() const;
  void validate() const;
};

struct AffineLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

/// Layers in order tdnn1..tdnn5, segment6, segment7, output.
struct TdnnWeights {
  TdnnConfig cfg;
  std::vector<AffineLayer> layers;

  static constexpr int kNumLayers = 8;
  static const char *layer_name(int i);
  /// Checks shapes against cfg and finiteness. Throws ConfigError.
  void validate() const;
  int64_t num_parameters() const;
};

struct XVector {
  Eigen::VectorXd values;
  std::string source;
  std::string subject_id;
};

struct TdnnOutput {
  Eigen::VectorXd xvector;  // segment6 pre-activation
  Eigen::VectorXd logits;
};

TdnnOutput tdnn_forward(const TdnnWeights &w, const Eigen::MatrixXd &frames);
TdnnOutput tdnn_forward(const TdnnWeights &w, const FeatureMatrix &fm);

/// Averages the x-vectors of the given segments (fragments of one
/// utterance, or all segments of one recording).
XVector extract_xvector(const TdnnWeights &w,
                        std::span<const FeatureMatrix> segments,
                        const std::string &subject_id = {});

/// sqrt(6 / (fan_in + fan_out)).
double glorot_limit(int fan_in, int fan_out);

/// Glorot-uniform weights, zero biases.
TdnnWeights init_weights(const TdnnConfig &cfg, uint64_t seed);

struct TrainExample {
  Eigen::MatrixXd frames;  // T x K
  int label = 0;
};

/// Gradients with the same layout as TdnnWeights::layers.
using TdnnGradients = std::vector<AffineLayer>;

/// Mean cross-entropy over the batch; fills `grad` when non-null.
double tdnn_loss(const TdnnWeights &w, std::span<const TrainExample> batch,
                 TdnnGradients *grad = nullptr);

struct TrainStepResult {
  TdnnWeights weights;
  double loss = 0.0;  // before the update
};

/// One plain gradient-descent step.
TrainStepResult train_step(const TdnnWeights &w,
                           std::span<const TrainExample> batch, double lr);

/// Gradient descent with optional momentum, updating weights in place.
class SgdTrainer {
 public:
  SgdTrainer(TdnnWeights w, double lr, double momentum = 0.0);

  /// Returns the pre-update loss.
  double step(std::span<const TrainExample> batch);
  const TdnnWeights &weights() const { return w_; }
  TdnnWeights release() { return std::move(w_); }
  void set_lr(double lr) { lr_ = lr; }

 private:
  TdnnWeights w_;
  TdnnGradients velocity_;
  double lr_;
  double momentum_;
};

struct EmbedderTrainOptions {
  int steps = 400;
  int batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  /// Random crops of this many frames are drawn from the utterances.
  int min_crop_frames = 100;
  int max_crop_frames = 300;
  uint64_t seed = 0;
};

/// Trains a network on labelled utterance features (e.g. speaker ids) with
/// random fixed-length crops. Progress is logged every 50 steps.
TdnnWeights train_embedder(const TdnnConfig &cfg,
                           std::span<const TrainExample> utterances,
                           const EmbedderTrainOptions &opts);

/// Fraction of examples whose arg-max logit equals the label.
double tdnn_accuracy(const TdnnWeights &w, std::span<const TrainExample> data);

}  // namespace voicepd

#endif  // VOICEPD_TDNN_H_
