// voicepd/gmm.h

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

#ifndef VOICEPD_GMM_H_
#define VOICEPD_GMM_H_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voicepd/common.h"
#include "voicepd/frontend.h"

namespace voicepd {

/// Diagonal-covariance Gaussian mixture for one class.
struct GmmModel {
  Eigen::VectorXd weights;    // M
  Eigen::MatrixXd means;      // M x D
  Eigen::MatrixXd variances;  // M x D
  /// Per-dimension lower bound on every variance.
  Eigen::VectorXd variance_floor;  // D
  ClassLabel label = ClassLabel::kHC;

  int num_components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }

  /// Checks shapes, finiteness, weight normalization within `weight_tol`
  /// and the variance floor. Throws ConfigError.
  void validate(double weight_tol = 1e-10) const;
};

/// Component count used for a channel: 20 (high quality), 50 (telephone).
int default_num_components(bool telephone);

/// 1e-3 times the per-dimension variance of the pooled frames.
Eigen::VectorXd default_variance_floor(const Eigen::MatrixXd &frames);

/// k-means++ seeding plus 10 Lloyd iterations. Needs >= 10 * m frames.
GmmModel kmeans_init(const Eigen::MatrixXd &frames, int m, uint64_t seed);

struct EmOptions {
  int max_iter = 50;
  /// Stop when the per-frame log-likelihood improves by less than this.
  double tol = 1e-6;
};

struct EmResult {
  GmmModel model;
  /// Total log-likelihood of the data under the parameters entering each
  /// iteration, followed by that of the returned model.
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
};

/// Maximum-likelihood EM for a diagonal GMM with the init's variance floor.
EmResult em_fit(const GmmModel &init, const Eigen::MatrixXd &frames,
                const EmOptions &opts = {});

/// log sum_m w_m N(frame; mu_m, diag var_m).
double frame_loglik(const GmmModel &model, std::span<const double> frame);

/// frame_loglik for every row of `frames`.
Eigen::VectorXd frame_logliks(const GmmModel &model,
                              const Eigen::MatrixXd &frames);

struct SubjectScore {
  std::string subject_id;
  double score = 0.5;  // sigmoid(slope * llr)
  double llr = 0.0;    // mean PD log-likelihood minus mean HC log-likelihood
  int n_frames = 0;
};

SubjectScore score_subject(const FeatureMatrix &fm, const GmmModel &model_pd,
                           const GmmModel &model_hc, double sigmoid_slope = 1.0,
                           const std::string &subject_id = {});

/// Trains one class model: k-means init followed by EM.
GmmModel train_gmm(const Eigen::MatrixXd &frames, int m, ClassLabel label,
                   uint64_t seed, const EmOptions &opts = {});

/// Stacks the rows of several feature matrices.
Eigen::MatrixXd pool_frames(std::span<const FeatureMatrix> mats);

}  // namespace voicepd

#endif  // VOICEPD_GMM_H_
