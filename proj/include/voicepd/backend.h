// voicepd/backend.h

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

#ifndef VOICEPD_BACKEND_H_
#define VOICEPD_BACKEND_H_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voicepd/common.h"
#include "voicepd/tdnn.h"

namespace voicepd {

/// x . c / (|x| |c|). Throws DataError for a zero vector.
double cosine_score(const Eigen::VectorXd &x, const Eigen::VectorXd &c);

struct ClassCentroids {
  Eigen::VectorXd pd;
  Eigen::VectorXd hc;
  int count_pd = 0;
  int count_hc = 0;
};

/// Arithmetic mean of the x-vectors of each class.
ClassCentroids compute_centroids(std::span<const XVector> xs,
                                 std::span<const ClassLabel> labels);

struct LdaOptions {
  int d_out = 2;
  /// Added to the within-class scatter; unset means 1e-4 * trace(S_w) / d.
  std::optional<double> ridge;
  /// Allow more output dimensions than the rank of the between-class
  /// scatter (C - 1); the extra directions carry no discriminant energy.
  bool allow_beyond_rank = false;
};

struct LdaProjection {
  Eigen::MatrixXd basis;             // d_out x d_in
  Eigen::VectorXd global_mean;       // d_in
  Eigen::VectorXd eigenvalues;       // d_out, descending
  std::vector<int> class_ids;        // sorted distinct labels
  Eigen::MatrixXd class_means;       // projected, one row per class id

  int d_in() const { return static_cast<int>(basis.cols()); }
  int d_out() const { return static_cast<int>(basis.rows()); }
};

/// Fisher LDA: generalized eigenvectors of S_b v = l (S_w + ridge I) v,
/// largest first, each scaled to unit within-class norm and signed so that
/// its first nonzero component is positive. Rows of `xs` are samples.
LdaProjection lda_fit(const Eigen::MatrixXd &xs, std::span<const int> labels,
                      const LdaOptions &opts = {});

/// basis * (x - global_mean).
Eigen::VectorXd lda_project(const LdaProjection &p, const Eigen::VectorXd &x);

/// x = mu + F h + G w + eps, h ~ N(0, I), w ~ N(0, I), eps ~ N(0, diag sigma).
struct PldaModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd F;      // d x r_b
  Eigen::MatrixXd G;      // d x r_w
  Eigen::VectorXd sigma;  // d, diagonal noise variances

  int dim() const { return static_cast<int>(mu.size()); }
  Eigen::MatrixXd between_cov() const { return F * F.transpose(); }
  Eigen::MatrixXd within_cov() const;
  /// Checks shapes, finiteness and positive noise. Throws ConfigError.
  void validate() const;
};

struct PldaOptions {
  int r_b = 1;
  /// Unset means min(10, d - 1).
  std::optional<int> r_w;
  int iters = 50;
  /// Stop when the per-sample log-likelihood gain falls below this.
  double tol = 1e-8;
  /// Noise variances are kept above this fraction of the mean total variance.
  double sigma_floor = 1e-10;
};

struct PldaFitResult {
  PldaModel model;
  /// Marginal log-likelihood of the data before each update and after the
  /// last one.
  std::vector<double> loglik_trace;
};

/// EM for the two-latent model; mu is fixed at the global mean.
PldaFitResult plda_fit(const Eigen::MatrixXd &xs, std::span<const int> labels,
                       const PldaOptions &opts = {});

/// Log-likelihood of the data with the latent variables integrated out.
double plda_marginal_loglik(const PldaModel &m, const Eigen::MatrixXd &xs,
                            std::span<const int> labels);

/// Precomputed two-covariance verification scorer.
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel &m);
  /// log p(x1, x2 | same identity) - log p(x1) p(x2); symmetric.
  double score(const Eigen::VectorXd &x1, const Eigen::VectorXd &x2) const;

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd q_;  // applied to each vector alone
  Eigen::MatrixXd p_;  // cross term, symmetric
  double constant_ = 0.0;
};

double plda_score(const PldaModel &m, const Eigen::VectorXd &x1,
                  const Eigen::VectorXd &x2);

enum class BackendKind { kCosine, kLdaCosine, kPlda };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view s);

enum class LdaLabelMode { kClass, kSpeaker };

struct BackendOptions {
  BackendKind kind = BackendKind::kCosine;
  LdaLabelMode lda_labels = LdaLabelMode::kSpeaker;
  LdaOptions lda;
  PldaOptions plda;
};

/// Everything needed to score x-vectors against the two classes.
struct Backend {
  BackendKind kind = BackendKind::kCosine;
  ClassCentroids centroids;
  std::optional<LdaProjection> lda;
  std::optional<PldaModel> plda;

  /// Similarity to the PD centroid minus similarity to the HC centroid.
  double similarity_difference(const Eigen::VectorXd &x) const;
};

/// Centroids from the training x-vectors, then LDA (speaker or class labels)
/// and PLDA (class identities) as the backend kind requires.
Backend train_backend(std::span<const XVector> xs,
                      std::span<const ClassLabel> labels,
                      const BackendOptions &opts);

struct TrialScore {
  std::string subject_id;
  std::vector<double> per_xvector;
  double final_score = 0.5;
};

/// Mean of per-x-vector scores sigmoid(slope * similarity difference). The
/// mean is formed so that it is exactly independent of x-vector order and
/// swapping the centroids yields exactly 1 - score.
TrialScore classify_subject(std::span<const XVector> xvecs,
                            const Backend &backend, double sigmoid_slope = 1.0,
                            const std::string &subject_id = {});

/// mean(sigmoid(z_i)) with the symmetry guarantees described above.
double symmetric_mean_sigmoid(std::span<const double> z);

}  // namespace voicepd

#endif  // VOICEPD_BACKEND_H_
