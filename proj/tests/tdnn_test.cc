// tests/tdnn_test.cc

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

#include <gtest/gtest.h>

#include <random>

#include "tdnn_reference.h"
#include "test_util.h"
#include "voicepd/tdnn.h"

namespace voicepd {
namespace {

using test::random_matrix;

TdnnWeights random_weights(const TdnnConfig &cfg, uint64_t seed) {
  TdnnWeights w = init_weights(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x55);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto &l : w.layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = n(rng);
  return w;
}

TEST(TdnnConfig, Table3Widths) {
  const TdnnConfig cfg = TdnnConfig::table3(24, 2);
  EXPECT_EQ(cfg.receptive_field(), 15);
  EXPECT_EQ(cfg.pooled_dim(), 3000);
  EXPECT_TRUE(cfg.is_table3());
  const TdnnWeights w = init_weights(cfg, 1);
  ASSERT_EQ(w.layers.size(), 8u);
  EXPECT_EQ(w.layers[0].w.rows(), 512);
  EXPECT_EQ(w.layers[0].w.cols(), 5 * 24);
  EXPECT_EQ(w.layers[1].w.cols(), 1536);
  EXPECT_EQ(w.layers[2].w.cols(), 1536);
  EXPECT_EQ(w.layers[3].w.cols(), 512);
  EXPECT_EQ(w.layers[4].w.rows(), 1500);
  EXPECT_EQ(w.layers[4].w.cols(), 512);
  EXPECT_EQ(w.layers[5].w.rows(), 512);
  EXPECT_EQ(w.layers[5].w.cols(), 3000);
  EXPECT_EQ(w.layers[6].w.rows(), 512);
  EXPECT_EQ(w.layers[7].w.rows(), 2);
  EXPECT_FALSE(TdnnConfig::compact(24, 2, 64, 128, 64).is_table3());
}

TEST(TdnnInit, DeterministicAndBounded) {
  const TdnnConfig cfg = TdnnConfig::compact(31, 3, 32, 48, 24);
  const TdnnWeights a = init_weights(cfg, 7), b = init_weights(cfg, 7),
                    c = init_weights(cfg, 8);
  for (int i = 0; i < TdnnWeights::kNumLayers; ++i) {
    EXPECT_EQ(a.layers[i].w, b.layers[i].w);
    EXPECT_TRUE(a.layers[i].b.isZero(0.0));
    const double lim =
        std::sqrt(6.0 / (a.layers[i].w.rows() + a.layers[i].w.cols()));
    EXPECT_LE(a.layers[i].w.cwiseAbs().maxCoeff(), lim);
    // Uniform draws should come close to the limit.
    EXPECT_GT(a.layers[i].w.cwiseAbs().maxCoeff(), 0.5 * lim);
  }
  EXPECT_NE(a.layers[0].w, c.layers[0].w);
}

TEST(TdnnForward, ZeroWeightsGiveZeroXvector) {
  TdnnWeights w = init_weights(TdnnConfig::table3(24, 2), 3);
  for (auto &l : w.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  const TdnnOutput out = tdnn_forward(w, random_matrix(30, 24, 5));
  EXPECT_TRUE(out.xvector.isZero(0.0));
  EXPECT_EQ(out.xvector.size(), 512);
}

TEST(TdnnForward, MatchesReferenceTable3) {
  const TdnnWeights w = random_weights(TdnnConfig::table3(24, 2), 11);
  const Eigen::MatrixXd x = random_matrix(30, 24, 12);
  const TdnnOutput out = tdnn_forward(w, x);
  const test::ReferenceOutput ref = test::reference_forward(w, x);
  for (int i = 0; i < 2; ++i)
    EXPECT_NEAR(out.logits[i], static_cast<double>(ref.logits[i]), 1e-10);
  double max_err = 0;
  for (int i = 0; i < 512; ++i)
    max_err = std::max<double>(
        max_err, std::abs(out.xvector[i] - static_cast<double>(ref.xvector[i])));
  EXPECT_LT(max_err, 1e-10);
}

TEST(TdnnForward, MatchesReferenceCompactVariousLengths) {
  const TdnnWeights w = random_weights(TdnnConfig::compact(31, 4, 24, 40, 16), 2);
  for (int t : {15, 16, 23, 50}) {
    const Eigen::MatrixXd x = random_matrix(t, 31, 100 + t);
    const TdnnOutput out = tdnn_forward(w, x);
    const test::ReferenceOutput ref = test::reference_forward(w, x);
    for (int i = 0; i < 4; ++i)
      EXPECT_NEAR(out.logits[i], static_cast<double>(ref.logits[i]), 1e-10);
  }
}

TEST(TdnnForward, DuplicationInvariance) {
  const TdnnWeights w = random_weights(TdnnConfig::table3(24, 2), 21);
  const Eigen::MatrixXd x = random_matrix(40, 24, 22);
  Eigen::MatrixXd xx(80, 24);
  xx << x, x;
  const Eigen::VectorXd a = tdnn_forward(w, x).xvector;
  const Eigen::VectorXd b = tdnn_forward(w, xx).xvector;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TdnnForward, Errors) {
  const TdnnWeights w = init_weights(TdnnConfig::compact(24, 2, 8, 8, 8), 1);
  EXPECT_THROW(tdnn_forward(w, random_matrix(14, 24, 1)), DataError);
  EXPECT_NO_THROW(tdnn_forward(w, random_matrix(15, 24, 1)));
  EXPECT_THROW(tdnn_forward(w, random_matrix(30, 23, 1)), ConfigError);
}

TEST(TdnnExtract, Averaging) {
  const TdnnWeights w = random_weights(TdnnConfig::compact(24, 2, 16, 32, 12), 4);
  FeatureMatrix a, b;
  a.frames = random_matrix(30, 24, 1);
  b.frames = random_matrix(45, 24, 2);
  const Eigen::VectorXd u = tdnn_forward(w, a).xvector;
  const Eigen::VectorXd v = tdnn_forward(w, b).xvector;

  std::vector<FeatureMatrix> one = {a};
  EXPECT_LT((extract_xvector(w, one).values - u).cwiseAbs().maxCoeff(), 1e-15);
  std::vector<FeatureMatrix> two = {a, b};
  EXPECT_LT((extract_xvector(w, two).values - 0.5 * (u + v)).cwiseAbs().maxCoeff(),
            1e-14);
  std::vector<FeatureMatrix> three = {a, a, a};
  EXPECT_LT((extract_xvector(w, three).values - u).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(extract_xvector(w, std::vector<FeatureMatrix>{}), DataError);
}

TEST(TdnnTrain, ZeroLearningRateIsNoOp) {
  const TdnnWeights w = random_weights(TdnnConfig::compact(24, 2, 8, 8, 8), 9);
  std::vector<TrainExample> batch = {{random_matrix(20, 24, 1), 0},
                                     {random_matrix(25, 24, 2), 1}};
  const TrainStepResult r = train_step(w, batch, 0.0);
  EXPECT_GT(r.loss, 0.0);
  EXPECT_DOUBLE_EQ(r.loss, tdnn_loss(w, batch));
  for (int i = 0; i < TdnnWeights::kNumLayers; ++i) {
    EXPECT_EQ(r.weights.layers[i].w, w.layers[i].w);
    EXPECT_EQ(r.weights.layers[i].b, w.layers[i].b);
  }
}

TEST(TdnnTrain, RejectsBadLabels) {
  const TdnnWeights w = init_weights(TdnnConfig::compact(24, 2, 8, 8, 8), 9);
  std::vector<TrainExample> batch = {{random_matrix(20, 24, 1), 2}};
  EXPECT_THROW(tdnn_loss(w, batch), ConfigError);
  EXPECT_THROW(tdnn_loss(w, std::vector<TrainExample>{}), DataError);
}

TEST(TdnnTrain, GradientMatchesFiniteDifferences) {
  // Every parameter of a small network.
  const TdnnWeights w = random_weights(TdnnConfig::compact(24, 2, 6, 8, 5), 31);
  std::vector<TrainExample> batch = {{random_matrix(20, 24, 41), 0},
                                     {random_matrix(17, 24, 42), 1}};
  TdnnGradients g;
  tdnn_loss(w, batch, &g);
  const test::ReferenceLoss base = test::reference_loss(w, batch);
  double worst = 0;
  for (int l = 0; l < TdnnWeights::kNumLayers; ++l) {
    for (int i = 0; i < w.layers[l].w.rows(); ++i) {
      for (int j = -1; j < w.layers[l].w.cols(); ++j) {
        const auto c = test::check_parameter(w, batch, g, l, i, j,
                                                base.signature, base.loss);
        worst = std::max(worst, c.rel_error);
      }
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(TdnnTrain, SeparableToySetReachesFullAccuracy) {
  std::vector<TrainExample> data;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < 20; ++s) {
    const int label = s % 2;
    Eigen::MatrixXd x(30, 24);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    x.leftCols(4).array() += label ? 1.0 : -1.0;
    data.push_back({x, label});
  }
  TdnnWeights w = init_weights(TdnnConfig::compact(24, 2, 16, 32, 16), 6);
  for (int step = 0; step < 200; ++step) w = train_step(w, data, 0.01).weights;
  EXPECT_DOUBLE_EQ(tdnn_accuracy(w, data), 1.0);
}

TEST(TdnnWeights, ValidateRejectsBadShapes) {
  TdnnWeights w = init_weights(TdnnConfig::compact(24, 2, 8, 8, 8), 1);
  EXPECT_NO_THROW(w.validate());
  w.layers[2].w.conservativeResize(8, 23);
  EXPECT_THROW(w.validate(), ConfigError);
}

}  // namespace
}  // namespace voicepd
