// tests/plda_util.h

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

// Synthetic PLDA data and brute-force likelihood oracles built from the
// full stacked covariance matrices.

#ifndef VOICEPD_TESTS_PLDA_UTIL_H_
#define VOICEPD_TESTS_PLDA_UTIL_H_

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "voicepd/backend.h"

namespace voicepd::test {

inline PldaModel random_plda(int d, int r_b, int r_w, uint64_t seed,
                             double between_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 0.5);
  PldaModel m;
  m.mu.resize(d);
  m.F.resize(d, r_b);
  m.G.resize(d, r_w);
  m.sigma.resize(d);
  for (int i = 0; i < d; ++i) m.mu[i] = n(rng);
  for (Eigen::Index i = 0; i < m.F.size(); ++i) m.F(i) = between_scale * n(rng);
  for (Eigen::Index i = 0; i < m.G.size(); ++i) m.G(i) = 0.7 * n(rng);
  for (int i = 0; i < d; ++i) m.sigma[i] = u(rng);
  return m;
}

struct PldaSample {
  PldaModel model;
  Eigen::MatrixXd xs;
  std::vector<int> labels;
};

/// Draws per_class samples for each of n_classes identities; rows of one
/// class are contiguous.
inline PldaSample sample_plda(const PldaModel &m, int n_classes, int per_class,
                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const int d = m.dim();
  PldaSample s;
  s.model = m;
  s.xs.resize(n_classes * per_class, d);
  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd h(m.F.cols());
    for (Eigen::Index k = 0; k < h.size(); ++k) h[k] = n(rng);
    for (int j = 0; j < per_class; ++j) {
      Eigen::VectorXd w(m.G.cols()), e(d);
      for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = n(rng);
      for (int k = 0; k < d; ++k) e[k] = std::sqrt(m.sigma[k]) * n(rng);
      s.xs.row(c * per_class + j) = (m.mu + m.F * h + m.G * w + e).transpose();
      s.labels.push_back(c);
    }
  }
  return s;
}

inline double gaussian_logpdf(const Eigen::VectorXd &x,
                              const Eigen::MatrixXd &cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (x.size() * std::log(2.0 * std::numbers::pi) + logdet +
                 x.dot(llt.solve(x)));
}

/// Marginal log-likelihood with each class's samples stacked into one
/// vector whose covariance is I (x) W + 11' (x) B.
inline double plda_loglik_oracle(const PldaModel &m, const Eigen::MatrixXd &xs,
                                 const std::vector<int> &labels) {
  std::map<int, std::vector<int>> groups;
  for (size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  const int d = m.dim();
  const Eigen::MatrixXd b = m.between_cov(), w = m.within_cov();
  double ll = 0.0;
  for (const auto &[id, rows] : groups) {
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd cov(n * d, n * d);
    Eigen::VectorXd x(n * d);
    for (int i = 0; i < n; ++i) {
      x.segment(i * d, d) = xs.row(rows[i]).transpose() - m.mu;
      for (int j = 0; j < n; ++j)
        cov.block(i * d, j * d, d, d) = i == j ? Eigen::MatrixXd(b + w) : b;
    }
    ll += gaussian_logpdf(x, cov);
  }
  return ll;
}

/// Same-identity log-likelihood ratio from the stacked 2d covariance.
inline double plda_llr_oracle(const PldaModel &m, const Eigen::VectorXd &a,
                              const Eigen::VectorXd &b) {
  const int d = m.dim();
  const Eigen::MatrixXd bc = m.between_cov();
  const Eigen::MatrixXd t = bc + m.within_cov();
  Eigen::MatrixXd same(2 * d, 2 * d);
  same << t, bc, bc, t;
  Eigen::VectorXd x(2 * d);
  x << a - m.mu, b - m.mu;
  return gaussian_logpdf(x, same) - gaussian_logpdf(a - m.mu, t) -
         gaussian_logpdf(b - m.mu, t);
}

/// Probability that a positive outscores a negative, ties counted half.
inline double auc(const std::vector<double> &pos,
                  const std::vector<double> &neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * neg.size());
}

}  // namespace voicepd::test

#endif  // VOICEPD_TESTS_PLDA_UTIL_H_
