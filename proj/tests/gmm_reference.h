// tests/gmm_reference.h

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

#ifndef VOICEPD_TESTS_GMM_REFERENCE_H_
#define VOICEPD_TESTS_GMM_REFERENCE_H_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "voicepd/gmm.h"

namespace voicepd::test {

/// Random diagonal GMM with weights from a Dirichlet(1) draw.
inline GmmModel random_gmm(int m, int d, uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  std::exponential_distribution<double> e(1.0);
  GmmModel g;
  g.weights.resize(m);
  for (int k = 0; k < m; ++k) g.weights(k) = e(rng) + 0.05;
  g.weights /= g.weights.sum();
  g.means = Eigen::MatrixXd::NullaryExpr(m, d, [&] { return spread * n(rng); });
  g.variances = Eigen::MatrixXd::NullaryExpr(m, d, [&] { return u(rng); });
  g.variance_floor = Eigen::VectorXd::Constant(d, 1e-3);
  return g;
}

inline Eigen::MatrixXd sample_gmm(const GmmModel &g, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::discrete_distribution<int> pick(g.weights.data(),
                                       g.weights.data() + g.weights.size());
  Eigen::MatrixXd x(n, g.dim());
  for (int t = 0; t < n; ++t) {
    const int k = pick(rng);
    for (int d = 0; d < g.dim(); ++d)
      x(t, d) = g.means(k, d) + std::sqrt(g.variances(k, d)) * z(rng);
  }
  return x;
}

/// Direct mixture sum in long double.
inline long double loglik_oracle(const GmmModel &g, const Eigen::VectorXd &x) {
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  long double sum = 0.0L;
  for (int k = 0; k < g.num_components(); ++k) {
    long double p = g.weights(k);
    for (int d = 0; d < g.dim(); ++d) {
      const long double v = g.variances(k, d);
      const long double diff = static_cast<long double>(x(d)) - g.means(k, d);
      p *= std::exp(-0.5L * diff * diff / v) / std::sqrt(two_pi * v);
    }
    sum += p;
  }
  return std::log(sum);
}

/// Per-component log densities combined by log-sum-exp in long double.
inline long double loglik_oracle_lse(const GmmModel &g,
                                     const Eigen::VectorXd &x) {
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  std::vector<long double> terms;
  for (int k = 0; k < g.num_components(); ++k) {
    long double l = std::log(static_cast<long double>(g.weights(k)));
    for (int d = 0; d < g.dim(); ++d) {
      const long double v = g.variances(k, d);
      const long double diff = static_cast<long double>(x(d)) - g.means(k, d);
      l += -0.5L * diff * diff / v - 0.5L * std::log(two_pi * v);
    }
    terms.push_back(l);
  }
  const long double mx = *std::max_element(terms.begin(), terms.end());
  long double s = 0.0L;
  for (long double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

}  // namespace voicepd::test

#endif  // VOICEPD_TESTS_GMM_REFERENCE_H_
