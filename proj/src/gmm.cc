// src/gmm.cc

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

#include "voicepd/gmm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace voicepd {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Minimum soft count for a component to be re-estimated.
constexpr double kMinOccupancy = 1e-10;

}  // namespace

void GmmModel::validate(double weight_tol) const {
  const int m = num_components(), d = dim();
  if (m < 1 || d < 1) throw ConfigError("GMM must have M >= 1 and D >= 1");
  if (means.rows() != m || variances.rows() != m || variances.cols() != d ||
      variance_floor.size() != d)
    throw ConfigError("GMM parameter shapes are inconsistent");
  if (!weights.allFinite() || !means.allFinite() || !variances.allFinite())
    throw ConfigError("GMM parameters must be finite");
  if ((weights.array() < 0.0).any())
    throw ConfigError("GMM weights must be non-negative");
  if (std::abs(weights.sum() - 1.0) > weight_tol)
    throw ConfigError("GMM weights must sum to 1");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      if (!(variances(i, j) > 0.0) ||
          variances(i, j) < variance_floor[j] * (1.0 - 1e-6))
        throw ConfigError("GMM variance below floor");
}

int default_num_components(bool telephone) { return telephone ? 50 : 20; }

Eigen::VectorXd default_variance_floor(const Eigen::MatrixXd &frames) {
  const Eigen::RowVectorXd mean = frames.colwise().mean();
  Eigen::VectorXd var =
      ((frames.rowwise() - mean).array().square().colwise().sum() /
       static_cast<double>(frames.rows()))
          .transpose();
  Eigen::VectorXd floor = 1e-3 * var;
  for (Eigen::Index j = 0; j < floor.size(); ++j)
    floor[j] = std::max(floor[j], 1e-10);
  return floor;
}

namespace {

// Squared Euclidean distances, N x K.
Eigen::MatrixXd sq_distances(const Eigen::MatrixXd &x,
                             const Eigen::MatrixXd &centers) {
  Eigen::MatrixXd d = -2.0 * x * centers.transpose();
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

GmmModel kmeans_init(const Eigen::MatrixXd &frames, int m, uint64_t seed) {
  const Eigen::Index n = frames.rows(), d = frames.cols();
  if (m < 1) throw ConfigError("kmeans_init: m must be >= 1");
  if (n < 10 * static_cast<Eigen::Index>(m))
    throw DataError("kmeans_init: too few frames (" + std::to_string(n) +
                    " < 10 * " + std::to_string(m) + ")");
  if (!frames.allFinite()) throw DataError("kmeans_init: non-finite frames");

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(m, d);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = frames.row(first(rng));
  Eigen::VectorXd min_d = (frames.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < m; ++k) {
    const double total = min_d.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += min_d[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.row(k) = frames.row(pick);
    min_d = min_d.cwiseMin(
        (frames.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> assign(n, 0);
  auto assign_all = [&]() {
    const Eigen::MatrixXd dist = sq_distances(frames, centers);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      dist.row(i).minCoeff(&best);
      assign[i] = static_cast<int>(best);
    }
  };
  constexpr int kLloydIterations = 10;
  for (int it = 0; it < kLloydIterations; ++it) {
    assign_all();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += frames.row(i);
      counts[assign[i]] += 1.0;
    }
    for (int k = 0; k < m; ++k)
      if (counts[k] > 0) centers.row(k) = sums.row(k) / counts[k];
  }
  assign_all();

  GmmModel model;
  model.variance_floor = default_variance_floor(frames);
  const Eigen::RowVectorXd global_mean = frames.colwise().mean();
  const Eigen::RowVectorXd global_var =
      (frames.rowwise() - global_mean).array().square().colwise().mean();
  model.weights.resize(m);
  model.means.resize(m, d);
  model.variances.resize(m, d);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums.row(assign[i]) += frames.row(i);
    counts[assign[i]] += 1.0;
  }
  for (int k = 0; k < m; ++k)
    model.means.row(k) = counts[k] > 0 ? Eigen::RowVectorXd(sums.row(k) / counts[k])
                                       : Eigen::RowVectorXd(centers.row(k));
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, d);
  for (Eigen::Index i = 0; i < n; ++i)
    sq.row(assign[i]) +=
        (frames.row(i) - model.means.row(assign[i])).array().square().matrix();
  for (int k = 0; k < m; ++k) {
    if (counts[k] >= 2)
      model.variances.row(k) = sq.row(k) / counts[k];
    else
      model.variances.row(k) = global_var;
    for (Eigen::Index j = 0; j < d; ++j)
      model.variances(k, j) =
          std::max(model.variances(k, j), model.variance_floor[j]);
  }
  const Eigen::VectorXd c = counts.cwiseMax(1.0);
  model.weights = c / c.sum();
  return model;
}

namespace {

struct EStepStats {
  double loglik = 0.0;
  Eigen::VectorXd occupancy;  // M
  Eigen::MatrixXd first;      // M x D
  Eigen::MatrixXd second;     // M x D
};

// N x M matrix of log(w_m) + log N(x_n; mu_m, var_m).
Eigen::MatrixXd component_logliks(const GmmModel &model,
                                  const Eigen::MatrixXd &frames,
                                  const Eigen::MatrixXd &frames_sq) {
  const Eigen::MatrixXd inv_var = model.variances.cwiseInverse();
  const Eigen::MatrixXd mean_iv = model.means.cwiseProduct(inv_var);
  Eigen::VectorXd gconst(model.num_components());
  for (int k = 0; k < model.num_components(); ++k) {
    gconst[k] = std::log(model.weights[k]) -
                0.5 * (model.dim() * kLog2Pi +
                       model.variances.row(k).array().log().sum() +
                       model.means.row(k).dot(mean_iv.row(k)));
  }
  Eigen::MatrixXd l = frames * mean_iv.transpose();
  l.noalias() -= 0.5 * frames_sq * inv_var.transpose();
  l.rowwise() += gconst.transpose();
  return l;
}

Eigen::VectorXd rowwise_logsumexp(const Eigen::MatrixXd &l) {
  Eigen::VectorXd out(l.rows());
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double mx = l.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out[i] = mx;
      continue;
    }
    out[i] = mx + std::log((l.row(i).array() - mx).exp().sum());
  }
  return out;
}

EStepStats estep(const GmmModel &model, const Eigen::MatrixXd &frames,
                 const Eigen::MatrixXd &frames_sq) {
  Eigen::MatrixXd l = component_logliks(model, frames, frames_sq);
  const Eigen::VectorXd ll = rowwise_logsumexp(l);
  EStepStats s;
  s.loglik = ll.sum();
  l.colwise() -= ll;
  const Eigen::MatrixXd resp = l.array().exp().matrix();
  s.occupancy = resp.colwise().sum().transpose();
  s.first = resp.transpose() * frames;
  s.second = resp.transpose() * frames_sq;
  return s;
}

GmmModel mstep(const GmmModel &prev, const EStepStats &s, double n) {
  GmmModel next = prev;
  for (int k = 0; k < prev.num_components(); ++k) {
    const double occ = s.occupancy[k];
    next.weights[k] = occ / n;
    if (occ < kMinOccupancy) continue;
    next.means.row(k) = s.first.row(k) / occ;
    for (int j = 0; j < prev.dim(); ++j) {
      const double mu = next.means(k, j);
      const double var = s.second(k, j) / occ - mu * mu;
      next.variances(k, j) = std::max(var, prev.variance_floor[j]);
    }
  }
  next.weights /= next.weights.sum();
  return next;
}

}  // namespace

EmResult em_fit(const GmmModel &init, const Eigen::MatrixXd &frames,
                const EmOptions &opts) {
  init.validate(1e-6);
  if (frames.cols() != init.dim())
    throw ConfigError("em_fit: frame dimension " +
                      std::to_string(frames.cols()) + " != model dimension " +
                      std::to_string(init.dim()));
  if (frames.rows() == 0) throw DataError("em_fit: no frames");
  const double n = static_cast<double>(frames.rows());
  const Eigen::MatrixXd frames_sq = frames.array().square().matrix();

  EmResult result;
  GmmModel model = init;
  auto check = [&](double ll, int it) {
    if (!std::isfinite(ll)) {
      std::ostringstream msg;
      msg << "em_fit: non-finite log-likelihood at iteration " << it
          << " (min variance " << model.variances.minCoeff()
          << ", min weight " << model.weights.minCoeff() << ")";
      throw NumericalError(msg.str());
    }
  };
  for (int it = 0; it < opts.max_iter; ++it) {
    const EStepStats stats = estep(model, frames, frames_sq);
    check(stats.loglik, it);
    result.loglik_trace.push_back(stats.loglik);
    if (it > 0) {
      const double gain =
          (stats.loglik - result.loglik_trace[it - 1]) / n;
      if (gain < opts.tol) {
        result.converged = true;
        break;
      }
    }
    model = mstep(model, stats, n);
    ++result.iterations;
  }
  if (!result.converged) {
    const EStepStats stats = estep(model, frames, frames_sq);
    check(stats.loglik, result.iterations);
    result.loglik_trace.push_back(stats.loglik);
  }
  result.model = std::move(model);
  return result;
}

double frame_loglik(const GmmModel &model, std::span<const double> frame) {
  if (static_cast<int>(frame.size()) != model.dim())
    throw ConfigError("frame_loglik: dimension mismatch");
  const int m = model.num_components();
  std::vector<double> terms(m);
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    double acc = std::log(model.weights[k]);
    for (int j = 0; j < model.dim(); ++j) {
      const double var = model.variances(k, j);
      const double diff = frame[j] - model.means(k, j);
      acc -= 0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
    }
    terms[k] = acc;
    mx = std::max(mx, acc);
  }
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - mx);
  return mx + std::log(sum);
}

Eigen::VectorXd frame_logliks(const GmmModel &model,
                              const Eigen::MatrixXd &frames) {
  if (frames.cols() != model.dim())
    throw ConfigError("frame_logliks: dimension mismatch");
  const Eigen::MatrixXd sq = frames.array().square().matrix();
  return rowwise_logsumexp(component_logliks(model, frames, sq));
}

SubjectScore score_subject(const FeatureMatrix &fm, const GmmModel &model_pd,
                           const GmmModel &model_hc, double sigmoid_slope,
                           const std::string &subject_id) {
  if (model_pd.dim() != model_hc.dim())
    throw ConfigError("score_subject: models differ in feature dimension");
  if (fm.num_frames() == 0)
    throw DataError("score_subject: empty feature matrix");
  if (fm.dim() != model_pd.dim())
    throw ConfigError("score_subject: feature dimension mismatch");
  SubjectScore s;
  s.subject_id = subject_id;
  s.n_frames = fm.num_frames();
  s.llr = frame_logliks(model_pd, fm.frames).mean() -
          frame_logliks(model_hc, fm.frames).mean();
  s.score = sigmoid(sigmoid_slope * s.llr);
  return s;
}

GmmModel train_gmm(const Eigen::MatrixXd &frames, int m, ClassLabel label,
                   uint64_t seed, const EmOptions &opts) {
  GmmModel init = kmeans_init(frames, m, seed);
  init.label = label;
  GmmModel model = em_fit(init, frames, opts).model;
  model.label = label;
  return model;
}

Eigen::MatrixXd pool_frames(std::span<const FeatureMatrix> mats) {
  Eigen::Index rows = 0, cols = -1;
  for (const auto &m : mats) {
    rows += m.frames.rows();
    if (cols < 0) cols = m.frames.cols();
    if (m.frames.cols() != cols)
      throw ConfigError("pool_frames: inconsistent feature dimensions");
  }
  Eigen::MatrixXd out(rows, std::max<Eigen::Index>(cols, 0));
  Eigen::Index r = 0;
  for (const auto &m : mats) {
    out.middleRows(r, m.frames.rows()) = m.frames;
    r += m.frames.rows();
  }
  return out;
}

}  // namespace voicepd
