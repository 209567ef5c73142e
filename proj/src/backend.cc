// src/backend.cc

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

#include "voicepd/backend.h"

#include <spdlog/spdlog.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace voicepd {

double cosine_score(const Eigen::VectorXd &x, const Eigen::VectorXd &c) {
  if (x.size() != c.size())
    throw ConfigError("cosine_score: dimension mismatch");
  const double nx = x.norm(), nc = c.norm();
  if (!(nx > 0.0) || !(nc > 0.0))
    throw DataError("cosine_score: zero vector");
  return std::clamp(x.dot(c) / (nx * nc), -1.0, 1.0);
}

ClassCentroids compute_centroids(std::span<const XVector> xs,
                                 std::span<const ClassLabel> labels) {
  if (xs.size() != labels.size())
    throw ConfigError("compute_centroids: label count mismatch");
  if (xs.empty()) throw DataError("compute_centroids: no x-vectors");
  ClassCentroids c;
  const Eigen::Index d = xs.front().values.size();
  c.pd = Eigen::VectorXd::Zero(d);
  c.hc = Eigen::VectorXd::Zero(d);
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].values.size() != d)
      throw ConfigError("compute_centroids: inconsistent dimensions");
    if (labels[i] == ClassLabel::kPD) {
      c.pd += xs[i].values;
      ++c.count_pd;
    } else {
      c.hc += xs[i].values;
      ++c.count_hc;
    }
  }
  if (c.count_pd == 0 || c.count_hc == 0)
    throw DataError("compute_centroids: both classes need x-vectors");
  c.pd /= c.count_pd;
  c.hc /= c.count_hc;
  return c;
}

namespace {

struct Grouping {
  std::vector<int> ids;                  // sorted distinct labels
  std::vector<std::vector<int>> members; // row indices per id
};

Grouping group_labels(std::span<const int> labels) {
  std::map<int, std::vector<int>> m;
  for (size_t i = 0; i < labels.size(); ++i)
    m[labels[i]].push_back(static_cast<int>(i));
  Grouping g;
  for (auto &[id, rows] : m) {
    g.ids.push_back(id);
    g.members.push_back(std::move(rows));
  }
  return g;
}

void flip_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12 * scale) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace

LdaProjection lda_fit(const Eigen::MatrixXd &xs, std::span<const int> labels,
                      const LdaOptions &opts) {
  if (static_cast<size_t>(xs.rows()) != labels.size())
    throw ConfigError("lda_fit: label count mismatch");
  if (opts.d_out < 1) throw ConfigError("lda_fit: d_out must be >= 1");
  const Grouping g = group_labels(labels);
  const int n_classes = static_cast<int>(g.ids.size());
  if (n_classes < 2) throw DataError("lda_fit: need at least 2 classes");
  for (const auto &rows : g.members)
    if (rows.size() < 2)
      throw DataError("lda_fit: every class needs at least 2 samples");
  const Eigen::Index d = xs.cols();
  const double n = static_cast<double>(xs.rows());

  LdaProjection p;
  p.global_mean = xs.colwise().mean().transpose();
  p.class_ids = g.ids;
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd means(n_classes, d);
  for (int c = 0; c < n_classes; ++c) {
    const auto &rows = g.members[c];
    Eigen::MatrixXd xc(rows.size(), d);
    for (size_t i = 0; i < rows.size(); ++i) xc.row(i) = xs.row(rows[i]);
    const Eigen::RowVectorXd mc = xc.colwise().mean();
    means.row(c) = mc;
    const Eigen::MatrixXd centered = xc.rowwise() - mc;
    sw.noalias() += centered.transpose() * centered;
    const Eigen::VectorXd dm = mc.transpose() - p.global_mean;
    sb.noalias() += static_cast<double>(rows.size()) * dm * dm.transpose();
  }
  sw /= n;
  sb /= n;

  const double ridge = opts.ridge.value_or(1e-4 * sw.trace() / d);
  if (ridge < 0.0) throw ConfigError("lda_fit: ridge must be >= 0");
  Eigen::MatrixXd sw_reg = sw;
  sw_reg.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(sw_reg);
  if (llt.info() != Eigen::Success ||
      llt.matrixL().toDenseMatrix().diagonal().minCoeff() <=
          1e-12 * std::sqrt(std::max(sw_reg.diagonal().maxCoeff(), 1e-300)))
    throw NumericalError(
        "lda_fit: within-class scatter is singular; use a positive ridge");

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(
      sb, sw_reg, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success)
    throw NumericalError("lda_fit: eigen-decomposition failed");

  int d_out = std::min<int>(opts.d_out, static_cast<int>(d));
  if (!opts.allow_beyond_rank) d_out = std::min(d_out, n_classes - 1);
  p.basis.resize(d_out, d);
  p.eigenvalues.resize(d_out);
  // Eigenvalues come out ascending.
  for (int k = 0; k < d_out; ++k) {
    const Eigen::Index col = d - 1 - k;
    Eigen::VectorXd v = es.eigenvectors().col(col);
    flip_sign(v);
    p.basis.row(k) = v.transpose();
    p.eigenvalues[k] = es.eigenvalues()[col];
  }
  p.class_means.resize(n_classes, d_out);
  for (int c = 0; c < n_classes; ++c)
    p.class_means.row(c) =
        (p.basis * (means.row(c).transpose() - p.global_mean)).transpose();
  return p;
}

Eigen::VectorXd lda_project(const LdaProjection &p, const Eigen::VectorXd &x) {
  if (x.size() != p.d_in())
    throw ConfigError("lda_project: dimension " + std::to_string(x.size()) +
                      " != " + std::to_string(p.d_in()));
  return p.basis * (x - p.global_mean);
}

Eigen::MatrixXd PldaModel::within_cov() const {
  Eigen::MatrixXd w = G * G.transpose();
  w.diagonal() += sigma;
  return w;
}

void PldaModel::validate() const {
  const Eigen::Index d = mu.size();
  if (d < 1) throw ConfigError("plda: empty model");
  if (F.rows() != d || G.rows() != d || sigma.size() != d)
    throw ConfigError("plda: inconsistent shapes");
  if (!mu.allFinite() || !F.allFinite() || !G.allFinite() ||
      !sigma.allFinite())
    throw ConfigError("plda: non-finite parameters");
  if ((sigma.array() <= 0.0).any())
    throw ConfigError("plda: noise variances must be positive");
}

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Cholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double logdet = 0.0;
};

Cholesky factor(const Eigen::MatrixXd &m, const char *what) {
  Cholesky c;
  c.llt.compute(m);
  if (c.llt.info() != Eigen::Success)
    throw ConfigError(std::string("plda: ") + what +
                      " covariance is not positive definite");
  const Eigen::VectorXd diag = c.llt.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any())
    throw ConfigError(std::string("plda: ") + what +
                      " covariance is not positive definite");
  c.logdet = 2.0 * diag.array().log().sum();
  return c;
}

}  // namespace

double plda_marginal_loglik(const PldaModel &m, const Eigen::MatrixXd &xs,
                            std::span<const int> labels) {
  m.validate();
  if (static_cast<size_t>(xs.rows()) != labels.size())
    throw ConfigError("plda_marginal_loglik: label count mismatch");
  const Eigen::Index d = m.dim();
  const Eigen::MatrixXd w = m.within_cov();
  const Eigen::MatrixXd b = m.between_cov();
  const Cholesky wc = factor(w, "within-class");
  const Grouping g = group_labels(labels);
  std::map<size_t, Cholesky> by_size;
  double ll = 0.0;
  for (const auto &rows : g.members) {
    const size_t n = rows.size();
    auto it = by_size.find(n);
    if (it == by_size.end())
      it = by_size.emplace(n, factor(w + static_cast<double>(n) * b, "total"))
               .first;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    double quad = 0.0;
    for (int r : rows) {
      const Eigen::VectorXd x = xs.row(r).transpose() - m.mu;
      mean += x;
      quad += x.dot(wc.llt.solve(x));
    }
    mean /= static_cast<double>(n);
    const double nd = static_cast<double>(n);
    quad -= nd * mean.dot(wc.llt.solve(mean));
    quad += nd * mean.dot(it->second.llt.solve(mean));
    ll -= 0.5 * (nd * d * kLog2Pi + (nd - 1.0) * wc.logdet +
                 it->second.logdet + quad);
  }
  return ll;
}

PldaFitResult plda_fit(const Eigen::MatrixXd &xs, std::span<const int> labels,
                       const PldaOptions &opts) {
  if (static_cast<size_t>(xs.rows()) != labels.size())
    throw ConfigError("plda_fit: label count mismatch");
  const Grouping g = group_labels(labels);
  if (g.ids.size() < 2) throw DataError("plda_fit: need at least 2 classes");
  if (!xs.allFinite()) throw DataError("plda_fit: non-finite input");
  const int d = static_cast<int>(xs.cols());
  const int r_b = opts.r_b;
  const int r_w = opts.r_w.value_or(std::min(10, d - 1));
  if (r_b < 1 || r_b > d || r_w < 0 || r_w > d)
    throw ConfigError("plda_fit: invalid factor ranks");
  const double n = static_cast<double>(xs.rows());

  PldaModel m;
  m.mu = xs.colwise().mean().transpose();
  const Eigen::MatrixXd xt = xs.rowwise() - m.mu.transpose();
  const double total_var = xt.squaredNorm() / (n * d);
  if (!(total_var > 0.0)) throw DataError("plda_fit: data has no variance");
  const double floor = opts.sigma_floor * total_var;

  // Initialization from the class-mean and within-class scatters.
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  for (const auto &rows : g.members) {
    Eigen::VectorXd mc = Eigen::VectorXd::Zero(d);
    for (int r : rows) mc += xt.row(r).transpose();
    mc /= static_cast<double>(rows.size());
    sb.noalias() += static_cast<double>(rows.size()) * mc * mc.transpose();
    for (int r : rows) {
      const Eigen::VectorXd e = xt.row(r).transpose() - mc;
      sw.noalias() += e * e.transpose();
    }
  }
  sb /= n;
  sw /= n;
  const double small = 1e-6 * total_var;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(sb), ew(sw);
  m.F.resize(d, r_b);
  for (int k = 0; k < r_b; ++k)
    m.F.col(k) = eb.eigenvectors().col(d - 1 - k) *
                 std::sqrt(std::max(eb.eigenvalues()[d - 1 - k], small));
  double rest = 0.0;
  for (int k = 0; k < d - r_w; ++k) rest += std::max(ew.eigenvalues()[k], 0.0);
  rest = d > r_w ? rest / (d - r_w) : 0.0;
  m.G.resize(d, r_w);
  for (int k = 0; k < r_w; ++k)
    m.G.col(k) = ew.eigenvectors().col(d - 1 - k) *
                 std::sqrt(std::max(ew.eigenvalues()[d - 1 - k] - rest, small));
  m.sigma = (sw.diagonal() - (m.G * m.G.transpose()).diagonal())
                .cwiseMax(floor);

  const Eigen::VectorXd sxx = xt.colwise().squaredNorm().transpose();
  std::vector<int> class_of(xs.rows());
  std::vector<Eigen::VectorXd> sums;
  for (size_t c = 0; c < g.members.size(); ++c) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
    for (int r : g.members[c]) {
      class_of[r] = static_cast<int>(c);
      s += xt.row(r).transpose();
    }
    sums.push_back(std::move(s));
  }

  PldaFitResult result;
  const int r = r_b + r_w;
  auto record = [&](int it) {
    const double ll = plda_marginal_loglik(m, xs, labels);
    if (!std::isfinite(ll))
      throw NumericalError("plda_fit: non-finite log-likelihood at iteration " +
                           std::to_string(it));
    result.loglik_trace.push_back(ll);
    return ll;
  };
  bool converged = false;
  for (int it = 0; it < opts.iters; ++it) {
    const double ll = record(it);
    if (it > 0 && (ll - result.loglik_trace[it - 1]) / n < opts.tol) {
      converged = true;
      break;
    }
    // E-step.
    const Eigen::VectorXd sigma_inv = m.sigma.cwiseInverse();
    const Eigen::MatrixXd gs = m.G.transpose() * sigma_inv.asDiagonal();
    Eigen::MatrixXd mw = Eigen::MatrixXd::Identity(r_w, r_w) + gs * m.G;
    const Eigen::MatrixXd mw_inv =
        mw.ldlt().solve(Eigen::MatrixXd::Identity(r_w, r_w));
    const Eigen::MatrixXd kw = mw_inv * gs;  // r_w x d
    const Eigen::LLT<Eigen::MatrixXd> wllt(m.within_cov());
    const Eigen::MatrixXd wf = wllt.solve(m.F);          // W^-1 F
    const Eigen::MatrixXd ftwf = m.F.transpose() * wf;   // F' W^-1 F
    const Eigen::MatrixXd kwf = kw * m.F;                // r_w x r_b

    Eigen::MatrixXd ez(xs.rows(), r);
    Eigen::MatrixXd cov_sum = Eigen::MatrixXd::Zero(r, r);
    std::map<size_t, Eigen::MatrixXd> ch_by_size;
    std::vector<Eigen::VectorXd> eh(g.members.size());
    for (size_t c = 0; c < g.members.size(); ++c) {
      const size_t nc = g.members[c].size();
      auto itc = ch_by_size.find(nc);
      if (itc == ch_by_size.end()) {
        Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(r_b, r_b) +
                               static_cast<double>(nc) * ftwf;
        itc = ch_by_size
                  .emplace(nc, prec.ldlt().solve(
                                   Eigen::MatrixXd::Identity(r_b, r_b)))
                  .first;
      }
      const Eigen::MatrixXd &ch = itc->second;
      eh[c] = ch * (wf.transpose() * sums[c]);
      Eigen::MatrixXd cov(r, r);
      const Eigen::MatrixXd chw = -kwf * ch;  // Cov(w, h)
      cov.topLeftCorner(r_b, r_b) = ch;
      cov.bottomLeftCorner(r_w, r_b) = chw;
      cov.topRightCorner(r_b, r_w) = chw.transpose();
      cov.bottomRightCorner(r_w, r_w) = mw_inv + kwf * ch * kwf.transpose();
      cov_sum += static_cast<double>(nc) * cov;
    }
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const Eigen::VectorXd &h = eh[class_of[i]];
      ez.row(i).head(r_b) = h.transpose();
      if (r_w > 0)
        ez.row(i).tail(r_w) =
            (kw * (xt.row(i).transpose() - m.F * h)).transpose();
    }
    // M-step.
    const Eigen::MatrixXd zz = ez.transpose() * ez + cov_sum;
    const Eigen::MatrixXd rz = xt.transpose() * ez;  // d x r
    const Eigen::MatrixXd bmat = zz.ldlt().solve(rz.transpose()).transpose();
    m.F = bmat.leftCols(r_b);
    m.G = bmat.rightCols(r_w);
    m.sigma = ((sxx - bmat.cwiseProduct(rz).rowwise().sum()) / n)
                  .cwiseMax(floor);
  }
  if (!converged) record(opts.iters);
  result.model = std::move(m);
  return result;
}

PldaScorer::PldaScorer(const PldaModel &m) {
  m.validate();
  const Eigen::Index d = m.dim();
  const Eigen::MatrixXd b = m.between_cov();
  const Eigen::MatrixXd t = b + m.within_cov();
  const Cholesky tc = factor(t, "total");
  Eigen::MatrixXd same(2 * d, 2 * d);
  same << t, b, b, t;
  const Cholesky sc = factor(same, "same-identity");
  const Eigen::MatrixXd inv =
      sc.llt.solve(Eigen::MatrixXd::Identity(2 * d, 2 * d));
  const Eigen::MatrixXd t_inv = tc.llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd a11 =
      0.5 * (inv.topLeftCorner(d, d) + inv.bottomRightCorner(d, d));
  const Eigen::MatrixXd a12 = inv.topRightCorner(d, d);
  mu_ = m.mu;
  q_ = t_inv - a11;
  q_ = 0.5 * (q_ + q_.transpose()).eval();
  p_ = -0.5 * (a12 + a12.transpose());
  constant_ = tc.logdet - 0.5 * sc.logdet;
}

double PldaScorer::score(const Eigen::VectorXd &x1,
                         const Eigen::VectorXd &x2) const {
  if (x1.size() != mu_.size() || x2.size() != mu_.size())
    throw ConfigError("plda_score: dimension mismatch");
  const Eigen::VectorXd a = x1 - mu_, b = x2 - mu_;
  const double qa = a.dot(q_ * a), qb = b.dot(q_ * b);
  const double cross = 0.5 * (a.dot(p_ * b) + b.dot(p_ * a));
  return 0.5 * (qa + qb) + cross + constant_;
}

double plda_score(const PldaModel &m, const Eigen::VectorXd &x1,
                  const Eigen::VectorXd &x2) {
  return PldaScorer(m).score(x1, x2);
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kCosine:
      return "cos";
    case BackendKind::kLdaCosine:
      return "lda-cos";
    case BackendKind::kPlda:
      return "plda";
  }
  return "?";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "cos") return BackendKind::kCosine;
  if (s == "lda-cos") return BackendKind::kLdaCosine;
  if (s == "plda") return BackendKind::kPlda;
  throw ConfigError("unknown backend '" + std::string(s) +
                    "' (expected cos, lda-cos or plda)");
}

namespace {

// Projected centroids and the PLDA scorer, built once per scoring call.
struct PreparedBackend {
  const Backend &b;
  Eigen::VectorXd pd, hc;
  std::optional<PldaScorer> scorer;

  explicit PreparedBackend(const Backend &backend) : b(backend) {
    if (b.centroids.pd.size() == 0 || b.centroids.hc.size() == 0)
      throw ConfigError("backend is not trained");
    if (b.kind == BackendKind::kCosine) {
      pd = b.centroids.pd;
      hc = b.centroids.hc;
      return;
    }
    if (!b.lda) throw ConfigError("backend is missing its LDA projection");
    pd = lda_project(*b.lda, b.centroids.pd);
    hc = lda_project(*b.lda, b.centroids.hc);
    if (b.kind == BackendKind::kPlda) {
      if (!b.plda) throw ConfigError("backend is missing its PLDA model");
      scorer.emplace(*b.plda);
    }
  }

  double difference(const Eigen::VectorXd &x) const {
    switch (b.kind) {
      case BackendKind::kCosine:
        return cosine_score(x, pd) - cosine_score(x, hc);
      case BackendKind::kLdaCosine: {
        const Eigen::VectorXd y = lda_project(*b.lda, x);
        return cosine_score(y, pd) - cosine_score(y, hc);
      }
      case BackendKind::kPlda: {
        const Eigen::VectorXd y = lda_project(*b.lda, x);
        return scorer->score(y, pd) - scorer->score(y, hc);
      }
    }
    return 0.0;
  }
};

}  // namespace

double Backend::similarity_difference(const Eigen::VectorXd &x) const {
  return PreparedBackend(*this).difference(x);
}

Backend train_backend(std::span<const XVector> xs,
                      std::span<const ClassLabel> labels,
                      const BackendOptions &opts) {
  Backend b;
  b.kind = opts.kind;
  b.centroids = compute_centroids(xs, labels);
  if (opts.kind == BackendKind::kCosine) return b;

  const Eigen::Index d = b.centroids.pd.size();
  std::vector<int> lda_rows, lda_labels;
  if (opts.lda_labels == LdaLabelMode::kSpeaker) {
    std::map<std::string, std::vector<int>> by_speaker;
    for (size_t i = 0; i < xs.size(); ++i)
      by_speaker[xs[i].subject_id].push_back(static_cast<int>(i));
    int id = 0, dropped = 0;
    for (const auto &[spk, rows] : by_speaker) {
      if (rows.size() < 2) {
        ++dropped;
        continue;
      }
      for (int r : rows) {
        lda_rows.push_back(r);
        lda_labels.push_back(id);
      }
      ++id;
    }
    if (dropped > 0)
      spdlog::debug("LDA: {} speakers with a single x-vector left out",
                    dropped);
  } else {
    for (size_t i = 0; i < xs.size(); ++i) {
      lda_rows.push_back(static_cast<int>(i));
      lda_labels.push_back(static_cast<int>(labels[i]));
    }
  }
  Eigen::MatrixXd lx(lda_rows.size(), d);
  for (size_t i = 0; i < lda_rows.size(); ++i)
    lx.row(i) = xs[lda_rows[i]].values.transpose();
  b.lda = lda_fit(lx, lda_labels, opts.lda);

  if (opts.kind == BackendKind::kPlda) {
    Eigen::MatrixXd y(xs.size(), b.lda->d_out());
    std::vector<int> cls(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
      y.row(i) = lda_project(*b.lda, xs[i].values).transpose();
      cls[i] = static_cast<int>(labels[i]);
    }
    b.plda = plda_fit(y, cls, opts.plda).model;
  }
  return b;
}

double symmetric_mean_sigmoid(std::span<const double> z) {
  if (z.empty()) throw DataError("symmetric_mean_sigmoid: empty input");
  // sigmoid(z) - 0.5 is exactly odd in z; positive and negative parts are
  // summed separately in sorted order.
  std::vector<double> pos, neg;
  for (double v : z) {
    const double d = sigmoid(v) - 0.5;
    if (d >= 0.0)
      pos.push_back(d);
    else
      neg.push_back(-d);
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  double sp = 0.0, sn = 0.0;
  for (double v : pos) sp += v;
  for (double v : neg) sn += v;
  const double mean = (sp - sn) / static_cast<double>(z.size());
  if (mean >= 0.0) return 0.5 + mean;
  return 1.0 - (0.5 - mean);
}

TrialScore classify_subject(std::span<const XVector> xvecs,
                            const Backend &backend, double sigmoid_slope,
                            const std::string &subject_id) {
  if (xvecs.empty()) throw DataError("classify_subject: no x-vectors");
  const PreparedBackend prepared(backend);
  TrialScore t;
  t.subject_id = subject_id;
  std::vector<double> z;
  z.reserve(xvecs.size());
  for (const auto &xv : xvecs) {
    z.push_back(sigmoid_slope * prepared.difference(xv.values));
    t.per_xvector.push_back(sigmoid(z.back()));
  }
  t.final_score = symmetric_mean_sigmoid(z);
  return t;
}

}  // namespace voicepd
