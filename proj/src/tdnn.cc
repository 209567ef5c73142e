// src/tdnn.cc

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

#include "voicepd/tdnn.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "voicepd/common.h"

namespace voicepd {

namespace {

// Floor on the pooled variance before the square root.
constexpr double kVarianceFloor = 1e-10;

constexpr int kNumFrameLayers = 5;

TdnnConfig make_config(int input_dim, int n_classes, int width, int last_width,
                       int embed_dim) {
  TdnnConfig cfg;
  cfg.input_dim = input_dim;
  cfg.n_classes = n_classes;
  cfg.frame_layers = {{{-2, -1, 0, 1, 2}, width},
                      {{-2, 0, 2}, width},
                      {{-3, 0, 3}, width},
                      {{0}, width},
                      {{0}, last_width}};
  cfg.embed_dim = embed_dim;
  cfg.seg7_dim = embed_dim;
  return cfg;
}

Eigen::Index wrap(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index r = i % n;
  return r < 0 ? r + n : r;
}

// Row t of block k is h.row((t + offsets[k]) mod T).
Eigen::MatrixXd splice(const Eigen::MatrixXd &h,
                       const std::vector<int> &offsets) {
  const Eigen::Index t = h.rows(), c = h.cols();
  Eigen::MatrixXd s(t, c * static_cast<Eigen::Index>(offsets.size()));
  for (size_t k = 0; k < offsets.size(); ++k) {
    const Eigen::Index r = wrap(offsets[k], t);
    auto blk = s.middleCols(static_cast<Eigen::Index>(k) * c, c);
    blk.topRows(t - r) = h.bottomRows(t - r);
    if (r > 0) blk.bottomRows(r) = h.topRows(r);
  }
  return s;
}

// Adjoint of splice(): accumulates ds back onto the frames it was read from.
void unsplice_add(const Eigen::MatrixXd &ds, const std::vector<int> &offsets,
                  Eigen::MatrixXd *dh) {
  const Eigen::Index t = dh->rows(), c = dh->cols();
  for (size_t k = 0; k < offsets.size(); ++k) {
    const Eigen::Index r = wrap(offsets[k], t);
    auto blk = ds.middleCols(static_cast<Eigen::Index>(k) * c, c);
    dh->bottomRows(t - r) += blk.topRows(t - r);
    if (r > 0) dh->topRows(r) += blk.bottomRows(r);
  }
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> input;  // spliced input of each frame layer
  std::vector<Eigen::MatrixXd> pre;    // pre-activation of each frame layer
  Eigen::MatrixXd centered;            // last frame layer output minus mean
  Eigen::VectorXd var, sd, pooled;
  Eigen::VectorXd x, a6, z7, a7, logits;
};

void check_input(const TdnnWeights &w, const Eigen::MatrixXd &frames) {
  if (frames.cols() != w.cfg.input_dim)
    throw ConfigError("tdnn: feature dimension " +
                      std::to_string(frames.cols()) + " != " +
                      std::to_string(w.cfg.input_dim));
  if (frames.rows() < w.cfg.receptive_field())
    throw DataError("tdnn: too few frames (" + std::to_string(frames.rows()) +
                    " < " + std::to_string(w.cfg.receptive_field()) + ")");
}

void forward(const TdnnWeights &w, const Eigen::MatrixXd &frames,
             ForwardCache *c) {
  check_input(w, frames);
  c->input.resize(kNumFrameLayers);
  c->pre.resize(kNumFrameLayers);
  Eigen::MatrixXd h = frames;
  for (int l = 0; l < kNumFrameLayers; ++l) {
    const AffineLayer &layer = w.layers[l];
    c->input[l] = splice(h, w.cfg.frame_layers[l].offsets);
    c->pre[l].noalias() = c->input[l] * layer.w.transpose();
    c->pre[l].rowwise() += layer.b.transpose();
    h = c->pre[l].cwiseMax(0.0);
  }
  const Eigen::RowVectorXd mean = h.colwise().mean();
  c->centered = h.rowwise() - mean;
  c->var = c->centered.array().square().colwise().mean().transpose();
  c->sd = c->var.cwiseMax(kVarianceFloor).cwiseSqrt();
  c->pooled.resize(2 * h.cols());
  c->pooled << mean.transpose(), c->sd;
  c->x = w.layers[5].w * c->pooled + w.layers[5].b;
  c->a6 = c->x.cwiseMax(0.0);
  c->z7 = w.layers[6].w * c->a6 + w.layers[6].b;
  c->a7 = c->z7.cwiseMax(0.0);
  c->logits = w.layers[7].w * c->a7 + w.layers[7].b;
}

Eigen::VectorXd relu_mask(const Eigen::VectorXd &z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

// Accumulates the gradient of a loss with derivative dlogits into g.
void backward(const TdnnWeights &w, const ForwardCache &c,
              const Eigen::VectorXd &dlogits, TdnnGradients *g) {
  (*g)[7].w.noalias() += dlogits * c.a7.transpose();
  (*g)[7].b += dlogits;
  const Eigen::VectorXd dz7 =
      (w.layers[7].w.transpose() * dlogits).cwiseProduct(relu_mask(c.z7));
  (*g)[6].w.noalias() += dz7 * c.a6.transpose();
  (*g)[6].b += dz7;
  const Eigen::VectorXd dx =
      (w.layers[6].w.transpose() * dz7).cwiseProduct(relu_mask(c.x));
  (*g)[5].w.noalias() += dx * c.pooled.transpose();
  (*g)[5].b += dx;
  const Eigen::VectorXd dp = w.layers[5].w.transpose() * dx;

  const Eigen::Index t = c.centered.rows(), ch = c.centered.cols();
  const Eigen::VectorXd dmean = dp.head(ch);
  Eigen::VectorXd dvar = Eigen::VectorXd::Zero(ch);
  for (Eigen::Index j = 0; j < ch; ++j)
    if (c.var[j] > kVarianceFloor) dvar[j] = dp[ch + j] / (2.0 * c.sd[j]);
  // d var_j / d h_tj = 2 (h_tj - mean_j) / T; the path through the mean
  // vanishes because the centred column sums to zero.
  Eigen::MatrixXd dh = c.centered * (2.0 / t) * dvar.asDiagonal();
  dh.rowwise() += dmean.transpose() / static_cast<double>(t);

  for (int l = kNumFrameLayers - 1; l >= 0; --l) {
    const Eigen::MatrixXd dz =
        dh.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
    (*g)[l].w.noalias() += dz.transpose() * c.input[l];
    (*g)[l].b += dz.colwise().sum().transpose();
    if (l == 0) break;
    const Eigen::MatrixXd ds = dz * w.layers[l].w;
    dh = Eigen::MatrixXd::Zero(t, w.cfg.frame_layers[l - 1].out_dim);
    unsplice_add(ds, w.cfg.frame_layers[l].offsets, &dh);
  }
}

TdnnGradients zero_gradients(const TdnnWeights &w) {
  TdnnGradients g(w.layers.size());
  for (size_t i = 0; i < w.layers.size(); ++i) {
    g[i].w = Eigen::MatrixXd::Zero(w.layers[i].w.rows(), w.layers[i].w.cols());
    g[i].b = Eigen::VectorXd::Zero(w.layers[i].b.size());
  }
  return g;
}

}  // namespace

TdnnConfig TdnnConfig::table3(int input_dim, int n_classes) {
  return make_config(input_dim, n_classes, 512, 1500, 512);
}

TdnnConfig TdnnConfig::compact(int input_dim, int n_classes, int frame_width,
                               int last_frame_width, int embed_dim) {
  return make_config(input_dim, n_classes, frame_width, last_frame_width,
                     embed_dim);
}

int TdnnConfig::receptive_field() const {
  int rf = 1;
  for (const auto &l : frame_layers)
    if (!l.offsets.empty()) rf += l.offsets.back() - l.offsets.front();
  return rf;
}

bool TdnnConfig::is_table3() const {
  const TdnnConfig ref = table3(input_dim, n_classes);
  if (embed_dim != ref.embed_dim || seg7_dim != ref.seg7_dim ||
      frame_layers.size() != ref.frame_layers.size())
    return false;
  for (size_t i = 0; i < frame_layers.size(); ++i)
    if (frame_layers[i].out_dim != ref.frame_layers[i].out_dim ||
        frame_layers[i].offsets != ref.frame_layers[i].offsets)
      return false;
  return true;
}

void TdnnConfig::validate() const {
  if (input_dim < 1) throw ConfigError("tdnn: input_dim must be >= 1");
  if (n_classes < 2) throw ConfigError("tdnn: n_classes must be >= 2");
  if (embed_dim < 1 || seg7_dim < 1)
    throw ConfigError("tdnn: segment layer widths must be >= 1");
  if (static_cast<int>(frame_layers.size()) != kNumFrameLayers)
    throw ConfigError("tdnn: expected 5 frame-level layers");
  for (const auto &l : frame_layers) {
    if (l.out_dim < 1) throw ConfigError("tdnn: layer width must be >= 1");
    if (l.offsets.empty()) throw ConfigError("tdnn: empty splice context");
    for (size_t k = 1; k < l.offsets.size(); ++k)
      if (l.offsets[k] <= l.offsets[k - 1])
        throw ConfigError("tdnn: splice offsets must be strictly ascending");
  }
}

const char *TdnnWeights::layer_name(int i) {
  static const char *kNames[kNumLayers] = {"tdnn1",    "tdnn2",    "tdnn3",
                                           "tdnn4",    "tdnn5",    "segment6",
                                           "segment7", "output"};
  return kNames[i];
}

namespace {

// (out, in) of every layer implied by cfg.
std::vector<std::pair<int, int>> layer_shapes(const TdnnConfig &cfg) {
  std::vector<std::pair<int, int>> shapes;
  int in = cfg.input_dim;
  for (const auto &l : cfg.frame_layers) {
    shapes.emplace_back(l.out_dim, in * static_cast<int>(l.offsets.size()));
    in = l.out_dim;
  }
  shapes.emplace_back(cfg.embed_dim, cfg.pooled_dim());
  shapes.emplace_back(cfg.seg7_dim, cfg.embed_dim);
  shapes.emplace_back(cfg.n_classes, cfg.seg7_dim);
  return shapes;
}

}  // namespace

void TdnnWeights::validate() const {
  cfg.validate();
  const auto shapes = layer_shapes(cfg);
  if (layers.size() != shapes.size())
    throw ConfigError("tdnn: expected " + std::to_string(shapes.size()) +
                      " layers, got " + std::to_string(layers.size()));
  for (size_t i = 0; i < shapes.size(); ++i) {
    const auto &l = layers[i];
    if (l.w.rows() != shapes[i].first || l.w.cols() != shapes[i].second ||
        l.b.size() != shapes[i].first)
      throw ConfigError(std::string("tdnn: shape mismatch in layer ") +
                        layer_name(static_cast<int>(i)));
    if (!l.w.allFinite() || !l.b.allFinite())
      throw ConfigError(std::string("tdnn: non-finite weights in layer ") +
                        layer_name(static_cast<int>(i)));
  }
}

int64_t TdnnWeights::num_parameters() const {
  int64_t n = 0;
  for (const auto &l : layers) n += l.w.size() + l.b.size();
  return n;
}

TdnnOutput tdnn_forward(const TdnnWeights &w, const Eigen::MatrixXd &frames) {
  ForwardCache c;
  forward(w, frames, &c);
  return {c.x, c.logits};
}

TdnnOutput tdnn_forward(const TdnnWeights &w, const FeatureMatrix &fm) {
  return tdnn_forward(w, fm.frames);
}

XVector extract_xvector(const TdnnWeights &w,
                        std::span<const FeatureMatrix> segments,
                        const std::string &subject_id) {
  if (segments.empty()) throw DataError("extract_xvector: no segments");
  XVector xv;
  xv.values = Eigen::VectorXd::Zero(w.cfg.embed_dim);
  for (const auto &seg : segments) xv.values += tdnn_forward(w, seg).xvector;
  xv.values /= static_cast<double>(segments.size());
  xv.source = segments.front().utterance_id;
  xv.subject_id = subject_id;
  return xv;
}

double glorot_limit(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

TdnnWeights init_weights(const TdnnConfig &cfg, uint64_t seed) {
  cfg.validate();
  TdnnWeights w;
  w.cfg = cfg;
  std::mt19937_64 rng(seed);
  for (const auto &[out, in] : layer_shapes(cfg)) {
    std::uniform_real_distribution<double> u(-glorot_limit(in, out),
                                             glorot_limit(in, out));
    AffineLayer l;
    l.w.resize(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) l.w(i, j) = u(rng);
    l.b = Eigen::VectorXd::Zero(out);
    w.layers.push_back(std::move(l));
  }
  return w;
}

double tdnn_loss(const TdnnWeights &w, std::span<const TrainExample> batch,
                 TdnnGradients *grad) {
  if (batch.empty()) throw DataError("tdnn_loss: empty batch");
  if (grad) *grad = zero_gradients(w);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  ForwardCache c;
  for (const auto &ex : batch) {
    if (ex.label < 0 || ex.label >= w.cfg.n_classes)
      throw ConfigError("tdnn_loss: label " + std::to_string(ex.label) +
                        " out of range");
    forward(w, ex.frames, &c);
    const double mx = c.logits.maxCoeff();
    const Eigen::VectorXd e = (c.logits.array() - mx).exp().matrix();
    const double sum = e.sum();
    total += mx + std::log(sum) - c.logits[ex.label];
    if (grad) {
      Eigen::VectorXd d = e / sum;
      d[ex.label] -= 1.0;
      backward(w, c, d * scale, grad);
    }
  }
  const double loss = total * scale;
  if (!std::isfinite(loss))
    throw NumericalError("tdnn_loss: non-finite loss");
  return loss;
}

TrainStepResult train_step(const TdnnWeights &w,
                           std::span<const TrainExample> batch, double lr) {
  TdnnGradients g;
  TrainStepResult r;
  r.loss = tdnn_loss(w, batch, &g);
  r.weights = w;
  for (size_t i = 0; i < g.size(); ++i) {
    r.weights.layers[i].w -= lr * g[i].w;
    r.weights.layers[i].b -= lr * g[i].b;
  }
  return r;
}

SgdTrainer::SgdTrainer(TdnnWeights w, double lr, double momentum)
    : w_(std::move(w)), lr_(lr), momentum_(momentum) {
  w_.validate();
  velocity_ = zero_gradients(w_);
}

double SgdTrainer::step(std::span<const TrainExample> batch) {
  TdnnGradients g;
  const double loss = tdnn_loss(w_, batch, &g);
  for (size_t i = 0; i < g.size(); ++i) {
    velocity_[i].w = momentum_ * velocity_[i].w + g[i].w;
    velocity_[i].b = momentum_ * velocity_[i].b + g[i].b;
    w_.layers[i].w -= lr_ * velocity_[i].w;
    w_.layers[i].b -= lr_ * velocity_[i].b;
  }
  return loss;
}

TdnnWeights train_embedder(const TdnnConfig &cfg,
                           std::span<const TrainExample> utterances,
                           const EmbedderTrainOptions &opts) {
  if (opts.batch_size < 1 || opts.steps < 0 ||
      opts.min_crop_frames > opts.max_crop_frames)
    throw ConfigError("train_embedder: invalid options");
  const int rf = cfg.receptive_field();
  std::vector<const TrainExample *> usable;
  for (const auto &u : utterances)
    if (u.frames.rows() >= std::max(rf, opts.min_crop_frames))
      usable.push_back(&u);
  if (usable.empty())
    throw DataError("train_embedder: no utterance is long enough to crop");

  std::mt19937_64 rng(opts.seed);
  SgdTrainer trainer(init_weights(cfg, derive_seed(opts.seed, "init")),
                     opts.lr, opts.momentum);
  std::uniform_int_distribution<size_t> pick(0, usable.size() - 1);
  std::uniform_int_distribution<int> crop_len(opts.min_crop_frames,
                                              opts.max_crop_frames);
  std::vector<TrainExample> batch(opts.batch_size);
  double running = 0.0;
  for (int step = 0; step < opts.steps; ++step) {
    const int len = crop_len(rng);
    for (auto &ex : batch) {
      const TrainExample &u = *usable[pick(rng)];
      const int n = std::min<int>(len, static_cast<int>(u.frames.rows()));
      std::uniform_int_distribution<int> start(
          0, static_cast<int>(u.frames.rows()) - n);
      ex.frames = u.frames.middleRows(start(rng), n);
      ex.label = u.label;
    }
    running += trainer.step(batch);
    if ((step + 1) % 50 == 0) {
      spdlog::info("embedder step {}/{}: mean loss {:.4f}", step + 1,
                   opts.steps, running / 50.0);
      running = 0.0;
    }
  }
  return trainer.release();
}

double tdnn_accuracy(const TdnnWeights &w,
                     std::span<const TrainExample> data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto &ex : data) {
    Eigen::Index best;
    tdnn_forward(w, ex.frames).logits.maxCoeff(&best);
    if (best == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace voicepd
