// tests/acceptance/acceptance_test.cc

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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eer_reference.h"
#include "gmm_reference.h"
#include "plda_util.h"
#include "tdnn_reference.h"
#include "test_util.h"
#include "voicepd/augment.h"
#include "voicepd/backend.h"
#include "voicepd/demo.h"
#include "voicepd/eval.h"
#include "voicepd/experiment.h"
#include "voicepd/frontend.h"
#include "voicepd/gmm.h"
#include "voicepd/tdnn.h"

namespace voicepd {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. EM monotonicity

Outcome em_monotone() {
  const GmmModel truth = test::random_gmm(5, 8, 21, 3.0);
  const Eigen::MatrixXd x = test::sample_gmm(truth, 1000, 22);
  const auto t0 = Clock::now();
  EmOptions o;
  o.max_iter = 100;
  o.tol = 0.0;
  const EmResult r = em_fit(kmeans_init(x, 5, 1), x, o);
  const double secs = seconds_since(t0);
  double worst = 0.0;  // largest decrease relative to the previous value
  for (size_t i = 1; i < r.loglik_trace.size(); ++i)
    worst = std::max(worst, (r.loglik_trace[i - 1] - r.loglik_trace[i]) /
                                std::abs(r.loglik_trace[i - 1]));
  const bool pass = r.loglik_trace.size() >= 10 && worst <= 1e-8 && secs < 5.0;
  return {pass, fmt("%zu iterations, worst relative decrease %.2e (<= 1e-8), "
                    "%.3f s (< 5 s)",
                    r.loglik_trace.size(), worst, secs)};
}

// ---------------------------------------------------------------------------
// 2. Frame log-likelihood against an extended-precision direct sum

Outcome loglik_oracle() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int m = 1 + i % 7, d = 1 + (i * 5) % 12;
    const GmmModel g = test::random_gmm(m, d, 500 + i);
    const Eigen::VectorXd x = test::random_matrix(d, 1, 1500 + i, 2.0).col(0);
    const double got = frame_loglik(g, {x.data(), static_cast<size_t>(d)});
    worst = std::max(worst, static_cast<double>(std::fabs(
                                got - test::loglik_oracle(g, x))));
  }
  return {worst <= 1e-10,
          fmt("100 random pairs, max |error| %.2e (<= 1e-10)", worst)};
}

// ---------------------------------------------------------------------------
// 3. DCT stage and frame count

Outcome mfcc_oracle() {
  double worst = 0.0;
  for (auto preset : {FrontendPreset::kGmmHighQuality, FrontendPreset::kGmmTelephone,
                      FrontendPreset::kXvecTelephone,
                      FrontendPreset::kXvecHighQuality}) {
    const FrontendConfig cfg = FrontendConfig::preset(preset);
    const int rate = cfg.target_rate_hz.value_or(
        preset == FrontendPreset::kGmmTelephone ? 8000 : 16000);
    MfccComputer mc(cfg, rate);
    const AudioBuffer s = test::white_noise(0.1, 0.5, 9, rate);
    const int n = cfg.n_mel_bins;
    for (int t = 0; t < 20; ++t) {
      std::span<const double> frame(s.samples.data() + t * mc.frame_shift(),
                                    mc.frame_length());
      const Eigen::VectorXd lm = mc.log_mel(frame);
      const Eigen::VectorXd c = mc.cepstra(lm);
      for (int k = 1; k <= cfg.n_mfcc; ++k) {
        long double ref = 0.0L;
        for (int i = 0; i < n; ++i)
          ref += std::sqrt(2.0L / n) *
                 std::cos(std::numbers::pi_v<long double> * k * (i + 0.5L) / n) *
                 lm(i);
        worst = std::max(worst, static_cast<double>(std::fabs(c(k - 1) - ref)));
      }
    }
  }
  // 20 ms windows with a 10 ms step: floor((N - L) / H) + 1 frames.
  bool counts_ok = true;
  for (int rate : {8000, 16000, 44100, 48000}) {
    const int len = rate / 50, hop = rate / 100;
    for (int64_t n : {int64_t(len - 1), int64_t(len), int64_t(len + hop - 1),
                      int64_t(len + hop), int64_t(rate), int64_t(7 * rate + 123)}) {
      const int expected = n < len ? 0 : static_cast<int>((n - len) / hop + 1);
      counts_ok &= num_frames(n, len, hop) == expected;
    }
  }
  const FeatureMatrix fm =
      compute_features(test::white_noise(0.1, 1.0, 2),
                       FrontendConfig::preset(FrontendPreset::kGmmHighQuality));
  counts_ok &= fm.num_frames() == 99;
  return {worst <= 1e-9 && counts_ok,
          fmt("max |cepstrum - explicit DCT-II| %.2e (<= 1e-9), frame counts %s",
              worst, counts_ok ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 4. TDNN gradients against central differences

TdnnWeights with_random_biases(const TdnnConfig &cfg, uint64_t seed) {
  TdnnWeights w = init_weights(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x55);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto &l : w.layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = n(rng);
  return w;
}

Outcome tdnn_gradient() {
  const auto t0 = Clock::now();
  // Every parameter of a narrow network with the full topology.
  const TdnnWeights w = with_random_biases(TdnnConfig::compact(24, 2, 12, 16, 8), 31);
  std::vector<TrainExample> batch = {{test::random_matrix(30, 24, 41), 0},
                                     {test::random_matrix(30, 24, 42), 1}};
  TdnnGradients g;
  tdnn_loss(w, batch, &g);
  const test::ReferenceLoss base = test::reference_loss(w, batch);
  double worst = 0.0;
  int64_t checked = 0;
  for (int l = 0; l < TdnnWeights::kNumLayers; ++l)
    for (int i = 0; i < w.layers[l].w.rows(); ++i)
      for (int j = -1; j < w.layers[l].w.cols(); ++j, ++checked)
        worst = std::max(worst, test::check_parameter(w, batch, g, l, i, j,
                                                      base.signature, base.loss)
                                    .rel_error);

  // Full-width network: random directions per layer.
  const TdnnWeights full = with_random_biases(TdnnConfig::table3(24, 2), 7);
  TdnnGradients gf;
  tdnn_loss(full, batch, &gf);
  double worst_dir = 0.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int l = 0; l < TdnnWeights::kNumLayers; ++l) {
    AffineLayer dir{Eigen::MatrixXd(full.layers[l].w.rows(), full.layers[l].w.cols()),
                    Eigen::VectorXd(full.layers[l].b.size())};
    for (Eigen::Index k = 0; k < dir.w.size(); ++k) dir.w(k) = n(rng);
    for (Eigen::Index k = 0; k < dir.b.size(); ++k) dir.b(k) = n(rng);
    const double scale = 1.0 / std::sqrt(dir.w.squaredNorm() + dir.b.squaredNorm());
    dir.w *= scale;
    dir.b *= scale;
    const double analytic =
        (gf[l].w.array() * dir.w.array()).sum() + gf[l].b.dot(dir.b);
    const double h = 1e-5;
    TdnnWeights plus = full, minus = full;
    plus.layers[l].w += h * dir.w;
    plus.layers[l].b += h * dir.b;
    minus.layers[l].w -= h * dir.w;
    minus.layers[l].b -= h * dir.b;
    const double numeric =
        (tdnn_loss(plus, batch) - tdnn_loss(minus, batch)) / (2 * h);
    worst_dir = std::max(worst_dir, test::relative_error(analytic, numeric));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && worst_dir <= 1e-4 && secs < 60.0,
          fmt("K=24 T=30 N=2: all %lld parameters of a 12/16/8-wide net max rel "
              "error %.2e, full-width net directional max rel error %.2e "
              "(<= 1e-4), %.1f s (< 60 s)",
              static_cast<long long>(checked), worst, worst_dir, secs)};
}

// ---------------------------------------------------------------------------
// 5. Pooling invariance under duplication

Outcome pooling_invariance() {
  const TdnnWeights w = with_random_biases(TdnnConfig::table3(24, 2), 21);
  double worst = 0.0;
  for (int t : {15, 30, 57}) {
    const Eigen::MatrixXd x = test::random_matrix(t, 24, 22 + t);
    Eigen::MatrixXd xx(2 * t, 24);
    xx << x, x;
    const Eigen::VectorXd a = tdnn_forward(w, x).xvector;
    const Eigen::VectorXd b = tdnn_forward(w, xx).xvector;
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10,
          fmt("full-width net, T = 15/30/57, max |difference| %.2e (<= 1e-10)",
              worst)};
}

// ---------------------------------------------------------------------------
// 6. PLDA

Outcome plda() {
  const PldaModel truth = test::random_plda(10, 3, 3, 2026, 1.5);
  const test::PldaSample train = test::sample_plda(truth, 1000, 5, 1);  // n = 5000
  PldaOptions o;
  o.r_b = 3;
  o.r_w = 3;
  o.iters = 50;
  o.tol = 0.0;
  const PldaFitResult fit = plda_fit(train.xs, train.labels, o);
  double worst_drop = 0.0;
  for (size_t i = 1; i < fit.loglik_trace.size(); ++i)
    worst_drop = std::max(worst_drop, (fit.loglik_trace[i - 1] - fit.loglik_trace[i]) /
                                          std::abs(fit.loglik_trace[i - 1]));
  // Held-out trials from the same generator.
  const test::PldaSample test_set = test::sample_plda(truth, 1000, 2, 2);
  const PldaScorer scorer(fit.model);
  std::vector<double> same, diff;
  bool symmetric = true;
  for (int c = 0; c < 1000; ++c) {
    const Eigen::VectorXd a = test_set.xs.row(2 * c).transpose();
    const Eigen::VectorXd b = test_set.xs.row(2 * c + 1).transpose();
    const Eigen::VectorXd o2 = test_set.xs.row((2 * c + 3) % 2000).transpose();
    same.push_back(scorer.score(a, b));
    diff.push_back(scorer.score(a, o2));
    symmetric &= scorer.score(a, b) == scorer.score(b, a) &&
                 scorer.score(a, o2) == scorer.score(o2, a) &&
                 plda_score(fit.model, a, b) == plda_score(fit.model, b, a);
  }
  const double auc = test::auc(same, diff);
  const bool monotone = worst_drop <= 1e-8;
  return {monotone && auc >= 0.9 && symmetric,
          fmt("EM %zu iterations, worst relative decrease %.2e; held-out AUC "
              "%.4f (>= 0.9); symmetry %s",
              fit.loglik_trace.size(), worst_drop, auc,
              symmetric ? "exact" : "BROKEN")};
}

// ---------------------------------------------------------------------------
// 7. EER

Outcome eer_oracle() {
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<LabeledScore> s;
    for (int i = 0; i < 200; ++i) {
      const bool pos = i % 2 == 0;
      double v = n(rng) + (pos ? 1.0 : 0.0);
      if (seed > 3) v = std::round(v * 4.0) / 4.0;  // ties
      s.push_back({v, pos});
    }
    worst = std::max(worst, std::abs(compute_eer(s).eer - test::brute_eer(s)));
  }
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledScore> chance;
  for (int i = 0; i < 10000; ++i) chance.push_back({u(rng), u(rng) < 0.5});
  const double c = compute_eer(chance).eer;
  return {worst <= 1e-6 && std::abs(c - 0.5) <= 0.02,
          fmt("200 scores x 5 seeds: max |EER - threshold sweep| %.2e (<= 1e-6); "
              "chance EER %.4f (0.5 +- 0.02)",
              worst, c)};
}

// ---------------------------------------------------------------------------
// 8. Augmentation

Outcome augmentation() {
  std::array<CorruptionSource, 4> src;
  for (size_t k = 0; k < 4; ++k) {
    src[k].spec.kind = kAllCorruptionKinds[k];
    src[k].spec.source_pool = {"in-memory"};
  }
  AudioBuffer rir;
  rir.sample_rate_hz = 16000;
  rir.samples.assign(1600, 0.0);
  rir.samples[0] = 1.0;
  for (size_t i = 1; i < rir.size(); ++i)
    rir.samples[i] = 0.2 * std::exp(-static_cast<double>(i) / 300.0) *
                     std::sin(0.37 * static_cast<double>(i));
  src[0].pool = {rir};
  src[1].pool = {test::white_noise(0.1, 1.5, 1), test::white_noise(0.2, 0.8, 2)};
  src[2].pool = {test::sine(220.0, 0.3, 2.0), test::sine(330.0, 0.2, 1.0)};
  for (int i = 0; i < 5; ++i) src[3].pool.push_back(test::white_noise(0.1, 1.0, 10 + i));
  std::vector<Utterance> in;
  for (int i = 0; i < 25; ++i)
    in.push_back({"u" + std::to_string(i), test::sine(150.0 + 7 * i, 0.2, 1.2)});
  const auto out = augment_corpus(in, src, 3);
  bool tripled = out.size() == 3 * in.size();
  for (size_t i = 0; i < in.size() && tripled; ++i)
    tripled = out[3 * i].audio.samples == in[i].audio.samples &&
              out[3 * i + 1].kind && out[3 * i + 2].kind;

  const AudioBuffer s = test::sine(300.0, 0.03, 2.0);
  const AudioBuffer noise = test::white_noise(0.2, 0.7, 6);
  double worst = 0.0;
  for (double snr = -10.0; snr <= 40.0 + 1e-9; snr += 1.0) {
    for (double refresh : {0.0, 0.5}) {
      const AudioBuffer y = mix_additive(s, noise, snr, {refresh, 9});
      double ps = 0, pn = 0;
      for (size_t i = 0; i < s.size(); ++i) {
        ps += s.samples[i] * s.samples[i];
        const double d = y.samples[i] - s.samples[i];
        pn += d * d;
      }
      worst = std::max(worst, std::abs(10.0 * std::log10(ps / pn) - snr));
    }
  }
  return {tripled && worst <= 0.1,
          fmt("%zu -> %zu utterances with originals intact: %s; SNR -10..40 dB "
              "max |achieved - requested| %.4f dB (<= 0.1)",
              in.size(), out.size(), tripled ? "yes" : "NO", worst)};
}

// ---------------------------------------------------------------------------
// 9 and 10. End-to-end runs on the demo cohort

struct PipelineRun {
  double seconds = 0.0;
  std::map<std::string, SexReport> reports;       // by classifier
  std::map<std::string, std::string> summaries;   // summary.json bytes
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineRun end_to_end(const fs::path &dir) {
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  DemoOptions demo;
  demo.seed = 2026;
  const DemoLayout layout = generate_demo(dir / "demo", demo);
  const Manifest cohort = load_manifest(layout.manifest, std::nullopt);
  const Manifest background = load_manifest(layout.background_manifest, std::nullopt);
  const fs::path out = dir / "out";
  PipelineRun run;
  for (Classifier c : {Classifier::kGmm, Classifier::kXvecPlda}) {
    ExperimentConfig cfg;
    cfg.classifier = c;
    cfg.n_runs = 40;
    cfg.seed = 7;
    if (is_xvector(c)) cfg.embedder_manifest = layout.background_manifest;
    cmd_extract(cohort, cfg.frontend_preset(), out, cfg.seed);
    if (is_xvector(c)) cmd_extract(background, cfg.frontend_preset(), out, cfg.seed);
    const TrainSummary t = cmd_train(cohort, cfg, out);
    EvaluateResult r = cmd_evaluate(cohort, cfg, out, true);
    const std::string name(to_string(c));
    run.summaries[name] = slurp(r.reports.at(0).dir / "summary.json");
    run.reports[name] = std::move(r.reports.at(0));
    spdlog::info("acceptance: {} done after {:.0f} s", name, seconds_since(t0));
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome reproduction(const PipelineRun &run) {
  bool pass = run.seconds < 600.0;
  std::string detail;
  for (const auto &[name, rep] : run.reports) {
    const double simple = rep.simple ? rep.simple->eer : 1.0;
    pass &= rep.det.eer <= 0.05 && rep.det.eer <= simple + 0.02;
    detail += fmt("%s EER %.4f (<= 0.05), simple-model EER %.4f; ", name.c_str(),
                  rep.det.eer, simple);
  }
  detail += fmt("60 PD + 60 HC, 40 runs, %.0f s (< 600 s)", run.seconds);
  return {pass, detail};
}

Outcome determinism(const PipelineRun &a, const PipelineRun &b) {
  bool same = !a.summaries.empty() && a.summaries.size() == b.summaries.size();
  for (const auto &[name, text] : a.summaries)
    same &= b.summaries.contains(name) && b.summaries.at(name) == text;
  return {same, fmt("two independent runs with seed 7: summary.json %s",
                    same ? "byte-identical" : "DIFFERS")};
}

}  // namespace
}  // namespace voicepd

int main() {
  using namespace voicepd;
  spdlog::set_level(spdlog::level::warn);
  int failures = 0;
  auto report = [&](int id, const char *name, const std::function<Outcome()> &f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("CRITERION %2d %s: %s -- %s\n", id, o.pass ? "PASS" : "FAIL", name,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  report(1, "GMM-EM monotonicity", em_monotone);
  report(2, "likelihood oracle", loglik_oracle);
  report(3, "MFCC oracle", mfcc_oracle);
  report(4, "TDNN gradient check", tdnn_gradient);
  report(5, "pooling invariance", pooling_invariance);
  report(6, "PLDA", plda);
  report(7, "EER oracle", eer_oracle);
  report(8, "augmentation", augmentation);

  const fs::path root = fs::temp_directory_path() / "voicepd_acceptance";
  std::optional<PipelineRun> first, second;
  report(9, "end-to-end synthetic reproduction", [&] {
    first = end_to_end(root / "a");
    return reproduction(*first);
  });
  report(10, "determinism", [&]() -> Outcome {
    if (!first) return {false, "first run did not complete"};
    second = end_to_end(root / "b");
    return determinism(*first, *second);
  });
  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
