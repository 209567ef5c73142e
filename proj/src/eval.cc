// src/eval.cc

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

#include "voicepd/eval.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <set>
#include <thread>

namespace voicepd {

std::vector<SplitPlan> make_splits(std::span<const Subject> cohort,
                                   int train_per_class, int n_runs,
                                   uint64_t seed) {
  if (n_runs < 1) throw ConfigError("make_splits: n_runs must be >= 1");
  if (train_per_class < 1)
    throw ConfigError("make_splits: train size must be >= 1");
  std::vector<std::string> pd, hc;
  std::set<std::string> seen;
  for (const auto &s : cohort) {
    if (!seen.insert(s.id).second)
      throw DataError("make_splits: duplicate subject '" + s.id + "'");
    (s.label == ClassLabel::kPD ? pd : hc).push_back(s.id);
  }
  std::sort(pd.begin(), pd.end());
  std::sort(hc.begin(), hc.end());
  const int n_pd = static_cast<int>(pd.size()), n_hc = static_cast<int>(hc.size());
  if (train_per_class >= n_pd || train_per_class >= n_hc)
    throw ConfigError("make_splits: " + std::to_string(train_per_class) +
                      " training subjects per class leaves no test subject (" +
                      std::to_string(n_pd) + " PD, " + std::to_string(n_hc) +
                      " HC)");

  std::vector<SplitPlan> plans;
  for (int run = 0; run < n_runs; ++run) {
    SplitPlan p;
    p.run_index = run;
    p.seed = derive_seed(seed, static_cast<uint64_t>(run));
    std::mt19937_64 rng(p.seed);
    auto draw = [&](std::vector<std::string> ids, std::vector<std::string> *train,
                    std::vector<std::string> *test) {
      std::shuffle(ids.begin(), ids.end(), rng);
      train->assign(ids.begin(), ids.begin() + train_per_class);
      test->assign(ids.begin() + train_per_class, ids.end());
      std::sort(train->begin(), train->end());
      std::sort(test->begin(), test->end());
    };
    draw(pd, &p.train_pd, &p.test_pd);
    draw(hc, &p.train_hc, &p.test_hc);
    check_split(p, cohort);
    plans.push_back(std::move(p));
  }
  return plans;
}

void check_split(const SplitPlan &plan, std::span<const Subject> cohort) {
  if (plan.train_pd.size() != plan.train_hc.size())
    throw ConfigError("split " + std::to_string(plan.run_index) +
                      ": training set is not class-balanced");
  std::map<std::string, ClassLabel> labels;
  for (const auto &s : cohort) labels[s.id] = s.label;
  std::set<std::string> all;
  auto add = [&](const std::vector<std::string> &ids, ClassLabel expected) {
    for (const auto &id : ids) {
      auto it = labels.find(id);
      if (it == labels.end() || it->second != expected)
        throw ConfigError("split " + std::to_string(plan.run_index) +
                          ": subject '" + id + "' misplaced");
      if (!all.insert(id).second)
        throw ConfigError("split " + std::to_string(plan.run_index) +
                          ": subject '" + id + "' appears twice");
    }
  };
  add(plan.train_pd, ClassLabel::kPD);
  add(plan.test_pd, ClassLabel::kPD);
  add(plan.train_hc, ClassLabel::kHC);
  add(plan.test_hc, ClassLabel::kHC);
  if (all.size() != labels.size())
    throw ConfigError("split " + std::to_string(plan.run_index) +
                      ": does not cover the cohort");
}

AggregatedScores run_experiment(std::span<const Subject> cohort,
                                std::span<const SplitPlan> plans,
                                const Pipeline &pipeline, int n_threads) {
  if (plans.empty()) throw ConfigError("run_experiment: no plans");
  const size_t n = plans.size();
  std::vector<RunResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < n; i = next++) {
      try {
        results[i].run_index = plans[i].run_index;
        results[i].scores = pipeline(plans[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp<int>(n_threads, 1, static_cast<int>(n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);

  AggregatedScores agg;
  std::map<std::string, size_t> index;
  for (const auto &s : cohort) {
    index[s.id] = agg.subjects.size();
    agg.subjects.push_back({s, {}, {}, 0.0});
  }
  for (size_t i = 0; i < n; ++i) {
    const SplitPlan &p = plans[i];
    std::set<std::string> expected(p.test_pd.begin(), p.test_pd.end());
    expected.insert(p.test_hc.begin(), p.test_hc.end());
    for (const auto &id : expected)
      if (!results[i].scores.count(id))
        throw DataError("run " + std::to_string(p.run_index) +
                        ": no score for test subject '" + id + "'");
    for (const auto &[id, score] : results[i].scores) {
      if (!expected.count(id))
        throw DataError("run " + std::to_string(p.run_index) +
                        ": score for non-test subject '" + id + "'");
      if (!std::isfinite(score))
        throw NumericalError("run " + std::to_string(p.run_index) +
                             ": non-finite score for '" + id + "'");
      SubjectAggregate &a = agg.subjects[index.at(id)];
      a.runs.push_back(p.run_index);
      a.run_scores.push_back(score);
    }
  }
  for (auto &a : agg.subjects) {
    if (a.run_scores.empty())
      throw DataError("subject '" + a.subject.id + "' was never tested");
    double sum = 0.0;
    for (double s : a.run_scores) sum += s;
    a.final_score = sum / static_cast<double>(a.run_scores.size());
  }
  agg.runs = std::move(results);
  return agg;
}

namespace {

void require_both_classes(std::span<const LabeledScore> scores) {
  bool pos = false, neg = false;
  for (const auto &s : scores) {
    if (!std::isfinite(s.score))
      throw NumericalError("det: non-finite score");
    (s.positive ? pos : neg) = true;
  }
  if (!pos || !neg)
    throw DataError("det: both classes must be present");
}

// Crossing of FPR and FNR along a sequence of points where FPR - FNR goes
// from positive to negative.
EerResult crossing(const std::vector<DetPoint> &pts) {
  for (const auto &p : pts)
    if (p.fpr == p.fnr) return {p.fpr, p.threshold};
  for (size_t k = 0; k + 1 < pts.size(); ++k) {
    const double d0 = pts[k].fpr - pts[k].fnr;
    const double d1 = pts[k + 1].fpr - pts[k + 1].fnr;
    if (d0 > 0.0 && d1 < 0.0) {
      const double t = d0 / (d0 - d1);
      const double eer = pts[k].fpr + t * (pts[k + 1].fpr - pts[k].fpr);
      double thr = pts[k].threshold;
      if (std::isfinite(pts[k + 1].threshold) && std::isfinite(thr))
        thr += t * (pts[k + 1].threshold - thr);
      return {eer, thr};
    }
  }
  throw NumericalError("det: FPR and FNR never cross");
}

}  // namespace

DetCurve det_curve(std::span<const LabeledScore> scores) {
  require_both_classes(scores);
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore &a, const LabeledScore &b) {
              return a.score < b.score;
            });
  double n_pos = 0, n_neg = 0;
  for (const auto &s : sorted) (s.positive ? n_pos : n_neg) += 1.0;

  DetCurve c;
  // Walking upward through the distinct scores: everything below the
  // current threshold is rejected.
  double pos_below = 0, neg_below = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double thr = sorted[i].score;
    c.points.push_back({thr, (n_neg - neg_below) / n_neg, pos_below / n_pos});
    for (; i < sorted.size() && sorted[i].score == thr; ++i)
      (sorted[i].positive ? pos_below : neg_below) += 1.0;
  }
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  const EerResult e = crossing(c.points);
  c.eer = e.eer;
  c.eer_threshold = e.threshold;
  return c;
}

EerResult compute_eer(std::span<const LabeledScore> scores) {
  const DetCurve c = det_curve(scores);
  return {c.eer, c.eer_threshold};
}

std::vector<double> det_fpr_grid(int n) {
  std::vector<double> g = {0.0};
  for (int i = 0; i < n; ++i)
    g.push_back(n == 1 ? 1.0 : std::pow(10.0, -4.0 + 4.0 * i / (n - 1)));
  g.back() = 1.0;
  return g;
}

double fnr_at(const DetCurve &curve, double fpr) {
  const auto &p = curve.points;
  if (p.empty()) throw DataError("fnr_at: empty curve");
  fpr = std::clamp(fpr, 0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto &pt : p)
    if (pt.fpr == fpr) best = std::min(best, pt.fnr);
  if (std::isfinite(best)) return best;
  for (size_t k = 0; k + 1 < p.size(); ++k) {
    if (p[k].fpr > fpr && fpr > p[k + 1].fpr) {
      const double t = (p[k].fpr - fpr) / (p[k].fpr - p[k + 1].fpr);
      return p[k].fnr + t * (p[k + 1].fnr - p[k].fnr);
    }
  }
  throw NumericalError("fnr_at: FPR outside the curve");
}

std::vector<LabeledScore> labeled_scores(
    const std::map<std::string, double> &scores,
    const std::map<std::string, ClassLabel> &labels) {
  std::vector<LabeledScore> out;
  for (const auto &[id, s] : scores) {
    auto it = labels.find(id);
    if (it == labels.end())
      throw DataError("no label for subject '" + id + "'");
    out.push_back({s, it->second == ClassLabel::kPD});
  }
  return out;
}

DetCurve simple_model_eval(std::span<const RunResult> runs,
                           const std::map<std::string, ClassLabel> &labels) {
  if (runs.size() < 2)
    throw ConfigError("simple_model_eval: needs at least 2 runs");
  const std::vector<double> grid = det_fpr_grid();
  std::vector<double> fnr(grid.size(), 0.0);
  int used = 0;
  for (const auto &r : runs) {
    const std::vector<LabeledScore> ls = labeled_scores(r.scores, labels);
    const bool pos = std::any_of(ls.begin(), ls.end(),
                                 [](const auto &s) { return s.positive; });
    const bool neg = std::any_of(ls.begin(), ls.end(),
                                 [](const auto &s) { return !s.positive; });
    if (!pos || !neg) {
      spdlog::warn("run {}: test set lacks a class; skipped", r.run_index);
      continue;
    }
    const DetCurve c = det_curve(ls);
    for (size_t j = 0; j < grid.size(); ++j) fnr[j] += fnr_at(c, grid[j]);
    ++used;
  }
  if (used == 0) throw DataError("simple_model_eval: no usable run");
  DetCurve avg;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (size_t j = grid.size(); j-- > 0;)
    avg.points.push_back({nan, grid[j], fnr[j] / used});
  const EerResult e = crossing(avg.points);
  avg.eer = e.eer;
  avg.eer_threshold = nan;
  return avg;
}

}  // namespace voicepd
