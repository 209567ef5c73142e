// tests/eval_test.cc

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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "eer_reference.h"

namespace voicepd {
namespace {

using test::brute_eer;
using test::brute_points;

std::vector<Subject> make_cohort(int n_pd, int n_hc) {
  std::vector<Subject> c;
  for (int i = 0; i < n_pd; ++i)
    c.push_back({"pd" + std::to_string(100 + i), ClassLabel::kPD, Sex::kMale});
  for (int i = 0; i < n_hc; ++i)
    c.push_back({"hc" + std::to_string(100 + i), ClassLabel::kHC, Sex::kMale});
  return c;
}

TEST(MakeSplits, ForcedCounts) {
  const auto cohort = make_cohort(2, 2);
  const auto plans = make_splits(cohort, 1, 10, 7);
  ASSERT_EQ(plans.size(), 10u);
  for (const auto &p : plans) {
    EXPECT_EQ(p.train_pd.size(), 1u);
    EXPECT_EQ(p.train_hc.size(), 1u);
    EXPECT_EQ(p.test_pd.size(), 1u);
    EXPECT_EQ(p.test_hc.size(), 1u);
  }
}

TEST(MakeSplits, DeterministicAndSeedDependent) {
  const auto cohort = make_cohort(20, 15);
  const auto a = make_splits(cohort, 8, 40, 123);
  const auto b = make_splits(cohort, 8, 40, 123);
  const auto c = make_splits(cohort, 8, 40, 124);
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].train_pd, b[i].train_pd);
    EXPECT_EQ(a[i].train_hc, b[i].train_hc);
    EXPECT_EQ(a[i].test_pd, b[i].test_pd);
    EXPECT_EQ(a[i].test_hc, b[i].test_hc);
    differs |= a[i].train_pd != c[i].train_pd;
  }
  EXPECT_TRUE(differs);
}

TEST(MakeSplits, CoverageOnUnbalancedCohort) {
  const auto cohort = make_cohort(63, 36);
  const auto plans = make_splits(cohort, 30, 40, 2026);
  std::map<std::string, int> tested;
  for (const auto &p : plans) {
    EXPECT_NO_THROW(check_split(p, cohort));
    for (const auto &id : p.test_pd) ++tested[id];
    for (const auto &id : p.test_hc) ++tested[id];
  }
  for (const auto &s : cohort) EXPECT_GE(tested[s.id], 1) << s.id;
}

TEST(MakeSplits, RejectsInfeasibleSizes) {
  const auto cohort = make_cohort(5, 3);
  EXPECT_THROW(make_splits(cohort, 3, 4, 1), ConfigError);
  EXPECT_THROW(make_splits(cohort, 0, 4, 1), ConfigError);
  EXPECT_THROW(make_splits(cohort, 1, 0, 1), ConfigError);
}

TEST(CheckSplit, DetectsOverlap) {
  const auto cohort = make_cohort(3, 3);
  auto p = make_splits(cohort, 1, 1, 9)[0];
  p.test_pd.push_back(p.train_pd[0]);
  EXPECT_THROW(check_split(p, cohort), ConfigError);
}

TEST(RunExperiment, MeanOfTestScores) {
  const auto cohort = make_cohort(2, 2);
  std::vector<SplitPlan> plans(2);
  plans[0] = {3, 0, {"pd100"}, {"hc100"}, {"pd101"}, {"hc101"}};
  plans[1] = {17, 0, {"pd100"}, {"hc101"}, {"pd101"}, {"hc100"}};
  plans.push_back({20, 0, {"pd101"}, {"hc100"}, {"pd100"}, {"hc101"}});
  const std::map<int, std::map<std::string, double>> table = {
      {3, {{"pd101", 0.6}, {"hc101", 0.1}}},
      {17, {{"pd101", 0.8}, {"hc100", 0.2}}},
      {20, {{"pd100", 0.9}, {"hc101", 0.3}}}};
  const auto agg = run_experiment(
      cohort, plans, [&](const SplitPlan &p) { return table.at(p.run_index); });
  std::map<std::string, const SubjectAggregate *> by_id;
  for (const auto &a : agg.subjects) by_id[a.subject.id] = &a;
  EXPECT_DOUBLE_EQ(by_id["pd101"]->final_score, 0.7);
  EXPECT_EQ(by_id["pd101"]->runs, (std::vector<int>{3, 17}));
  EXPECT_DOUBLE_EQ(by_id["hc101"]->final_score, 0.2);
  EXPECT_DOUBLE_EQ(by_id["pd100"]->final_score, 0.9);
}

TEST(RunExperiment, NeverTestedSubjectIsAnError) {
  const auto cohort = make_cohort(2, 2);
  const auto plans = make_splits(cohort, 1, 1, 5);
  auto pipe = [](const SplitPlan &p) {
    std::map<std::string, double> m;
    for (const auto &id : p.test_pd) m[id] = 0.5;
    for (const auto &id : p.test_hc) m[id] = 0.5;
    return m;
  };
  EXPECT_THROW(run_experiment(cohort, plans, pipe), DataError);
}

TEST(RunExperiment, SingletonRunKeepsScore) {
  const auto cohort = make_cohort(2, 2);
  std::vector<SplitPlan> plans = {
      {0, 0, {}, {}, {"pd100", "pd101"}, {"hc100", "hc101"}}};
  const auto agg = run_experiment(cohort, plans, [](const SplitPlan &) {
    return std::map<std::string, double>{
        {"pd100", 0.9}, {"pd101", 0.8}, {"hc100", 0.3}, {"hc101", 0.1}};
  });
  EXPECT_DOUBLE_EQ(agg.subjects[0].final_score, 0.9);
  EXPECT_DOUBLE_EQ(agg.subjects[1].final_score, 0.8);
  EXPECT_DOUBLE_EQ(agg.subjects[2].final_score, 0.3);
  EXPECT_DOUBLE_EQ(agg.subjects[3].final_score, 0.1);
}

TEST(RunExperiment, ConstantPipelineAndThreadInvariance) {
  const auto cohort = make_cohort(12, 10);
  const auto plans = make_splits(cohort, 5, 40, 11);
  auto constant = [](const SplitPlan &p) {
    std::map<std::string, double> m;
    for (const auto &id : p.test_pd) m[id] = 0.5;
    for (const auto &id : p.test_hc) m[id] = 0.5;
    return m;
  };
  for (const auto &a : run_experiment(cohort, plans, constant).subjects)
    EXPECT_EQ(a.final_score, 0.5);

  auto seeded = [](const SplitPlan &p) {
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::map<std::string, double> m;
    for (const auto &id : p.test_pd) m[id] = u(rng);
    for (const auto &id : p.test_hc) m[id] = u(rng);
    return m;
  };
  const auto serial = run_experiment(cohort, plans, seeded, 1);
  const auto parallel = run_experiment(cohort, plans, seeded, 4);
  ASSERT_EQ(serial.subjects.size(), parallel.subjects.size());
  for (size_t i = 0; i < serial.subjects.size(); ++i) {
    EXPECT_EQ(serial.subjects[i].final_score, parallel.subjects[i].final_score);
    EXPECT_EQ(serial.subjects[i].runs, parallel.subjects[i].runs);
  }
}

TEST(RunExperiment, MissingTestScoreIsAnError) {
  const auto cohort = make_cohort(3, 3);
  const auto plans = make_splits(cohort, 1, 3, 5);
  auto partial = [](const SplitPlan &p) {
    return std::map<std::string, double>{{p.test_pd[0], 0.5}};
  };
  EXPECT_THROW(run_experiment(cohort, plans, partial), DataError);
}

TEST(Eer, SeparableIsZero) {
  std::vector<LabeledScore> s = {{0.1, false}, {0.2, false}, {0.8, true},
                                 {0.9, true}};
  const auto e = compute_eer(s);
  EXPECT_EQ(e.eer, 0.0);
  EXPECT_GT(e.threshold, 0.2);
  EXPECT_LE(e.threshold, 0.8);
}

TEST(Eer, MatchesBruteForceSweep) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::bernoulli_distribution b(0.45);
    std::vector<LabeledScore> s;
    for (int i = 0; i < 200; ++i) {
      const bool pos = b(rng);
      // Round to create ties.
      double v = n(rng) + (pos ? 0.8 : 0.0);
      if (seed % 2 == 0) v = std::round(v * 10.0) / 10.0;
      s.push_back({v, pos});
    }
    EXPECT_NEAR(compute_eer(s).eer, brute_eer(s), 1e-6) << "seed " << seed;
  }
}

TEST(Eer, ChanceLevel) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution b(0.5);
  std::vector<LabeledScore> s;
  for (int i = 0; i < 10000; ++i) s.push_back({u(rng), b(rng)});
  EXPECT_NEAR(compute_eer(s).eer, 0.5, 0.02);
}

TEST(Eer, SingleClassIsAnError) {
  std::vector<LabeledScore> s = {{0.1, true}, {0.2, true}};
  EXPECT_THROW(compute_eer(s), DataError);
}

TEST(DetCurve, PointCountAndMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(0, 30);
  std::bernoulli_distribution b(0.5);
  std::vector<LabeledScore> s;
  std::set<double> distinct;
  for (int i = 0; i < 150; ++i) {
    const double v = d(rng) / 30.0;
    distinct.insert(v);
    s.push_back({v, b(rng)});
  }
  const auto c = det_curve(s);
  EXPECT_EQ(c.points.size(), distinct.size() + 1);
  EXPECT_EQ(c.points.front().fpr, 1.0);
  EXPECT_EQ(c.points.front().fnr, 0.0);
  EXPECT_EQ(c.points.back().fpr, 0.0);
  EXPECT_EQ(c.points.back().fnr, 1.0);
  for (size_t k = 0; k + 1 < c.points.size(); ++k) {
    EXPECT_LT(c.points[k].threshold, c.points[k + 1].threshold);
    EXPECT_GE(c.points[k].fpr, c.points[k + 1].fpr);
    EXPECT_LE(c.points[k].fnr, c.points[k + 1].fnr);
  }
  const auto brute = brute_points(s);
  for (size_t k = 0; k < brute.size(); ++k) {
    EXPECT_DOUBLE_EQ(c.points[k].fpr, brute[k].first);
    EXPECT_DOUBLE_EQ(c.points[k].fnr, brute[k].second);
  }
}

TEST(DetCurve, FnrAtTakesLowestOnVerticalSegments) {
  DetCurve c;
  c.points = {{0, 1.0, 0.0}, {1, 0.5, 0.0}, {2, 0.5, 0.4}, {3, 0.0, 1.0}};
  EXPECT_DOUBLE_EQ(fnr_at(c, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(fnr_at(c, 0.25), 0.7);
  EXPECT_DOUBLE_EQ(fnr_at(c, 0.75), 0.0);
  EXPECT_DOUBLE_EQ(fnr_at(c, 0.0), 1.0);
}

TEST(DetGrid, LogSpacedWithZero) {
  const auto g = det_fpr_grid();
  ASSERT_EQ(g.size(), 1001u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], 1e-4, 1e-18);
  EXPECT_EQ(g.back(), 1.0);
  for (size_t i = 1; i + 1 < g.size(); ++i) EXPECT_LT(g[i], g[i + 1]);
}

// Test scores for a run: PD ~ N(mu, 1), HC ~ N(0, 1) at fixed quantiles so
// the run EER is determined by mu alone.
RunResult gaussian_run(int idx, double mu, int n) {
  RunResult r{idx, {}};
  // Inverse normal CDF by bisection on erfc.
  auto probit = [](double p) {
    double lo = -10, hi = 10;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  for (int i = 0; i < n; ++i) {
    const double z = probit((i + 0.5) / n);
    r.scores["pd" + std::to_string(1000 + i)] = mu + z;
    r.scores["hc" + std::to_string(1000 + i)] = z;
  }
  return r;
}

std::map<std::string, ClassLabel> gaussian_labels(int n) {
  std::map<std::string, ClassLabel> m;
  for (int i = 0; i < n; ++i) {
    m["pd" + std::to_string(1000 + i)] = ClassLabel::kPD;
    m["hc" + std::to_string(1000 + i)] = ClassLabel::kHC;
  }
  return m;
}

TEST(SimpleModel, IdenticalRunsReproduceTheRunCurve) {
  const int n = 400;
  const auto labels = gaussian_labels(n);
  std::vector<RunResult> runs = {gaussian_run(0, 1.5, n),
                                 gaussian_run(1, 1.5, n)};
  const auto avg = simple_model_eval(runs, labels);
  const auto single = det_curve(labeled_scores(runs[0].scores, labels));
  const auto grid = det_fpr_grid();
  ASSERT_EQ(avg.points.size(), grid.size());
  for (const auto &p : avg.points)
    EXPECT_NEAR(p.fnr, fnr_at(single, p.fpr), 1e-12);
  EXPECT_NEAR(avg.eer, single.eer, 2e-3);
}

TEST(SimpleModel, AverageEerLiesBetweenRunEers) {
  const int n = 500;
  const auto labels = gaussian_labels(n);
  // Symmetric unit-variance classes: EER = Phi(-mu / 2).
  auto mu_for = [](double eer) {
    double lo = 0, hi = 10;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(mid / 2.0 / std::sqrt(2.0)) > eer ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  std::vector<RunResult> runs = {gaussian_run(0, mu_for(0.2), n),
                                 gaussian_run(1, mu_for(0.3), n)};
  const double e0 = det_curve(labeled_scores(runs[0].scores, labels)).eer;
  const double e1 = det_curve(labeled_scores(runs[1].scores, labels)).eer;
  EXPECT_NEAR(e0, 0.2, 0.01);
  EXPECT_NEAR(e1, 0.3, 0.01);
  const auto avg = simple_model_eval(runs, labels);
  EXPECT_GT(avg.eer, e0);
  EXPECT_LT(avg.eer, e1);
}

TEST(SimpleModel, ConstantRunsGiveChance) {
  const auto labels = gaussian_labels(10);
  std::vector<RunResult> runs;
  for (int r = 0; r < 3; ++r) {
    RunResult rr{r, {}};
    for (const auto &[id, _] : labels) rr.scores[id] = 0.5;
    runs.push_back(rr);
  }
  EXPECT_NEAR(simple_model_eval(runs, labels).eer, 0.5, 1e-9);
}

TEST(SimpleModel, SkipsSingleClassRunsAndNeedsTwo) {
  const auto labels = gaussian_labels(50);
  std::vector<RunResult> runs = {gaussian_run(0, 2.0, 50)};
  EXPECT_THROW(simple_model_eval(runs, labels), ConfigError);
  RunResult only_pd{1, {}};
  for (const auto &[id, s] : runs[0].scores)
    if (id[0] == 'p') only_pd.scores[id] = s;
  runs.push_back(only_pd);
  const auto avg = simple_model_eval(runs, labels);
  EXPECT_NEAR(avg.eer,
              det_curve(labeled_scores(runs[0].scores, labels)).eer, 2e-3);
}

}  // namespace
}  // namespace voicepd
