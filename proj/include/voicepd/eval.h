// voicepd/eval.h

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

#ifndef VOICEPD_EVAL_H_
#define VOICEPD_EVAL_H_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "voicepd/common.h"

namespace voicepd {

struct Subject {
  std::string id;
  ClassLabel label = ClassLabel::kHC;
  Sex sex = Sex::kMale;
};

/// One random train/test partition of a single-sex cohort. Id lists are
/// sorted.
struct SplitPlan {
  int run_index = 0;
  uint64_t seed = 0;
  std::vector<std::string> train_pd, train_hc, test_pd, test_hc;
};

/// n_runs seeded partitions with `train_per_class` subjects of each class
/// for training and every remaining subject for testing. Each run draws
/// from derive_seed(seed, run_index). Throws ConfigError when a class has
/// no subject left for testing.
std::vector<SplitPlan> make_splits(std::span<const Subject> cohort,
                                   int train_per_class, int n_runs,
                                   uint64_t seed);

/// Asserts balance, disjointness and coverage of the cohort.
void check_split(const SplitPlan &plan, std::span<const Subject> cohort);

/// Trains on plan.train_* and returns a score for every test subject.
using Pipeline =
    std::function<std::map<std::string, double>(const SplitPlan &plan)>;

struct RunResult {
  int run_index = 0;
  std::map<std::string, double> scores;  // test subject -> score
};

struct SubjectAggregate {
  Subject subject;
  std::vector<int> runs;
  std::vector<double> run_scores;
  double final_score = 0.0;  // mean of run_scores
};

struct AggregatedScores {
  std::vector<SubjectAggregate> subjects;  // cohort order
  std::vector<RunResult> runs;             // plan order
};

/// Runs the pipeline on every plan (optionally on several threads; results
/// do not depend on scheduling) and averages each subject's test scores.
/// Throws DataError if a subject is never tested or a run omits one of its
/// test subjects.
AggregatedScores run_experiment(std::span<const Subject> cohort,
                                std::span<const SplitPlan> plans,
                                const Pipeline &pipeline, int n_threads = 1);

struct LabeledScore {
  double score = 0.0;
  bool positive = false;  // PD
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct DetPoint {
  double threshold;  // decide positive when score >= threshold
  double fpr;
  double fnr;
};

struct DetCurve {
  std::vector<DetPoint> points;  // by increasing threshold
  double eer = 0.0;
  double eer_threshold = 0.0;
};

/// Operating points at every distinct score plus +infinity.
DetCurve det_curve(std::span<const LabeledScore> scores);

/// Equal error rate with linear interpolation between the two operating
/// points that straddle FPR = FNR.
EerResult compute_eer(std::span<const LabeledScore> scores);

/// FPR grid used to average DET curves: 0 followed by `n` log-spaced
/// points from 1e-4 to 1.
std::vector<double> det_fpr_grid(int n = 1000);

/// FNR of a DET curve at a given FPR, interpolating linearly along the
/// curve; on vertical segments the lowest FNR is taken.
double fnr_at(const DetCurve &curve, double fpr);

/// Per-run DET curves averaged pointwise on the common grid, with the EER
/// of the averaged curve. Runs whose test set lacks a class are skipped.
DetCurve simple_model_eval(std::span<const RunResult> runs,
                           const std::map<std::string, ClassLabel> &labels);

std::vector<LabeledScore> labeled_scores(
    const std::map<std::string, double> &scores,
    const std::map<std::string, ClassLabel> &labels);

}  // namespace voicepd

#endif  // VOICEPD_EVAL_H_
