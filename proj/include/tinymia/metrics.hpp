// Copyright 2026 The tinymia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TINYMIA_METRICS_HPP_
#define TINYMIA_METRICS_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tinymia/attacks.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/model.hpp"
#include "tinymia/scorestore.hpp"

namespace tinymia {

struct RocCurve {
  // Vertices of the empirical ROC step curve, one per distinct score (ties
  // collapsed), plus a leading sentinel at threshold +inf / (0, 0) and
  // ending at (1, 1). fpr and tpr are non-decreasing.
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  uint64_t n_pos = 0;
  uint64_t n_neg = 0;
  // Equals the Mann-Whitney U statistic with ties counted 1/2, divided by
  // n_pos * n_neg; both sides are computed in exact integer arithmetic.
  double auc = 0.0;
};

// Builds the ROC of "predict member when score >= threshold" over the
// attack rows. Rejects degenerate label sets (needs >= 1 of each).
RocCurve roc(const std::vector<AttackScore>& rows);

// TPR of the step curve at the largest achieved FPR <= fpr_target.
// fpr_target must lie in (0, 1].
double tpr_at_fpr(const RocCurve& curve, double fpr_target);

// TSV rendering "fpr\ttpr", one vertex per line.
std::string roc_tsv(const RocCurve& curve);

struct VulnerabilityRow {
  uint32_t example_id = 0;
  double tp_mean = 0.0;  // mean of per-target member-detection outcomes
  double tp_std = 0.0;   // population std of those outcomes
  uint32_t trials = 0;   // target models in which the example was a member
  uint32_t successes = 0;
};

struct VulnerabilityReport {
  std::vector<VulnerabilityRow> rows;  // id ascending; only examples with trials
  std::vector<uint32_t> never_member;  // examples with zero trials, id ascending
  uint64_t total_trials = 0;           // pooled over (target, example)
  uint64_t total_successes = 0;        // accumulated independently of rows
  uint64_t per_attack_excluded = 0;    // sum of exclusions across target runs
};

// Leave-one-out over every model in the farm: each model in turn is the
// target, the attack runs against it, and each example that is a member of
// that target contributes one binary trial (score > member_threshold).
// Counts are integers merged in fixed model order, so the result is
// identical for any parallelism >= 1.
VulnerabilityReport per_example_tp_prob(const ScoreMatrix& scores, const MembershipMatrix& mm,
                                        const AttackConfig& cfg, uint32_t parallelism = 1);

struct VulnerabilityPartitions {
  uint32_t k = 0;
  std::vector<uint32_t> least;    // k lowest tp_mean, ties to lower id
  std::vector<uint32_t> most;     // k highest tp_mean, ties to lower id
  std::vector<uint32_t> hardest;  // k closest to tp_mean 0.5, ties to lower id
};

// Selects the k least / most / hardest-to-call examples by tp_mean.
// k must be >= 1 and <= rows.size().
VulnerabilityPartitions partition_vulnerability(const std::vector<VulnerabilityRow>& rows,
                                                uint32_t k);

struct StepBucket {
  uint32_t step = 0;  // last training step that saw the bucket's examples
  double mean_tp = 0.0;
  uint32_t count = 0;
};

// Groups member examples of one model by the last training step that saw
// them and averages tp_mean per step. Examples absent from either input
// are skipped. Buckets ascend by step.
std::vector<StepBucket> vulnerability_by_step(
    const std::vector<VulnerabilityRow>& rows,
    const std::vector<std::pair<uint32_t, uint32_t>>& last_seen);

// CSV rendering "example_id,tp_mean,tp_std,token_len,mean_tfidf,unk_count";
// stats must cover every row's example id.
std::string vulnerability_csv(const std::vector<VulnerabilityRow>& rows,
                              const std::vector<ExampleStats>& stats);

// CSV rendering "step,mean_tp_prob,count".
std::string step_buckets_csv(const std::vector<StepBucket>& buckets);

// Spearman rank correlation with average ranks on ties. Inputs must be the
// same non-zero length; returns 0 when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tinymia

#endif  // TINYMIA_METRICS_HPP_
