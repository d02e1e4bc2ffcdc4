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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "tinymia/attacks.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/metrics.hpp"
#include "tinymia/scorestore.hpp"

using namespace tinymia;

namespace {

// Pairwise Mann-Whitney AUC, the independent oracle: every (member,
// non-member) pair contributes 1 if the member outranks, 1/2 on a tie.
double brute_force_auc(const std::vector<AttackScore>& rows) {
  double num = 0.0;
  uint64_t pairs = 0;
  for (const AttackScore& p : rows) {
    if (!p.is_member) continue;
    for (const AttackScore& q : rows) {
      if (q.is_member) continue;
      ++pairs;
      if (p.score > q.score) {
        num += 1.0;
      } else if (p.score == q.score) {
        num += 0.5;
      }
    }
  }
  return num / static_cast<double>(pairs);
}

std::vector<AttackScore> random_rows(std::mt19937_64& rng, size_t n, int distinct) {
  std::uniform_int_distribution<int> level(0, distinct - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<AttackScore> rows(n);
  for (size_t i = 0; i < n; ++i) {
    rows[i] = {static_cast<uint32_t>(i), 0.25 * level(rng) - 1.0, coin(rng)};
  }
  return rows;
}

bool has_both_labels(const std::vector<AttackScore>& rows) {
  bool pos = false;
  bool neg = false;
  for (const AttackScore& r : rows) (r.is_member ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

TEST_CASE("roc AUC equals the pairwise oracle on random tied instances") {
  std::mt19937_64 rng(6021);
  int tested = 0;
  while (tested < 200) {
    std::uniform_int_distribution<size_t> size(2, 40);
    std::uniform_int_distribution<int> levels(1, 6);
    const std::vector<AttackScore> rows = random_rows(rng, size(rng), levels(rng) + 1);
    if (!has_both_labels(rows)) continue;
    ++tested;
    const RocCurve c = roc(rows);
    CHECK(c.auc == doctest::Approx(brute_force_auc(rows)).epsilon(1e-12));
  }
}

TEST_CASE("roc endpoints, monotonicity, and tie collapsing") {
  std::vector<AttackScore> rows = {
      {0, 3.0, true}, {1, 3.0, false}, {2, 1.0, true}, {3, 1.0, false},
      {4, 2.0, true}, {5, 2.0, true},  {6, 2.0, false},
  };
  const RocCurve c = roc(rows);
  // One vertex per distinct score {3,2,1} plus the sentinel.
  REQUIRE(c.thresholds.size() == 4);
  CHECK(c.thresholds[0] == std::numeric_limits<double>::infinity());
  CHECK(c.fpr.front() == 0.0);
  CHECK(c.tpr.front() == 0.0);
  CHECK(c.fpr.back() == 1.0);
  CHECK(c.tpr.back() == 1.0);
  for (size_t i = 1; i < c.thresholds.size(); ++i) {
    CHECK(c.thresholds[i] < c.thresholds[i - 1]);
    CHECK(c.fpr[i] >= c.fpr[i - 1]);
    CHECK(c.tpr[i] >= c.tpr[i - 1]);
  }
  CHECK(c.n_pos == 4);
  CHECK(c.n_neg == 3);

  SUBCASE("all-equal scores collapse to the chance diagonal") {
    for (AttackScore& r : rows) r.score = 7.5;
    const RocCurve flat = roc(rows);
    CHECK(flat.thresholds.size() == 2);
    CHECK(flat.auc == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("roc extremes and input validation") {
  SUBCASE("perfect separation") {
    std::vector<AttackScore> rows;
    for (uint32_t i = 0; i < 50; ++i) rows.push_back({i, 10.0 + i, true});
    for (uint32_t i = 50; i < 100; ++i) rows.push_back({i, -10.0 - i, false});
    CHECK(roc(rows).auc == doctest::Approx(1.0).epsilon(1e-15));
    for (AttackScore& r : rows) r.score = -r.score;
    CHECK(roc(rows).auc == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("random labels sit at chance") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<AttackScore> rows(10000);
    for (uint32_t i = 0; i < rows.size(); ++i) {
      rows[i] = {i, dist(rng), coin(rng)};
    }
    CHECK(std::abs(roc(rows).auc - 0.5) < 0.02);
  }
  SUBCASE("degenerate labels rejected") {
    CHECK_THROWS_AS(roc({}), ConfigError);
    CHECK_THROWS_AS(roc({{0, 1.0, true}, {1, 2.0, true}}), ConfigError);
    CHECK_THROWS_AS(roc({{0, 1.0, false}}), ConfigError);
  }
  SUBCASE("non-finite scores rejected") {
    CHECK_THROWS_AS(roc({{0, std::nan(""), true}, {1, 0.0, false}}), NumericError);
    CHECK_THROWS_AS(
        roc({{0, std::numeric_limits<double>::infinity(), true}, {1, 0.0, false}}),
        NumericError);
  }
}

TEST_CASE("roc is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(17);
  const std::vector<AttackScore> rows = random_rows(rng, 200, 9);
  REQUIRE(has_both_labels(rows));
  const RocCurve base = roc(rows);
  auto transformed = rows;
  for (AttackScore& r : transformed) r.score = std::tanh(r.score) * 3.0 + 11.0;
  const RocCurve t = roc(transformed);
  CHECK(base.auc == t.auc);
  CHECK(base.fpr == t.fpr);
  CHECK(base.tpr == t.tpr);
}

TEST_CASE("tpr at a fixed fpr budget follows the step curve") {
  // 4 members at {4,3,2,1}, 4 non-members at {3.5, 2.5, 1.5, 0.5}.
  std::vector<AttackScore> rows = {
      {0, 4.0, true},  {1, 3.0, true},  {2, 2.0, true},  {3, 1.0, true},
      {4, 3.5, false}, {5, 2.5, false}, {6, 1.5, false}, {7, 0.5, false},
  };
  const RocCurve c = roc(rows);
  // Achieved FPRs are k/4; between steps the last achieved vertex rules.
  CHECK(tpr_at_fpr(c, 0.25) == doctest::Approx(0.5));
  CHECK(tpr_at_fpr(c, 0.30) == doctest::Approx(0.5));
  CHECK(tpr_at_fpr(c, 0.50) == doctest::Approx(0.75));
  CHECK(tpr_at_fpr(c, 1.00) == doctest::Approx(1.0));
  // A budget below the first achieved nonzero FPR falls back to the
  // zero-FPR vertex: only the top member scores above every non-member.
  CHECK(tpr_at_fpr(c, 0.20) == doctest::Approx(0.25));
  CHECK_THROWS_AS(tpr_at_fpr(c, 0.0), ConfigError);
  CHECK_THROWS_AS(tpr_at_fpr(c, -0.1), ConfigError);
  CHECK_THROWS_AS(tpr_at_fpr(c, 1.0001), ConfigError);
}

TEST_CASE("roc TSV rendering") {
  const std::vector<AttackScore> rows = {{0, 2.0, true}, {1, 1.0, false}};
  CHECK(roc_tsv(roc(rows)) == "fpr\ttpr\n0\t0\n0\t1\n1\t1\n");
}

TEST_CASE("leave-one-out vulnerability sweep") {
  // Planted signal: members sit far above non-members, so the offline
  // attack should call every trial correctly.
  const uint32_t M = 8;
  const uint64_t N = 64;
  ScoreMatrix sm(SignalKind::kLoss, M, N);
  MembershipMatrix mm = assign_membership(5150, M, N);
  // Example 60: member everywhere (always excluded by the offline rule).
  // Example 61: member nowhere (zero trials).
  for (uint32_t m = 0; m < M; ++m) {
    mm.set(m, 60, true);
    mm.set(m, 61, false);
  }
  std::mt19937_64 rng(64);
  std::normal_distribution<float> in_loss(1.0f, 0.05f);
  std::normal_distribution<float> out_loss(3.0f, 0.05f);
  for (uint32_t m = 0; m < M; ++m) {
    for (uint64_t x = 0; x < N; ++x) {
      sm.set(m, x, mm.get(m, x) ? in_loss(rng) : out_loss(rng));
    }
  }
  AttackConfig cfg;
  cfg.kind = AttackKind::kLiraOffline;

  const VulnerabilityReport rep = per_example_tp_prob(sm, mm, cfg, 1);

  SUBCASE("planted members are always detected") {
    for (const VulnerabilityRow& row : rep.rows) {
      CHECK(row.tp_mean == doctest::Approx(1.0));
      CHECK(row.successes == row.trials);
      CHECK(row.tp_std == 0.0);
      CHECK(row.trials >= 1);
    }
  }
  SUBCASE("zero-trial examples are reported separately") {
    // 61 never trains; 60 is excluded from every run, so neither has trials.
    CHECK(std::find(rep.never_member.begin(), rep.never_member.end(), 61u) !=
          rep.never_member.end());
    CHECK(std::find(rep.never_member.begin(), rep.never_member.end(), 60u) !=
          rep.never_member.end());
    for (const VulnerabilityRow& row : rep.rows) {
      CHECK(row.example_id != 60);
      CHECK(row.example_id != 61);
    }
    // Example 60 lacks OUT references w.r.t. every one of the 8 targets.
    CHECK(rep.per_attack_excluded >= M);
  }
  SUBCASE("pooled counters obey the trial-weighted identity") {
    uint64_t trials = 0;
    double weighted = 0.0;
    for (const VulnerabilityRow& row : rep.rows) {
      trials += row.trials;
      weighted += row.tp_mean * static_cast<double>(row.trials);
    }
    CHECK(trials == rep.total_trials);
    CHECK(weighted == doctest::Approx(static_cast<double>(rep.total_successes)).epsilon(1e-9));
  }
  SUBCASE("worker count never changes the result") {
    for (uint32_t par : {2u, 3u, 8u, 32u}) {
      const VulnerabilityReport alt = per_example_tp_prob(sm, mm, cfg, par);
      REQUIRE(alt.rows.size() == rep.rows.size());
      for (size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(alt.rows[i].example_id == rep.rows[i].example_id);
        CHECK(alt.rows[i].tp_mean == rep.rows[i].tp_mean);  // bit-exact
        CHECK(alt.rows[i].tp_std == rep.rows[i].tp_std);
        CHECK(alt.rows[i].trials == rep.rows[i].trials);
        CHECK(alt.rows[i].successes == rep.rows[i].successes);
      }
      CHECK(alt.never_member == rep.never_member);
      CHECK(alt.total_trials == rep.total_trials);
      CHECK(alt.total_successes == rep.total_successes);
      CHECK(alt.per_attack_excluded == rep.per_attack_excluded);
    }
  }
  SUBCASE("zero workers rejected") {
    CHECK_THROWS_AS(per_example_tp_prob(sm, mm, cfg, 0), ConfigError);
  }
  SUBCASE("the uncalibrated baseline has no threshold to sweep") {
    AttackConfig bad;
    bad.kind = AttackKind::kLossBaseline;
    CHECK_THROWS_AS(per_example_tp_prob(sm, mm, bad, 1), ConfigError);
  }
}

TEST_CASE("vulnerability tallies on a hand-built instance") {
  // 4 models, 2 examples, offline attack (threshold 0.5). Example 0 is a
  // member of models {0,1}; example 1 of models {2,3}. Scores are set so a
  // member run lands far above its OUT fit and a non-member run far below.
  ScoreMatrix sm(SignalKind::kLoss, 4, 2);
  MembershipMatrix mm(4, 2);
  for (uint32_t m = 0; m < 4; ++m) {
    mm.set(m, 0, m < 2);
    mm.set(m, 1, m >= 2);
    sm.set(m, 0, m < 2 ? 1.0f : 3.0f + 0.1f * m);
    sm.set(m, 1, m >= 2 ? 1.0f : 3.0f + 0.1f * m);
  }
  AttackConfig cfg;
  cfg.kind = AttackKind::kLiraOffline;
  const VulnerabilityReport rep = per_example_tp_prob(sm, mm, cfg, 1);
  // W.r.t. either of its member targets an example keeps two OUT
  // references, so its trials all run; w.r.t. a non-member target only one
  // OUT reference remains and the (non-member) row is excluded. That is
  // one exclusion per (target, opposite example): four in total, none of
  // which touches a trial.
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.per_attack_excluded == 4);
  CHECK(rep.rows[0].example_id == 0);
  CHECK(rep.rows[0].trials == 2);
  CHECK(rep.rows[0].successes == 2);
  CHECK(rep.rows[1].trials == 2);
  CHECK(rep.total_trials == 4);
  CHECK(rep.total_successes == 4);
  CHECK(rep.never_member.empty());
}

TEST_CASE("partitioning by vulnerability") {
  const std::vector<VulnerabilityRow> rows = {
      {10, 0.9, 0.0, 4, 4}, {11, 0.1, 0.0, 4, 0}, {12, 0.5, 0.0, 4, 2},
      {13, 0.9, 0.0, 4, 4}, {14, 0.4, 0.0, 4, 2},
  };
  const VulnerabilityPartitions p = partition_vulnerability(rows, 2);
  CHECK(p.k == 2);
  CHECK(p.least == std::vector<uint32_t>{11, 14});
  // tp_mean 0.9 ties between ids 10 and 13: the lower id wins.
  CHECK(p.most == std::vector<uint32_t>{10, 13});
  CHECK(p.hardest == std::vector<uint32_t>{12, 14});

  SUBCASE("tie on the hardest distance also resolves to the lower id") {
    // 0.4 and 0.6 are equally far from one half.
    const std::vector<VulnerabilityRow> t = {
        {5, 0.6, 0.0, 1, 1}, {3, 0.4, 0.0, 1, 0}, {9, 0.5, 0.0, 1, 1}};
    const VulnerabilityPartitions q = partition_vulnerability(t, 2);
    CHECK(q.hardest == std::vector<uint32_t>{3, 9});
  }
  SUBCASE("k bounds") {
    CHECK_THROWS_AS(partition_vulnerability(rows, 0), ConfigError);
    CHECK_THROWS_AS(partition_vulnerability(rows, 6), ConfigError);
    CHECK(partition_vulnerability(rows, 5).least.size() == 5);
  }
}

TEST_CASE("grouping vulnerability by last-seen training step") {
  const std::vector<VulnerabilityRow> rows = {
      {0, 1.0, 0.0, 2, 2}, {1, 0.5, 0.0, 2, 1}, {2, 0.0, 0.0, 2, 0}, {3, 0.25, 0.0, 4, 1},
  };
  const std::vector<std::pair<uint32_t, uint32_t>> last_seen = {
      {0, 100}, {1, 100}, {2, 40}, {7, 40},  // id 7 has no row: ignored
  };                                         // id 3 has no step: skipped
  const std::vector<StepBucket> buckets = vulnerability_by_step(rows, last_seen);
  REQUIRE(buckets.size() == 2);
  CHECK(buckets[0].step == 40);
  CHECK(buckets[0].count == 1);
  CHECK(buckets[0].mean_tp == doctest::Approx(0.0));
  CHECK(buckets[1].step == 100);
  CHECK(buckets[1].count == 2);
  CHECK(buckets[1].mean_tp == doctest::Approx(0.75));
  CHECK(step_buckets_csv(buckets) == "step,mean_tp_prob,count\n40,0,1\n100,0.75,2\n");
}

TEST_CASE("vulnerability CSV rendering") {
  const std::vector<VulnerabilityRow> rows = {{2, 0.5, 0.25, 4, 2}};
  std::vector<ExampleStats> stats(1);
  stats[0].id = 2;
  stats[0].token_len = 17;
  stats[0].mean_tfidf = 1.5;
  stats[0].unk_count = 3;
  CHECK(vulnerability_csv(rows, stats) ==
        "example_id,tp_mean,tp_std,token_len,mean_tfidf,unk_count\n2,0.5,0.25,17,1.5,3\n");
  SUBCASE("missing stats are an error") {
    const std::vector<VulnerabilityRow> extra = {{2, 0.5, 0.25, 4, 2}, {5, 1.0, 0.0, 1, 1}};
    CHECK_THROWS_AS(vulnerability_csv(extra, stats), ConfigError);
  }
}

TEST_CASE("rank correlation") {
  SUBCASE("monotone agreement and disagreement") {
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    CHECK(spearman(a, {10.0, 20.0, 30.0, 40.0}) == doctest::Approx(1.0));
    CHECK(spearman(a, {8.0, 4.0, 2.0, 1.0}) == doctest::Approx(-1.0));
    // Nonlinear but strictly increasing still correlates perfectly.
    CHECK(spearman(a, {std::exp(1.0), std::exp(2.0), std::exp(3.0), std::exp(4.0)}) ==
          doctest::Approx(1.0));
  }
  SUBCASE("average ranks on ties") {
    // Ranks of a: {1, 2.5, 2.5, 4}; the closed form gives sqrt(0.9).
    CHECK(spearman({1.0, 2.0, 2.0, 3.0}, {10.0, 20.0, 30.0, 40.0}) ==
          doctest::Approx(std::sqrt(0.9)).epsilon(1e-12));
  }
  SUBCASE("constant input yields zero") {
    CHECK(spearman({5.0, 5.0, 5.0}, {1.0, 2.0, 3.0}) == 0.0);
  }
  SUBCASE("shape validation") {
    CHECK_THROWS_AS(spearman({}, {}), ConfigError);
    CHECK_THROWS_AS(spearman({1.0}, {1.0, 2.0}), ConfigError);
  }
}
