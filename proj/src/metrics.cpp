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

#include "tinymia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "tinymia/common.hpp"

namespace tinymia {

RocCurve roc(const std::vector<AttackScore>& rows) {
  uint64_t n_pos = 0;
  for (const AttackScore& r : rows) {
    if (!std::isfinite(r.score)) {
      throw NumericError("roc input has a non-finite score at example " +
                         std::to_string(r.example_id));
    }
    if (r.is_member) ++n_pos;
  }
  const uint64_t n_neg = rows.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ConfigError("roc needs at least one member and one non-member row");
  }

  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(rows.size());
  for (const AttackScore& r : rows) sorted.emplace_back(r.score, r.is_member);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.n_pos = n_pos;
  curve.n_neg = n_neg;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);

  // Walk distinct scores high to low; each group adds one vertex. The area
  // is twice the trapezoid sum, kept in integers: every group contributes
  // fp_step * (tp_before + tp_after).
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t twice_area = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double s = sorted[i].first;
    uint64_t tp_step = 0;
    uint64_t fp_step = 0;
    while (i < sorted.size() && sorted[i].first == s) {
      if (sorted[i].second) {
        ++tp_step;
      } else {
        ++fp_step;
      }
      ++i;
    }
    twice_area += fp_step * (2 * tp + tp_step);
    tp += tp_step;
    fp += fp_step;
    curve.thresholds.push_back(s);
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
  }
  curve.auc = static_cast<double>(twice_area) /
              (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

double tpr_at_fpr(const RocCurve& curve, double fpr_target) {
  if (!(fpr_target > 0.0) || fpr_target > 1.0) {
    throw ConfigError("fpr target must lie in (0, 1]");
  }
  double best = 0.0;
  for (size_t i = 0; i < curve.fpr.size(); ++i) {
    if (curve.fpr[i] <= fpr_target) best = curve.tpr[i];
  }
  return best;
}

std::string roc_tsv(const RocCurve& curve) {
  std::string out = "fpr\ttpr\n";
  for (size_t i = 0; i < curve.fpr.size(); ++i) {
    out += format_double(curve.fpr[i]);
    out += '\t';
    out += format_double(curve.tpr[i]);
    out += '\n';
  }
  return out;
}

VulnerabilityReport per_example_tp_prob(const ScoreMatrix& scores, const MembershipMatrix& mm,
                                        const AttackConfig& cfg, uint32_t parallelism) {
  if (parallelism == 0) {
    throw ConfigError("parallelism must be at least 1");
  }
  const double threshold = member_threshold(cfg.kind);
  const uint32_t num_models = scores.num_models;
  const uint64_t n = scores.num_examples;

  struct Tally {
    std::vector<uint32_t> trials;
    std::vector<uint32_t> successes;
    uint64_t excluded = 0;
    std::exception_ptr error;
  };
  const uint32_t workers = std::min<uint32_t>(parallelism, std::max<uint32_t>(num_models, 1));
  std::vector<Tally> tallies(workers);
  for (Tally& t : tallies) {
    t.trials.assign(n, 0);
    t.successes.assign(n, 0);
  }

  // Each worker owns the targets with model id % workers == its index and
  // accumulates integer counts locally; merging below is order-free
  // addition, so any worker count produces identical output.
  auto run_targets = [&](uint32_t w) {
    Tally& tally = tallies[w];
    try {
      for (uint32_t target = w; target < num_models; target += workers) {
        const AttackResult res = run_attack(scores, mm, target, cfg);
        tally.excluded += res.excluded_ids.size();
        for (const AttackScore& row : res.rows) {
          if (!row.is_member) continue;
          ++tally.trials[row.example_id];
          if (row.score > threshold) ++tally.successes[row.example_id];
        }
      }
    } catch (...) {
      tally.error = std::current_exception();
    }
  };

  if (workers == 1) {
    run_targets(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (uint32_t w = 0; w < workers; ++w) pool.emplace_back(run_targets, w);
    for (std::thread& t : pool) t.join();
  }
  for (const Tally& t : tallies) {
    if (t.error) std::rethrow_exception(t.error);
  }

  VulnerabilityReport report;
  for (uint64_t x = 0; x < n; ++x) {
    uint32_t trials = 0;
    uint32_t successes = 0;
    for (const Tally& t : tallies) {
      trials += t.trials[x];
      successes += t.successes[x];
    }
    if (trials == 0) {
      report.never_member.push_back(static_cast<uint32_t>(x));
      continue;
    }
    VulnerabilityRow row;
    row.example_id = static_cast<uint32_t>(x);
    row.trials = trials;
    row.successes = successes;
    const double p = static_cast<double>(successes) / static_cast<double>(trials);
    row.tp_mean = p;
    // Population std of a binary sample: sqrt(p (1 - p)); zero if trials == 1.
    row.tp_std = trials > 1 ? std::sqrt(p * (1.0 - p)) : 0.0;
    report.rows.push_back(row);
  }
  for (const Tally& t : tallies) report.per_attack_excluded += t.excluded;
  // Pooled counters are accumulated from the raw integers, independently of
  // the per-row means, so the trial-weighted identity is testable.
  for (const VulnerabilityRow& row : report.rows) {
    report.total_trials += row.trials;
    report.total_successes += row.successes;
  }
  return report;
}

VulnerabilityPartitions partition_vulnerability(const std::vector<VulnerabilityRow>& rows,
                                                uint32_t k) {
  if (k == 0 || static_cast<size_t>(k) > rows.size()) {
    throw ConfigError("partition size k must lie in [1, rows]");
  }
  VulnerabilityPartitions parts;
  parts.k = k;

  auto pick = [&](auto cmp) {
    std::vector<uint32_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), cmp);
    std::vector<uint32_t> ids;
    ids.reserve(k);
    for (uint32_t i = 0; i < k; ++i) ids.push_back(rows[idx[i]].example_id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };

  parts.least = pick([&](uint32_t a, uint32_t b) {
    if (rows[a].tp_mean != rows[b].tp_mean) return rows[a].tp_mean < rows[b].tp_mean;
    return rows[a].example_id < rows[b].example_id;
  });
  parts.most = pick([&](uint32_t a, uint32_t b) {
    if (rows[a].tp_mean != rows[b].tp_mean) return rows[a].tp_mean > rows[b].tp_mean;
    return rows[a].example_id < rows[b].example_id;
  });
  parts.hardest = pick([&](uint32_t a, uint32_t b) {
    const double da = std::abs(rows[a].tp_mean - 0.5);
    const double db = std::abs(rows[b].tp_mean - 0.5);
    if (da != db) return da < db;
    return rows[a].example_id < rows[b].example_id;
  });
  return parts;
}

std::vector<StepBucket> vulnerability_by_step(
    const std::vector<VulnerabilityRow>& rows,
    const std::vector<std::pair<uint32_t, uint32_t>>& last_seen) {
  std::unordered_map<uint32_t, uint32_t> step_of;
  step_of.reserve(last_seen.size());
  for (const auto& [id, step] : last_seen) step_of.emplace(id, step);

  std::unordered_map<uint32_t, std::pair<double, uint32_t>> acc;  // step -> (sum, count)
  for (const VulnerabilityRow& row : rows) {
    auto it = step_of.find(row.example_id);
    if (it == step_of.end()) continue;
    auto& slot = acc[it->second];
    slot.first += row.tp_mean;
    slot.second += 1;
  }

  std::vector<StepBucket> buckets;
  buckets.reserve(acc.size());
  for (const auto& [step, slot] : acc) {
    StepBucket b;
    b.step = step;
    b.mean_tp = slot.first / static_cast<double>(slot.second);
    b.count = slot.second;
    buckets.push_back(b);
  }
  std::sort(buckets.begin(), buckets.end(),
            [](const StepBucket& a, const StepBucket& b) { return a.step < b.step; });
  return buckets;
}

std::string vulnerability_csv(const std::vector<VulnerabilityRow>& rows,
                              const std::vector<ExampleStats>& stats) {
  std::unordered_map<uint32_t, const ExampleStats*> by_id;
  by_id.reserve(stats.size());
  for (const ExampleStats& s : stats) by_id.emplace(s.id, &s);

  std::string out = "example_id,tp_mean,tp_std,token_len,mean_tfidf,unk_count\n";
  for (const VulnerabilityRow& row : rows) {
    auto it = by_id.find(row.example_id);
    if (it == by_id.end()) {
      throw ConfigError("no stats for example " + std::to_string(row.example_id));
    }
    const ExampleStats& s = *it->second;
    out += std::to_string(row.example_id);
    out += ',';
    out += format_double(row.tp_mean);
    out += ',';
    out += format_double(row.tp_std);
    out += ',';
    out += std::to_string(s.token_len);
    out += ',';
    out += format_double(s.mean_tfidf);
    out += ',';
    out += std::to_string(s.unk_count);
    out += '\n';
  }
  return out;
}

std::string step_buckets_csv(const std::vector<StepBucket>& buckets) {
  std::string out = "step,mean_tp_prob,count\n";
  for (const StepBucket& b : buckets) {
    out += std::to_string(b.step);
    out += ',';
    out += format_double(b.mean_tp);
    out += ',';
    out += std::to_string(b.count);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && v[idx[j]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;  // 1-based average rank
    for (size_t t = i; t < j; ++t) ranks[idx[t]] = r;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ConfigError("rank correlation needs two equal-length non-empty vectors");
  }
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace tinymia
