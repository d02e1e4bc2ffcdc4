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

#include "tinymia/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tinymia/common.hpp"
#include "tinymia/metrics.hpp"

namespace tinymia {

namespace {

constexpr double kLn10 = 2.302585092994046;

}  // namespace

void ExtractionConfig::validate() const {
  if (top_k == 0) throw ConfigError("extraction: top_k must be at least 1");
  if (prefix_len == 0) {
    throw ConfigError("extraction: prefix_len must be at least 1 (the first token is never predicted)");
  }
  if (suffix_len == 0) throw ConfigError("extraction: suffix_len must be at least 1");
  if (!(target_prob > 0.0) || !(target_prob < 1.0)) {
    throw ConfigError("extraction: target_prob must lie in (0, 1)");
  }
}

double suffix_logprob(const Model& model, const Example& ex, uint32_t prefix_len,
                      uint32_t suffix_len) {
  if (prefix_len == 0) throw ConfigError("extraction: prefix_len must be at least 1");
  if (suffix_len == 0) throw ConfigError("extraction: suffix_len must be at least 1");
  if (ex.real_len < prefix_len + suffix_len) {
    throw ConfigError("example " + std::to_string(ex.id) + " has " +
                      std::to_string(ex.real_len) + " tokens, fewer than prefix + suffix");
  }
  const SignalRecord rec = eval_example(model, ex);
  // token_logprobs[i] scores the token at position i + 1; the suffix spans
  // positions [prefix_len, prefix_len + suffix_len).
  double sum = 0.0;
  for (uint32_t i = prefix_len - 1; i < prefix_len + suffix_len - 1; ++i) {
    sum += rec.token_logprobs[i];
  }
  return sum;
}

double np_attempts(double p_seq, double target_prob) {
  if (!(target_prob > 0.0) || !(target_prob < 1.0)) {
    throw ConfigError("extraction: target_prob must lie in (0, 1)");
  }
  if (!(p_seq >= 0.0) || p_seq > 1.0) {
    throw ConfigError("extraction: p_seq must lie in [0, 1]");
  }
  if (p_seq == 0.0) return std::numeric_limits<double>::infinity();
  if (p_seq == 1.0) return 1.0;
  const double miss = 1.0 - p_seq;
  double n = std::ceil(std::log1p(-target_prob) / std::log1p(-p_seq));
  if (!(n >= 1.0)) n = 1.0;
  // The ratio above carries rounding error of order one ulp, which matters
  // exactly at integer boundaries (e.g. two fair coin flips reaching 0.75).
  // Polish against the defining inequality (1 - p_seq)^n <= 1 - target_prob
  // whenever the base is representable below 1. The polish is only
  // meaningful while pow can resolve adjacent integers: rounding p_seq
  // into the base shifts the tested boundary by ~n^2 * eps steps (and past
  // 2^53 the +-1.0 updates stop moving n at all), so beyond 1e8 the loop
  // would walk noise and the ceil estimate, already within one part in
  // 1e15 of the exact quantile, is returned as is.
  if (miss < 1.0 && n <= 1e8) {
    while (n > 1.0 && std::pow(miss, n - 1.0) <= 1.0 - target_prob) n -= 1.0;
    while (std::pow(miss, n) > 1.0 - target_prob) n += 1.0;
  }
  return n;
}

ExtractionReport extraction_report(const Model& target, const Dataset& ds,
                                   const AttackResult& attack, const ExtractionConfig& cfg) {
  cfg.validate();
  if (attack.rows.empty()) throw PrereqError("extraction: the attack result has no rows");
  if (cfg.prefix_len + cfg.suffix_len > ds.seq_len) {
    throw ConfigError("extraction: prefix + suffix exceeds the sequence length");
  }

  std::vector<const AttackScore*> ranked;
  ranked.reserve(attack.rows.size());
  for (const AttackScore& row : attack.rows) ranked.push_back(&row);
  std::sort(ranked.begin(), ranked.end(), [](const AttackScore* a, const AttackScore* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->example_id < b->example_id;
  });
  if (ranked.size() > cfg.top_k) ranked.resize(cfg.top_k);

  ExtractionReport report;
  report.prefix_len = cfg.prefix_len;
  report.suffix_len = cfg.suffix_len;
  for (const AttackScore* cand : ranked) {
    if (cand->example_id >= ds.examples.size()) {
      throw ConfigError("extraction: attack row " + std::to_string(cand->example_id) +
                        " is outside the dataset");
    }
    const Example& ex = ds.examples[cand->example_id];
    if (ex.real_len < cfg.prefix_len + cfg.suffix_len) {
      ++report.skipped_too_short;
      continue;
    }
    ExtractionRecord rec;
    rec.example_id = cand->example_id;
    rec.is_member = cand->is_member;
    rec.mia_score = cand->score;
    rec.suffix_logprob_nats = suffix_logprob(target, ex, cfg.prefix_len, cfg.suffix_len);
    rec.neg_log10_prob = -rec.suffix_logprob_nats / kLn10;
    rec.n_attempts = np_attempts(std::exp(rec.suffix_logprob_nats), cfg.target_prob);
    if (rec.is_member) ++report.member_count;
    report.rows.push_back(std::move(rec));
  }

  if (report.rows.size() >= 2) {
    std::vector<double> scores, logprobs;
    scores.reserve(report.rows.size());
    logprobs.reserve(report.rows.size());
    for (const ExtractionRecord& rec : report.rows) {
      scores.push_back(rec.mia_score);
      logprobs.push_back(rec.suffix_logprob_nats);
    }
    report.spearman_score_vs_logprob = spearman(scores, logprobs);
  }
  return report;
}

std::string extraction_csv(const ExtractionReport& report) {
  std::string out =
      "example_id,is_member,mia_score,suffix_logprob_nats,neg_log10_prob,n_attempts_p90\n";
  for (const ExtractionRecord& rec : report.rows) {
    out += std::to_string(rec.example_id);
    out += ',';
    out += rec.is_member ? '1' : '0';
    out += ',';
    out += format_double(rec.mia_score);
    out += ',';
    out += format_double(rec.suffix_logprob_nats);
    out += ',';
    out += format_double(rec.neg_log10_prob);
    out += ',';
    out += std::isinf(rec.n_attempts) ? "inf" : format_double(rec.n_attempts);
    out += '\n';
  }
  return out;
}

}  // namespace tinymia
