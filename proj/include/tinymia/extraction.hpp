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

#ifndef TINYMIA_EXTRACTION_HPP_
#define TINYMIA_EXTRACTION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "tinymia/attacks.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/model.hpp"

namespace tinymia {

struct ExtractionConfig {
  uint32_t top_k = 50;       // candidates taken from the top of the attack ranking
  uint32_t prefix_len = 32;  // tokens given to the model as context
  uint32_t suffix_len = 16;  // tokens that must be reproduced
  double target_prob = 0.9;  // desired overall success probability

  void validate() const;
};

// Log-probability (nats) of the example's tokens at positions
// [prefix_len, prefix_len + suffix_len) under teacher forcing, i.e. the
// chance greedy-free sampling emits the exact suffix after the prefix.
// Requires prefix_len >= 1 and real_len >= prefix_len + suffix_len.
double suffix_logprob(const Model& model, const Example& ex, uint32_t prefix_len,
                      uint32_t suffix_len);

// Smallest number of independent sampling attempts n with
// 1 - (1 - p_seq)^n >= target_prob. Exact at boundaries (two fair coin
// flips cover 0.75) while n is small enough for the boundary to be
// resolvable (n <= 1e8); beyond that the closed-form estimate is returned,
// correct to one part in 1e15. p_seq = 0 yields the +infinity sentinel;
// p_seq = 1 yields 1.
double np_attempts(double p_seq, double target_prob);

struct ExtractionRecord {
  uint32_t example_id = 0;
  bool is_member = false;
  double mia_score = 0.0;
  double suffix_logprob_nats = 0.0;
  double neg_log10_prob = 0.0;  // -suffix_logprob / ln(10)
  double n_attempts = 0.0;      // +inf when the suffix probability underflows
};

struct ExtractionReport {
  uint32_t prefix_len = 0;
  uint32_t suffix_len = 0;
  std::vector<ExtractionRecord> rows;  // attack-score descending, ties to lower id
  uint32_t member_count = 0;           // members among rows
  uint32_t skipped_too_short = 0;      // top-k candidates lacking prefix+suffix tokens
  double spearman_score_vs_logprob = 0.0;
};

// Takes the top_k highest-scoring examples of the attack result, measures
// each one's suffix log-probability under the target model, and reports
// the expected sampling effort. Candidates shorter than prefix + suffix
// are skipped and counted, not replaced.
ExtractionReport extraction_report(const Model& target, const Dataset& ds,
                                   const AttackResult& attack, const ExtractionConfig& cfg);

// CSV rendering
// "example_id,is_member,mia_score,suffix_logprob_nats,neg_log10_prob,n_attempts_p90"
// with "inf" for unbounded attempt counts.
std::string extraction_csv(const ExtractionReport& report);

}  // namespace tinymia

#endif  // TINYMIA_EXTRACTION_HPP_
