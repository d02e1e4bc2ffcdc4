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

#ifndef TINYMIA_ATTACKS_HPP_
#define TINYMIA_ATTACKS_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tinymia/corpus.hpp"
#include "tinymia/scorestore.hpp"

namespace tinymia {

enum class AttackKind : uint32_t {
  kLossBaseline = 0,
  kLiraOnline = 1,
  kLiraOffline = 2,
  kRmiaSimple = 3,
  kRmiaOnline = 4,
  kRmiaOffline = 5,
};

const char* attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::kLossBaseline;
  SignalKind signal = SignalKind::kLoss;
  double variance_floor = 1e-6;
  double gamma = 1.0;  // ratio threshold for the indicator-sum attacks
  // Held-out population for kRmiaOnline/kRmiaOffline; audited examples are
  // everything else. Must be non-empty for those kinds.
  std::vector<uint32_t> z_population;
  // Per-example cap on IN and OUT references (lowest model ids first);
  // 0 = use all. Applies to the Gaussian-fit attacks, enabling sweeps over
  // the reference budget.
  uint32_t max_refs_per_side = 0;

  void validate(uint64_t num_examples) const;
};

struct GaussianFit {
  double mu = 0.0;
  double sigma = 0.0;  // >= the variance floor
};

struct AttackScore {
  uint32_t example_id = 0;
  double score = 0.0;  // higher = more member-like
  bool is_member = false;
};

struct AttackResult {
  AttackKind kind = AttackKind::kLossBaseline;
  SignalKind signal = SignalKind::kLoss;
  uint32_t target_model = 0;
  std::vector<AttackScore> rows;       // one per scored audited example, id ascending
  std::vector<uint32_t> excluded_ids;  // audited examples with insufficient references
};

// Orients a raw signal so that larger = more member-like (loss is negated,
// mean-logit passes through).
double normalize_signal(SignalKind kind, double raw);

// Mean and unbiased standard deviation, with sigma floored away from
// degeneracy. Samples are accumulated in sorted order, so the fit is
// invariant to input permutation, bit for bit. n < 2 is rejected.
GaussianFit fit_gaussian(const std::vector<double>& samples, double variance_floor);

// Log density ratio log N(t; in) - log N(t; out).
double lira_online_score(double t, const GaussianFit& in_fit, const GaussianFit& out_fit);

// One-sided calibration against the OUT fit alone: the probability mass of
// the OUT fit at or below t (1 minus the upper-tail p-value), increasing
// in t, 0.5 at the OUT mean.
double lira_offline_score(double t, const GaussianFit& out_fit);

// Ratio of the target's positive-scale signal to the reference mean.
// Reference signals are averaged in sorted order (permutation-invariant).
double rmia_alpha(double target_positive, const std::vector<double>& ref_positive);

// Fraction of the comparison population dominated at ratio gamma.
double rmia_score(double alpha_target, const std::vector<double>& alpha_z, double gamma);

// Runs one attack against one target model, leave-one-out over the farm:
// every other row of `scores` is a reference model, IN/OUT per example as
// `mm` says. Gaussian-fit kinds need >= 2 IN and >= 2 OUT references per
// example (offline: >= 2 OUT); examples below that are excluded and
// reported. Scores are validated finite.
AttackResult run_attack(const ScoreMatrix& scores, const MembershipMatrix& mm,
                        uint32_t target_model, const AttackConfig& cfg);

// Fixed decision threshold for "predicted member" per attack kind (log-LR
// 0 for the density-ratio attack, probability 0.5 for the calibrated
// kinds, ratio 1 for the plain ratio). The uncalibrated loss baseline has
// none and is rejected.
double member_threshold(AttackKind kind);

// CSV rendering "example_id,score,is_member".
std::string attack_csv(const AttackResult& result);

}  // namespace tinymia

#endif  // TINYMIA_ATTACKS_HPP_
