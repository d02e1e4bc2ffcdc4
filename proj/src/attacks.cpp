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

#include "tinymia/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "tinymia/common.hpp"

namespace tinymia {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;

bool is_gaussian_kind(AttackKind kind) {
  return kind == AttackKind::kLiraOnline || kind == AttackKind::kLiraOffline;
}

bool is_ratio_population_kind(AttackKind kind) {
  return kind == AttackKind::kRmiaOnline || kind == AttackKind::kRmiaOffline;
}

double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("attack produced a non-finite ") + what);
  }
}

}  // namespace

const char* attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kLossBaseline:
      return "loss_baseline";
    case AttackKind::kLiraOnline:
      return "lira_online";
    case AttackKind::kLiraOffline:
      return "lira_offline";
    case AttackKind::kRmiaSimple:
      return "rmia_simple";
    case AttackKind::kRmiaOnline:
      return "rmia_online";
    case AttackKind::kRmiaOffline:
      return "rmia_offline";
  }
  throw ConfigError("unknown attack kind value");
}

AttackKind attack_kind_from_name(std::string_view name) {
  if (name == "loss_baseline") return AttackKind::kLossBaseline;
  if (name == "lira_online") return AttackKind::kLiraOnline;
  if (name == "lira_offline") return AttackKind::kLiraOffline;
  if (name == "rmia_simple") return AttackKind::kRmiaSimple;
  if (name == "rmia_online") return AttackKind::kRmiaOnline;
  if (name == "rmia_offline") return AttackKind::kRmiaOffline;
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate(uint64_t num_examples) const {
  attack_kind_name(kind);  // rejects out-of-range values
  if (!(variance_floor > 0.0) || !std::isfinite(variance_floor)) {
    throw ConfigError("variance_floor must be positive and finite");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ConfigError("gamma must be positive and finite");
  }
  if (is_ratio_population_kind(kind)) {
    if (z_population.empty()) {
      throw ConfigError(std::string(attack_kind_name(kind)) +
                        " needs a non-empty comparison population");
    }
    std::vector<uint32_t> sorted = z_population;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("comparison population has duplicate example ids");
    }
    if (sorted.back() >= num_examples) {
      throw ConfigError("comparison population id " + std::to_string(sorted.back()) +
                        " is out of range");
    }
    if (static_cast<uint64_t>(sorted.size()) >= num_examples) {
      throw ConfigError("comparison population leaves no audited examples");
    }
  } else if (!z_population.empty()) {
    throw ConfigError(std::string(attack_kind_name(kind)) +
                      " does not take a comparison population");
  }
}

double normalize_signal(SignalKind kind, double raw) {
  switch (kind) {
    case SignalKind::kLoss:
      return -raw;
    case SignalKind::kMeanLogit:
      return raw;
  }
  throw ConfigError("unknown signal kind value");
}

GaussianFit fit_gaussian(const std::vector<double>& samples, double variance_floor) {
  if (samples.size() < 2) {
    throw ConfigError("gaussian fit needs at least 2 samples, got " +
                      std::to_string(samples.size()));
  }
  if (!(variance_floor > 0.0)) {
    throw ConfigError("variance_floor must be positive");
  }
  std::vector<double> v = samples;
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mu = sum / n;
  double ss = 0.0;
  for (double x : v) {
    const double d = x - mu;
    ss += d * d;
  }
  GaussianFit fit;
  fit.mu = mu;
  fit.sigma = std::max(std::sqrt(ss / (n - 1.0)), variance_floor);
  return fit;
}

double lira_online_score(double t, const GaussianFit& in_fit, const GaussianFit& out_fit) {
  const double zi = (t - in_fit.mu) / in_fit.sigma;
  const double zo = (t - out_fit.mu) / out_fit.sigma;
  return (-0.5 * zi * zi - std::log(in_fit.sigma)) -
         (-0.5 * zo * zo - std::log(out_fit.sigma));
}

double lira_offline_score(double t, const GaussianFit& out_fit) {
  const double z = (t - out_fit.mu) / out_fit.sigma;
  // Standard normal CDF at z.
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

double rmia_alpha(double target_positive, const std::vector<double>& ref_positive) {
  if (ref_positive.empty()) {
    throw ConfigError("alpha ratio needs at least one reference signal");
  }
  const double denom = sorted_mean(ref_positive);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw NumericError("reference mean is not positive and finite");
  }
  return target_positive / denom;
}

double rmia_score(double alpha_target, const std::vector<double>& alpha_z, double gamma) {
  if (alpha_z.empty()) {
    throw ConfigError("ratio attack needs a non-empty comparison population");
  }
  uint64_t dominated = 0;
  for (double az : alpha_z) {
    if (!(az > 0.0) || !std::isfinite(az)) {
      throw NumericError("comparison alpha is not positive and finite");
    }
    if (alpha_target / az >= gamma) ++dominated;
  }
  return static_cast<double>(dominated) / static_cast<double>(alpha_z.size());
}

namespace {

// Normalized signal of example x under model m.
double norm_at(const ScoreMatrix& scores, uint32_t m, uint64_t x) {
  return normalize_signal(scores.kind, static_cast<double>(scores.at(m, x)));
}

// Collects normalized reference signals for one example, split by the
// example's membership in each reference model. Reference model ids ascend,
// so a per-side cap keeps the lowest ids.
void collect_refs(const ScoreMatrix& scores, const MembershipMatrix& mm,
                  uint32_t target_model, uint64_t x, uint32_t max_per_side,
                  std::vector<double>* in_refs, std::vector<double>* out_refs) {
  in_refs->clear();
  out_refs->clear();
  for (uint32_t m = 0; m < scores.num_models; ++m) {
    if (m == target_model) continue;
    std::vector<double>* side = mm.get(m, x) ? in_refs : out_refs;
    if (max_per_side != 0 && side->size() >= max_per_side) continue;
    side->push_back(norm_at(scores, m, x));
  }
}

struct AlphaEntry {
  double alpha = 0.0;
  bool usable = false;
};

// Alpha ratio for one example, or unusable when the reference set for this
// kind is empty (offline restricts references to models where the example
// is OUT).
AlphaEntry alpha_for(const ScoreMatrix& scores, const MembershipMatrix& mm,
                     uint32_t target_model, uint64_t x, bool out_refs_only) {
  std::vector<double> refs;
  refs.reserve(scores.num_models);
  for (uint32_t m = 0; m < scores.num_models; ++m) {
    if (m == target_model) continue;
    if (out_refs_only && mm.get(m, x)) continue;
    refs.push_back(std::exp(norm_at(scores, m, x)));
  }
  AlphaEntry e;
  if (refs.empty()) return e;
  e.alpha = rmia_alpha(std::exp(norm_at(scores, target_model, x)), refs);
  e.usable = true;
  return e;
}

}  // namespace

AttackResult run_attack(const ScoreMatrix& scores, const MembershipMatrix& mm,
                        uint32_t target_model, const AttackConfig& cfg) {
  if (scores.num_models != mm.num_models() || scores.num_examples != mm.num_examples()) {
    throw ConfigError("score matrix and membership matrix dimensions disagree");
  }
  if (target_model >= scores.num_models) {
    throw ConfigError("target model " + std::to_string(target_model) + " is out of range");
  }
  if (cfg.kind != AttackKind::kLossBaseline && scores.num_models < 2) {
    throw ConfigError("reference-based attacks need at least 2 models");
  }
  if (cfg.signal != scores.kind) {
    throw ConfigError("attack signal kind does not match the score matrix");
  }
  cfg.validate(scores.num_examples);

  const uint64_t n = scores.num_examples;
  std::vector<bool> is_z(n, false);
  if (is_ratio_population_kind(cfg.kind)) {
    for (uint32_t z : cfg.z_population) is_z[z] = true;
  }

  AttackResult result;
  result.kind = cfg.kind;
  result.signal = cfg.signal;
  result.target_model = target_model;

  auto push_row = [&](uint64_t x, double score) {
    require_finite(score, "score");
    AttackScore row;
    row.example_id = static_cast<uint32_t>(x);
    row.score = score;
    row.is_member = mm.get(target_model, x);
    result.rows.push_back(row);
  };

  switch (cfg.kind) {
    case AttackKind::kLossBaseline: {
      for (uint64_t x = 0; x < n; ++x) push_row(x, norm_at(scores, target_model, x));
      break;
    }
    case AttackKind::kLiraOnline:
    case AttackKind::kLiraOffline: {
      const bool online = cfg.kind == AttackKind::kLiraOnline;
      std::vector<double> in_refs, out_refs;
      in_refs.reserve(scores.num_models);
      out_refs.reserve(scores.num_models);
      for (uint64_t x = 0; x < n; ++x) {
        collect_refs(scores, mm, target_model, x, cfg.max_refs_per_side, &in_refs, &out_refs);
        const bool enough = online ? (in_refs.size() >= 2 && out_refs.size() >= 2)
                                   : out_refs.size() >= 2;
        if (!enough) {
          result.excluded_ids.push_back(static_cast<uint32_t>(x));
          continue;
        }
        const double t = norm_at(scores, target_model, x);
        const GaussianFit out_fit = fit_gaussian(out_refs, cfg.variance_floor);
        if (online) {
          const GaussianFit in_fit = fit_gaussian(in_refs, cfg.variance_floor);
          push_row(x, lira_online_score(t, in_fit, out_fit));
        } else {
          push_row(x, lira_offline_score(t, out_fit));
        }
      }
      break;
    }
    case AttackKind::kRmiaSimple: {
      for (uint64_t x = 0; x < n; ++x) {
        const AlphaEntry e = alpha_for(scores, mm, target_model, x, /*out_refs_only=*/false);
        if (!e.usable) {
          result.excluded_ids.push_back(static_cast<uint32_t>(x));
          continue;
        }
        push_row(x, e.alpha);
      }
      break;
    }
    case AttackKind::kRmiaOnline:
    case AttackKind::kRmiaOffline: {
      const bool out_only = cfg.kind == AttackKind::kRmiaOffline;
      std::vector<double> alpha_z;
      alpha_z.reserve(cfg.z_population.size());
      // Fixed ascending-id order keeps the indicator sum deterministic.
      std::vector<uint32_t> z_sorted = cfg.z_population;
      std::sort(z_sorted.begin(), z_sorted.end());
      for (uint32_t z : z_sorted) {
        const AlphaEntry e = alpha_for(scores, mm, target_model, z, out_only);
        if (e.usable) alpha_z.push_back(e.alpha);
      }
      if (alpha_z.empty()) {
        throw PrereqError("every comparison example lost all its references");
      }
      for (uint64_t x = 0; x < n; ++x) {
        if (is_z[x]) continue;
        const AlphaEntry e = alpha_for(scores, mm, target_model, x, out_only);
        if (!e.usable) {
          result.excluded_ids.push_back(static_cast<uint32_t>(x));
          continue;
        }
        push_row(x, rmia_score(e.alpha, alpha_z, cfg.gamma));
      }
      break;
    }
  }
  return result;
}

double member_threshold(AttackKind kind) {
  switch (kind) {
    case AttackKind::kLossBaseline:
      throw ConfigError("the loss baseline has no calibrated member threshold");
    case AttackKind::kLiraOnline:
      return 0.0;  // log density ratio: positive favors the IN fit
    case AttackKind::kLiraOffline:
      return 0.5;  // probability scale, 0.5 at the OUT mean
    case AttackKind::kRmiaSimple:
      return 1.0;  // ratio scale, 1 = parity with the references
    case AttackKind::kRmiaOnline:
    case AttackKind::kRmiaOffline:
      return 0.5;  // fraction of the comparison population dominated
  }
  throw ConfigError("unknown attack kind value");
}

std::string attack_csv(const AttackResult& result) {
  std::string out = "example_id,score,is_member\n";
  for (const AttackScore& row : result.rows) {
    out += std::to_string(row.example_id);
    out += ',';
    out += format_double(row.score);
    out += ',';
    out += row.is_member ? '1' : '0';
    out += '\n';
  }
  return out;
}

}  // namespace tinymia
