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

#ifndef TINYMIA_PIPELINE_HPP_
#define TINYMIA_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinymia/attacks.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/extraction.hpp"
#include "tinymia/farm.hpp"
#include "tinymia/model.hpp"

namespace tinymia {

// One attack entry of the run configuration. z_count examples are picked
// deterministically from the master seed for the population-comparison
// kinds and removed from the audited set.
struct AttackSpec {
  AttackKind kind = AttackKind::kLossBaseline;
  SignalKind signal = SignalKind::kLoss;
  double variance_floor = 1e-6;
  double gamma = 1.0;
  uint32_t z_count = 0;
  uint32_t max_refs_per_side = 0;
};

struct ReportConfig {
  uint32_t target_model = 0;
  std::vector<double> fpr_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  uint32_t partition_k = 8;
  // Attack driving roc.tsv, vulnerability.csv, and extraction.csv.
  uint32_t primary_attack = 0;
  std::optional<ExtractionConfig> extraction;
};

// Everything that determines a run. The artifact tree under the run
// directory is a pure function of (corpus bytes, RunConfig).
struct RunConfig {
  std::string corpus_path;
  uint32_t seq_len = 64;
  uint32_t dedup_threshold = 0;  // 0 = deduplication disabled
  double df_sample_frac = 1.0;
  uint64_t master_seed = 1;
  uint32_t num_models = 16;
  uint32_t parallelism = 1;  // default; the CLI flag overrides
  ModelConfig model;         // seq_len and vocab_size are filled from above
  TrainConfig train_tpl;     // per-model seeds are derived, the seed field is ignored
  std::vector<AttackSpec> attacks;
  ReportConfig report;

  void validate() const;
};

// Strict JSON codec: unknown keys are rejected so typos cannot silently
// fall back to defaults. `run_config_json` emits the normalized form
// (every field explicit) used for hashing and the lock file.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_json(const RunConfig& cfg);

// Hash of (normalized config, corpus bytes); names the run directory and
// guards resumed runs. Rendered as 16 lowercase hex digits.
uint64_t run_config_hash(const RunConfig& cfg, const std::vector<uint8_t>& corpus_bytes);
std::string hash_hex(uint64_t h);

enum class Stage {
  kPrepare = 0,
  kFarmTrain = 1,
  kFarmScore = 2,
  kAttack = 3,
  kReport = 4,
  kExtract = 5,
  kAll = 6,
};

const char* stage_name(Stage stage);
Stage stage_from_name(std::string_view name);

// Artifact names inside a run directory (stage owners defined elsewhere:
// farm.hpp names the manifest, checkpoints and score matrices).
inline constexpr const char* kLockName = "config.lock.json";
inline constexpr const char* kMembershipName = "membership.mbm";
inline constexpr const char* kStatsName = "stats.csv";
inline constexpr const char* kIdMapName = "id_map.csv";
inline constexpr const char* kSummaryName = "summary.json";
inline constexpr const char* kRocName = "roc.tsv";
inline constexpr const char* kVulnerabilityName = "vulnerability.csv";
inline constexpr const char* kByStepName = "vulnerability_by_step.csv";
inline constexpr const char* kExtractionName = "extraction.csv";
inline constexpr const char* kExtractionSummaryName = "extraction_summary.json";
std::string attack_csv_name(uint32_t index, AttackKind kind);
std::string roc_tsv_name(uint32_t index, AttackKind kind);

// Run directory resolution: explicit override wins; otherwise
// <root>/run_<hash16> where <root> is $TINYMIA_RUN_ROOT or "runs".
std::string resolve_run_dir(const RunConfig& cfg, const std::vector<uint8_t>& corpus_bytes,
                            const std::string& run_dir_override);

// The deterministic comparison population for one attack spec.
std::vector<uint32_t> select_z_population(uint64_t master_seed, uint32_t z_count,
                                          uint64_t num_examples);
AttackConfig make_attack_config(const AttackSpec& spec, uint64_t master_seed,
                                uint64_t num_examples);

// Executes one stage (or `all`) against the resolved run directory.
// Stages are idempotent: completed outputs are detected and skipped.
// parallelism_override = 0 keeps the config value. Progress lines go to
// `log`. Throws ConfigError / PrereqError / NumericError / DataError.
void run_pipeline(const std::string& config_path, const std::string& run_dir_override,
                  uint32_t parallelism_override, Stage stage, std::ostream& log);

}  // namespace tinymia

#endif  // TINYMIA_PIPELINE_HPP_
