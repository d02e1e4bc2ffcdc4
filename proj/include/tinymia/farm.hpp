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

#ifndef TINYMIA_FARM_HPP_
#define TINYMIA_FARM_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tinymia/corpus.hpp"
#include "tinymia/model.hpp"

namespace tinymia {

struct FarmConfig {
  uint64_t master_seed = 1;
  uint32_t num_models = 16;
  ModelConfig model;
  // Per-model seed is derived from (master_seed, model id); the template's
  // seed field is ignored.
  TrainConfig train_tpl;
  uint32_t parallelism = 1;
  // Fraction of models allowed to fail training before the farm itself is
  // considered failed.
  double max_failed_frac = 0.05;

  void validate() const;
};

enum class ModelStatus : uint32_t { kPending = 0, kDone = 1, kFailed = 2 };

const char* model_status_name(ModelStatus status);
ModelStatus model_status_from_name(std::string_view name);

struct FarmRow {
  uint32_t model_id = 0;
  uint64_t seed = 0;
  ModelStatus status = ModelStatus::kPending;
  uint32_t steps_completed = 0;
  double wall_time_s = 0.0;    // informational; excluded from purity checks
  std::string checkpoint;      // path relative to the run directory
  std::string error;           // non-empty iff status == failed
};

struct FarmManifest {
  uint64_t master_seed = 0;
  uint32_t num_models = 0;
  uint64_t model_config_hash = 0;
  uint64_t train_config_hash = 0;
  uint64_t data_fingerprint = 0;  // dataset tokens + membership matrix
  std::vector<FarmRow> rows;      // model id ascending, one per model
};

// Structural hashes used to guard resumed runs against configuration or
// data drift. The train hash ignores the template's seed field.
uint64_t model_config_hash(const ModelConfig& cfg);
uint64_t train_config_hash(const TrainConfig& tc);
uint64_t data_fingerprint(const Dataset& ds, const MembershipMatrix& mm);

std::string manifest_json(const FarmManifest& manifest);
FarmManifest manifest_from_json(const std::string& text);
FarmManifest load_manifest(const std::string& path);
void save_manifest(const FarmManifest& manifest, const std::string& path);

// File names inside a run directory.
std::string checkpoint_name(uint32_t model_id);  // ckpt_0007.tlm
std::string trace_name(uint32_t model_id);       // trace_0007.csv
std::string order_name(uint32_t model_id);       // order_0007.csv
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kLossScoresName = "scores_loss.smx";
inline constexpr const char* kLogitScoresName = "scores_logit.smx";

// Trains the farm into run_dir, one model per membership row, and writes
// checkpoint + trace + order files plus the manifest (rewritten after every
// finished row, so an interrupted run resumes). Rows already done with a
// loadable checkpoint are kept; pending, failed, or corrupt rows are
// (re)trained. A numeric failure marks its row failed and the farm carries
// on; more than max_failed_frac failed rows raises NumericError.
FarmManifest train_farm(const Dataset& ds, const MembershipMatrix& mm, const FarmConfig& cfg,
                        const std::string& run_dir);

// Evaluates every model on every example and writes the per-signal score
// matrices (loss and mean-logit) into run_dir. Every manifest row must be
// done; checkpoints are re-verified against the membership row they claim.
void score_farm(const FarmManifest& manifest, const Dataset& ds, const MembershipMatrix& mm,
                const std::string& run_dir, uint32_t parallelism);

}  // namespace tinymia

#endif  // TINYMIA_FARM_HPP_
