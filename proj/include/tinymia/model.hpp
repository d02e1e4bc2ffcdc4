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

#ifndef TINYMIA_MODEL_HPP_
#define TINYMIA_MODEL_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tinymia/common.hpp"
#include "tinymia/corpus.hpp"

namespace tinymia {

// Pre-norm decoder-only transformer with learned positional embeddings
// and a weight-tied output head.
struct ModelConfig {
  uint32_t vocab_size = kVocabSize;
  uint32_t seq_len = 0;
  uint32_t embed_dim = 0;
  uint32_t num_layers = 0;
  uint32_t num_heads = 0;
  uint32_t hidden_dim = 0;  // MLP inner width

  uint64_t param_count() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class LrSchedule : uint32_t { kCosine = 0, kLinear = 1 };

/// Auto warmup sentinel: min(750, total_steps / 20).
inline constexpr uint32_t kAutoWarmup = 0xffffffffu;

struct TrainConfig {
  uint64_t seed = 0;
  uint32_t epochs = 1;
  uint32_t batch_size = 32;
  double init_lr = 1e-7;
  double peak_lr = 3e-4;
  double final_lr = 3e-5;
  uint32_t warmup_steps = kAutoWarmup;
  double weight_decay = 0.1;
  double clip_norm = 1.0;  // <= 0 disables clipping
  LrSchedule schedule = LrSchedule::kCosine;
  uint32_t log_every = 10;  // loss-trace cadence in steps

  void validate() const;
};

struct TraceEntry {
  uint32_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainLog {
  std::vector<TraceEntry> trace;
  // (example id, optimizer step at which the example last appeared).
  std::vector<std::pair<uint32_t, uint32_t>> last_seen_step;
  uint32_t total_steps = 0;
};

// Per (model, example) evaluation signals. token_logprobs[i] is the
// log-probability of the token at position i + 1 given positions <= i;
// pads are never predicted. loss = -mean(token_logprobs); mean_logit is
// the mean pre-softmax logit of the realized tokens at those positions.
struct SignalRecord {
  uint32_t model_id = 0;
  uint32_t example_id = 0;
  double loss = 0.0;
  double mean_logit = 0.0;
  std::vector<double> token_logprobs;
};

template <typename Scalar>
struct ModelT {
  ModelConfig cfg;
  // Flat parameter buffer, layout defined in net_impl.hpp. Alignment is
  // pinned so training and evaluation are bit-reproducible (see
  // AlignedVec).
  AlignedVec<Scalar> params;
};

using Model = ModelT<float>;

// Fan-in-scaled zero-mean normal init for matrices, zeros for biases,
// ones for layer-norm gains. Deterministic in (cfg, seed).
Model init_model(const ModelConfig& cfg, uint64_t seed);

// Rejects examples with real_len < 2 (no prediction targets).
SignalRecord eval_example(const Model& model, const Example& ex);

// Same signals for a whole batch in one ragged forward pass.
std::vector<SignalRecord> eval_batch(const Model& model, const Example* const* exs,
                                     size_t count);

// AdamW with warmup + cosine (or linear) decay and global-norm gradient
// clipping. Trains only on `member_ids`, shuffling their order per epoch
// by (seed, epoch). Aborts with NumericError on a non-finite loss.
TrainLog train(Model& model, const Dataset& ds, const std::vector<uint32_t>& member_ids,
               const TrainConfig& tc);

// Piecewise schedule: linear init->peak over [0, warmup], then cosine (or
// linear) peak->final over [warmup, total]. Continuous at the joins.
double lr_at(uint64_t step, uint64_t total_steps, uint64_t warmup_steps, double init_lr,
             double peak_lr, double final_lr, LrSchedule schedule);

// Compute-optimal example count: round(20 * param_count / tokens_per_example).
uint64_t chinchilla_examples(uint64_t param_count, uint64_t tokens_per_example);

struct CheckpointMeta {
  uint64_t seed = 0;
  uint64_t membership_row_hash = 0;
  uint32_t steps_completed = 0;
};

// TLM1 container: magic, version, config fields (little-endian u32/u64),
// training provenance, then float32 little-endian parameters. Loaders
// reject truncated files, non-finite parameters, and dim mismatches.
void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// Provenance hash of one membership row (which training set a checkpoint
// was built from).
uint64_t membership_row_hash(const MembershipMatrix& mm, uint32_t m);

// CSV rendering "step,lr,loss".
std::string trace_csv(const std::vector<TraceEntry>& trace);

// CSV rendering "example_id,last_seen_step".
std::string order_csv(const std::vector<std::pair<uint32_t, uint32_t>>& last_seen);

}  // namespace tinymia

#endif  // TINYMIA_MODEL_HPP_
