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

#include "tinymia/model.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "tinymia/net_impl.hpp"

namespace tinymia {

uint64_t ModelConfig::param_count() const { return ParamLayout::make(*this).total; }

void ModelConfig::validate() const {
  if (vocab_size != kVocabSize) {
    throw ConfigError("model: vocab_size must be " + std::to_string(kVocabSize) +
                      " (byte vocabulary plus PAD and UNK)");
  }
  if (seq_len == 0 || embed_dim == 0 || num_layers == 0 || num_heads == 0 || hidden_dim == 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("model: embed_dim must be divisible by num_heads");
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (init_lr < 0 || peak_lr < 0 || final_lr < 0) {
    throw ConfigError("train: learning rates must be non-negative");
  }
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be non-negative");
  if (log_every == 0) throw ConfigError("train: log_every must be positive");
}

double lr_at(uint64_t step, uint64_t total_steps, uint64_t warmup_steps, double init_lr,
             double peak_lr, double final_lr, LrSchedule schedule) {
  if (total_steps < warmup_steps) {
    throw ConfigError("lr_at: total_steps must be >= warmup_steps");
  }
  if (step > total_steps) throw ConfigError("lr_at: step beyond total_steps");
  if (step >= total_steps) return final_lr;
  if (step == warmup_steps) return peak_lr;
  if (step < warmup_steps) {
    return init_lr + (peak_lr - init_lr) *
                         (static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  if (schedule == LrSchedule::kLinear) {
    return peak_lr + (final_lr - peak_lr) * progress;
  }
  return final_lr + 0.5 * (peak_lr - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

uint64_t chinchilla_examples(uint64_t param_count, uint64_t tokens_per_example) {
  if (tokens_per_example == 0) throw ConfigError("chinchilla_examples: tokens_per_example is 0");
  const double n = 20.0 * static_cast<double>(param_count) /
                   static_cast<double>(tokens_per_example);
  return static_cast<uint64_t>(std::llround(n));
}

Model init_model(const ModelConfig& cfg, uint64_t seed) { return init_model_t<float>(cfg, seed); }

SignalRecord eval_example(const Model& model, const Example& ex) {
  const ParamLayout lay = ParamLayout::make(model.cfg);
  const Example* ptr = &ex;
  return eval_batch_t(model, lay, &ptr, 1)[0];
}

std::vector<SignalRecord> eval_batch(const Model& model, const Example* const* exs,
                                     size_t count) {
  const ParamLayout lay = ParamLayout::make(model.cfg);
  return eval_batch_t(model, lay, exs, count);
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'L', 'M', '1'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
  const uint8_t* b = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T take_le(const std::vector<uint8_t>& bytes, size_t& off, const std::string& path) {
  if (off + sizeof(T) > bytes.size()) throw DataError("truncated checkpoint: " + path);
  T v;
  std::memcpy(&v, bytes.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  model.cfg.validate();
  const uint64_t n = model.cfg.param_count();
  if (model.params.size() != n) throw DataError("save_checkpoint: parameter count mismatch");
  for (float v : model.params) {
    if (!std::isfinite(v)) throw NumericError("save_checkpoint: non-finite parameter");
  }
  std::vector<uint8_t> out;
  out.reserve(64 + n * sizeof(float));
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  put_le<uint32_t>(out, kCheckpointVersion);
  put_le<uint32_t>(out, model.cfg.vocab_size);
  put_le<uint32_t>(out, model.cfg.seq_len);
  put_le<uint32_t>(out, model.cfg.embed_dim);
  put_le<uint32_t>(out, model.cfg.num_layers);
  put_le<uint32_t>(out, model.cfg.num_heads);
  put_le<uint32_t>(out, model.cfg.hidden_dim);
  put_le<uint64_t>(out, meta.seed);
  put_le<uint64_t>(out, meta.membership_row_hash);
  put_le<uint32_t>(out, meta.steps_completed);
  put_le<uint64_t>(out, n);
  const uint8_t* pb = reinterpret_cast<const uint8_t*>(model.params.data());
  out.insert(out.end(), pb, pb + n * sizeof(float));
  write_file_atomic(path, out.data(), out.size());
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw DataError("bad magic, not a TLM1 checkpoint: " + path);
  }
  size_t off = 4;
  const uint32_t version = take_le<uint32_t>(bytes, off, path);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported TLM1 version " + std::to_string(version) + ": " + path);
  }
  Model model;
  model.cfg.vocab_size = take_le<uint32_t>(bytes, off, path);
  model.cfg.seq_len = take_le<uint32_t>(bytes, off, path);
  model.cfg.embed_dim = take_le<uint32_t>(bytes, off, path);
  model.cfg.num_layers = take_le<uint32_t>(bytes, off, path);
  model.cfg.num_heads = take_le<uint32_t>(bytes, off, path);
  model.cfg.hidden_dim = take_le<uint32_t>(bytes, off, path);
  CheckpointMeta m;
  m.seed = take_le<uint64_t>(bytes, off, path);
  m.membership_row_hash = take_le<uint64_t>(bytes, off, path);
  m.steps_completed = take_le<uint32_t>(bytes, off, path);
  const uint64_t n = take_le<uint64_t>(bytes, off, path);
  model.cfg.validate();
  if (n != model.cfg.param_count()) {
    throw DataError("checkpoint parameter count does not match its config: " + path);
  }
  if (off + n * sizeof(float) != bytes.size()) throw DataError("size mismatch in " + path);
  model.params.resize(n);
  std::memcpy(model.params.data(), bytes.data() + off, n * sizeof(float));
  for (float v : model.params) {
    if (!std::isfinite(v)) throw DataError("non-finite parameter in checkpoint: " + path);
  }
  if (meta) *meta = m;
  return model;
}

uint64_t membership_row_hash(const MembershipMatrix& mm, uint32_t m) {
  const uint8_t* r = mm.row(m);
  uint64_t h = 0xcbf29ce484222325ULL ^ mix64(mm.num_examples());
  for (size_t i = 0; i < mm.row_stride(); ++i) {
    h = (h ^ r[i]) * 0x100000001b3ULL;
  }
  return mix64(h);
}

std::string trace_csv(const std::vector<TraceEntry>& trace) {
  std::string csv = "step,lr,loss\n";
  for (const TraceEntry& t : trace) {
    csv += std::to_string(t.step);
    csv += ',';
    csv += format_double(t.lr);
    csv += ',';
    csv += format_double(t.loss);
    csv += '\n';
  }
  return csv;
}

std::string order_csv(const std::vector<std::pair<uint32_t, uint32_t>>& last_seen) {
  std::string csv = "example_id,last_seen_step\n";
  for (const auto& [id, step] : last_seen) {
    csv += std::to_string(id);
    csv += ',';
    csv += std::to_string(step);
    csv += '\n';
  }
  return csv;
}

}  // namespace tinymia
