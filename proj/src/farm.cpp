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

#include "tinymia/farm.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "tinymia/common.hpp"
#include "tinymia/scorestore.hpp"

namespace tinymia {

namespace {

using nlohmann::json;

uint64_t hash_accum(uint64_t h, uint64_t v) { return mix64(h ^ mix64(v)); }

uint64_t hash_double(uint64_t h, double v) { return hash_accum(h, std::bit_cast<uint64_t>(v)); }

std::string numbered(const char* stem, uint32_t model_id, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04u.%s", stem, model_id, ext);
  return buf;
}

}  // namespace

void FarmConfig::validate() const {
  model.validate();
  train_tpl.validate();
  if (num_models == 0) throw ConfigError("farm: num_models must be at least 1");
  if (parallelism == 0) throw ConfigError("farm: parallelism must be at least 1");
  if (!(max_failed_frac >= 0.0) || max_failed_frac >= 1.0) {
    throw ConfigError("farm: max_failed_frac must lie in [0, 1)");
  }
}

const char* model_status_name(ModelStatus status) {
  switch (status) {
    case ModelStatus::kPending:
      return "pending";
    case ModelStatus::kDone:
      return "done";
    case ModelStatus::kFailed:
      return "failed";
  }
  throw DataError("unknown model status value");
}

ModelStatus model_status_from_name(std::string_view name) {
  if (name == "pending") return ModelStatus::kPending;
  if (name == "done") return ModelStatus::kDone;
  if (name == "failed") return ModelStatus::kFailed;
  throw DataError("unknown model status '" + std::string(name) + "'");
}

uint64_t model_config_hash(const ModelConfig& cfg) {
  uint64_t h = 0x746c6d31u;  // domain separator
  h = hash_accum(h, cfg.vocab_size);
  h = hash_accum(h, cfg.seq_len);
  h = hash_accum(h, cfg.embed_dim);
  h = hash_accum(h, cfg.num_layers);
  h = hash_accum(h, cfg.num_heads);
  h = hash_accum(h, cfg.hidden_dim);
  return h;
}

uint64_t train_config_hash(const TrainConfig& tc) {
  uint64_t h = 0x74726e31u;
  h = hash_accum(h, tc.epochs);
  h = hash_accum(h, tc.batch_size);
  h = hash_double(h, tc.init_lr);
  h = hash_double(h, tc.peak_lr);
  h = hash_double(h, tc.final_lr);
  h = hash_accum(h, tc.warmup_steps);
  h = hash_double(h, tc.weight_decay);
  h = hash_double(h, tc.clip_norm);
  h = hash_accum(h, static_cast<uint64_t>(tc.schedule));
  h = hash_accum(h, tc.log_every);
  return h;
}

uint64_t data_fingerprint(const Dataset& ds, const MembershipMatrix& mm) {
  uint64_t h = 0x64617461u;
  h = hash_accum(h, ds.seq_len);
  h = hash_accum(h, ds.examples.size());
  for (const Example& ex : ds.examples) {
    h = hash_accum(h, ex.id);
    h = hash_accum(h, ex.real_len);
    for (uint32_t t : ex.tokens) h = hash_accum(h, t);
  }
  h = hash_accum(h, mm.num_models());
  h = hash_accum(h, mm.num_examples());
  for (uint32_t m = 0; m < mm.num_models(); ++m) h = hash_accum(h, membership_row_hash(mm, m));
  return h;
}

std::string manifest_json(const FarmManifest& manifest) {
  json rows = json::array();
  for (const FarmRow& row : manifest.rows) {
    rows.push_back({{"model_id", row.model_id},
                    {"seed", row.seed},
                    {"status", model_status_name(row.status)},
                    {"steps_completed", row.steps_completed},
                    {"wall_time_s", row.wall_time_s},
                    {"checkpoint", row.checkpoint},
                    {"error", row.error}});
  }
  const json doc = {{"master_seed", manifest.master_seed},
                    {"num_models", manifest.num_models},
                    {"model_config_hash", manifest.model_config_hash},
                    {"train_config_hash", manifest.train_config_hash},
                    {"data_fingerprint", manifest.data_fingerprint},
                    {"rows", rows}};
  return doc.dump(2) + "\n";
}

FarmManifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    FarmManifest m;
    m.master_seed = doc.at("master_seed").get<uint64_t>();
    m.num_models = doc.at("num_models").get<uint32_t>();
    m.model_config_hash = doc.at("model_config_hash").get<uint64_t>();
    m.train_config_hash = doc.at("train_config_hash").get<uint64_t>();
    m.data_fingerprint = doc.at("data_fingerprint").get<uint64_t>();
    for (const json& r : doc.at("rows")) {
      FarmRow row;
      row.model_id = r.at("model_id").get<uint32_t>();
      row.seed = r.at("seed").get<uint64_t>();
      row.status = model_status_from_name(r.at("status").get<std::string>());
      row.steps_completed = r.at("steps_completed").get<uint32_t>();
      row.wall_time_s = r.at("wall_time_s").get<double>();
      row.checkpoint = r.at("checkpoint").get<std::string>();
      row.error = r.at("error").get<std::string>();
      m.rows.push_back(std::move(row));
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest is missing fields: ") + e.what());
  }
}

FarmManifest load_manifest(const std::string& path) {
  return manifest_from_json(read_file_text(path));
}

void save_manifest(const FarmManifest& manifest, const std::string& path) {
  write_text_atomic(path, manifest_json(manifest));
}

std::string checkpoint_name(uint32_t model_id) { return numbered("ckpt", model_id, "tlm"); }
std::string trace_name(uint32_t model_id) { return numbered("trace", model_id, "csv"); }
std::string order_name(uint32_t model_id) { return numbered("order", model_id, "csv"); }

namespace {

// True when the row's checkpoint exists, loads cleanly, and matches the
// membership row it claims to have been trained on.
bool row_intact(const FarmRow& row, const MembershipMatrix& mm, const std::string& run_dir) {
  if (row.status != ModelStatus::kDone || row.checkpoint.empty()) return false;
  const std::string path = run_dir + "/" + row.checkpoint;
  if (!file_exists(path)) return false;
  try {
    CheckpointMeta meta;
    (void)load_checkpoint(path, &meta);
    return meta.seed == row.seed &&
           meta.membership_row_hash == membership_row_hash(mm, row.model_id);
  } catch (const DataError&) {
    return false;
  }
}

}  // namespace

FarmManifest train_farm(const Dataset& ds, const MembershipMatrix& mm, const FarmConfig& cfg,
                        const std::string& run_dir) {
  cfg.validate();
  if (ds.examples.empty()) throw ConfigError("farm: dataset is empty");
  if (mm.num_models() != cfg.num_models || mm.num_examples() != ds.examples.size()) {
    throw ConfigError("farm: membership matrix does not match (num_models, examples)");
  }
  std::filesystem::create_directories(run_dir);

  FarmManifest manifest;
  manifest.master_seed = cfg.master_seed;
  manifest.num_models = cfg.num_models;
  manifest.model_config_hash = model_config_hash(cfg.model);
  manifest.train_config_hash = train_config_hash(cfg.train_tpl);
  manifest.data_fingerprint = data_fingerprint(ds, mm);

  const std::string manifest_path = run_dir + "/" + kManifestName;
  if (file_exists(manifest_path)) {
    const FarmManifest prev = load_manifest(manifest_path);
    if (prev.master_seed != manifest.master_seed || prev.num_models != manifest.num_models ||
        prev.model_config_hash != manifest.model_config_hash ||
        prev.train_config_hash != manifest.train_config_hash ||
        prev.data_fingerprint != manifest.data_fingerprint) {
      throw ConfigError("run directory '" + run_dir +
                        "' was produced by a different configuration or dataset");
    }
    manifest.rows = prev.rows;
  }

  manifest.rows.resize(cfg.num_models);
  for (uint32_t m = 0; m < cfg.num_models; ++m) {
    FarmRow& row = manifest.rows[m];
    row.model_id = m;
    row.seed = derive_model_seed(cfg.master_seed, m);
    if (!row_intact(row, mm, run_dir)) {
      row.status = ModelStatus::kPending;
      row.steps_completed = 0;
      row.wall_time_s = 0.0;
      row.checkpoint.clear();
      row.error.clear();
    }
  }
  save_manifest(manifest, manifest_path);

  std::vector<uint32_t> todo;
  for (const FarmRow& row : manifest.rows) {
    if (row.status == ModelStatus::kPending) todo.push_back(row.model_id);
  }

  std::mutex mu;
  size_t next = 0;
  std::exception_ptr fatal;

  auto worker = [&]() {
    for (;;) {
      uint32_t m = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (fatal || next >= todo.size()) return;
        m = todo[next++];
      }
      FarmRow row;
      row.model_id = m;
      row.seed = derive_model_seed(cfg.master_seed, m);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TrainConfig tc = cfg.train_tpl;
        tc.seed = row.seed;
        Model model = init_model(cfg.model, row.seed);
        const TrainLog log = train(model, ds, mm.members_of(m), tc);

        CheckpointMeta meta;
        meta.seed = row.seed;
        meta.membership_row_hash = membership_row_hash(mm, m);
        meta.steps_completed = log.total_steps;
        const std::string ckpt = checkpoint_name(m);
        save_checkpoint(run_dir + "/" + ckpt, model, meta);
        write_text_atomic(run_dir + "/" + trace_name(m), trace_csv(log.trace));
        write_text_atomic(run_dir + "/" + order_name(m), order_csv(log.last_seen_step));

        row.status = ModelStatus::kDone;
        row.steps_completed = log.total_steps;
        row.checkpoint = ckpt;
      } catch (const NumericError& e) {
        row.status = ModelStatus::kFailed;
        row.error = e.what();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!fatal) fatal = std::current_exception();
        return;
      }
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      {
        std::lock_guard<std::mutex> lock(mu);
        manifest.rows[m] = row;
        save_manifest(manifest, manifest_path);
      }
    }
  };

  const uint32_t workers =
      std::min<uint32_t>(cfg.parallelism, std::max<size_t>(todo.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (uint32_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  uint32_t failed = 0;
  for (const FarmRow& row : manifest.rows) {
    if (row.status == ModelStatus::kFailed) ++failed;
  }
  if (static_cast<double>(failed) >
      cfg.max_failed_frac * static_cast<double>(cfg.num_models)) {
    std::string ids;
    std::string first_error;
    for (const FarmRow& row : manifest.rows) {
      if (row.status != ModelStatus::kFailed) continue;
      if (!ids.empty()) ids += ", ";
      ids += std::to_string(row.model_id);
      if (first_error.empty()) first_error = row.error;
    }
    throw NumericError("farm: " + std::to_string(failed) + " of " +
                       std::to_string(cfg.num_models) + " models failed training (ids " + ids +
                       "); first error: " + first_error);
  }
  return manifest;
}

void score_farm(const FarmManifest& manifest, const Dataset& ds, const MembershipMatrix& mm,
                const std::string& run_dir, uint32_t parallelism) {
  if (parallelism == 0) throw ConfigError("farm: parallelism must be at least 1");
  if (manifest.rows.size() != manifest.num_models) {
    throw DataError("manifest row count does not match num_models");
  }
  if (mm.num_models() != manifest.num_models || mm.num_examples() != ds.examples.size()) {
    throw ConfigError("farm: membership matrix does not match (num_models, examples)");
  }
  if (manifest.data_fingerprint != data_fingerprint(ds, mm)) {
    throw PrereqError("farm: dataset or membership changed since the farm was trained");
  }
  for (const FarmRow& row : manifest.rows) {
    if (row.status != ModelStatus::kDone) {
      throw PrereqError("farm: model " + std::to_string(row.model_id) + " is " +
                        model_status_name(row.status) + "; train the farm to completion first");
    }
  }

  const uint64_t n = ds.examples.size();
  ScoreMatrix loss_m;
  loss_m.kind = SignalKind::kLoss;
  loss_m.num_models = manifest.num_models;
  loss_m.num_examples = n;
  loss_m.values.assign(static_cast<size_t>(manifest.num_models) * n, 0.0f);
  ScoreMatrix logit_m = loss_m;
  logit_m.kind = SignalKind::kMeanLogit;

  constexpr size_t kEvalBatch = 64;
  std::mutex mu;
  uint32_t next_model = 0;
  std::exception_ptr fatal;

  auto worker = [&]() {
    std::vector<const Example*> ptrs;
    ptrs.reserve(kEvalBatch);
    for (;;) {
      uint32_t m = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (fatal || next_model >= manifest.num_models) return;
        m = next_model++;
      }
      try {
        CheckpointMeta meta;
        const Model model =
            load_checkpoint(run_dir + "/" + manifest.rows[m].checkpoint, &meta);
        if (meta.membership_row_hash != membership_row_hash(mm, m)) {
          throw PrereqError("farm: checkpoint of model " + std::to_string(m) +
                            " was trained on a different membership row");
        }
        for (uint64_t begin = 0; begin < n; begin += kEvalBatch) {
          const uint64_t end = std::min<uint64_t>(begin + kEvalBatch, n);
          ptrs.clear();
          for (uint64_t x = begin; x < end; ++x) ptrs.push_back(&ds.examples[x]);
          const std::vector<SignalRecord> recs = eval_batch(model, ptrs.data(), ptrs.size());
          for (uint64_t x = begin; x < end; ++x) {
            const SignalRecord& rec = recs[x - begin];
            loss_m.set(m, x, static_cast<float>(rec.loss));
            logit_m.set(m, x, static_cast<float>(rec.mean_logit));
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!fatal) fatal = std::current_exception();
        return;
      }
    }
  };

  const uint32_t workers = std::min<uint32_t>(parallelism, manifest.num_models);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (uint32_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  write_score_matrix(run_dir + "/" + kLossScoresName, loss_m);
  write_score_matrix(run_dir + "/" + kLogitScoresName, logit_m);
}

}  // namespace tinymia
