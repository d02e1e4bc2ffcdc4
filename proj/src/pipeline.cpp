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

#include "tinymia/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tinymia/common.hpp"
#include "tinymia/metrics.hpp"
#include "tinymia/scorestore.hpp"

namespace tinymia {

namespace {

using nlohmann::json;

const char* lr_schedule_name(LrSchedule s) {
  return s == LrSchedule::kCosine ? "cosine" : "linear";
}

LrSchedule lr_schedule_from_name(std::string_view name) {
  if (name == "cosine") return LrSchedule::kCosine;
  if (name == "linear") return LrSchedule::kLinear;
  throw ConfigError("config: unknown schedule '" + std::string(name) + "'");
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const char* where) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError(std::string("config: unknown key '") + item.key() + "' in " + where);
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

uint64_t get_u64(const json& obj, const char* key, std::optional<uint64_t> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(std::string("config: missing required key '") + key + "'");
  }
  if (!v->is_number_integer() && !v->is_number_unsigned()) {
    throw ConfigError(std::string("config: '") + key + "' must be a nonnegative integer");
  }
  if (v->is_number_integer() && v->get<int64_t>() < 0) {
    throw ConfigError(std::string("config: '") + key + "' must be nonnegative");
  }
  return v->get<uint64_t>();
}

uint32_t get_u32(const json& obj, const char* key, std::optional<uint32_t> def = {}) {
  const uint64_t v =
      get_u64(obj, key, def ? std::optional<uint64_t>(*def) : std::nullopt);
  if (v > 0xffffffffULL) {
    throw ConfigError(std::string("config: '") + key + "' does not fit in 32 bits");
  }
  return static_cast<uint32_t>(v);
}

double get_f64(const json& obj, const char* key, std::optional<double> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(std::string("config: missing required key '") + key + "'");
  }
  if (!v->is_number()) {
    throw ConfigError(std::string("config: '") + key + "' must be a number");
  }
  return v->get<double>();
}

std::string get_str(const json& obj, const char* key, std::optional<std::string> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw ConfigError(std::string("config: missing required key '") + key + "'");
  }
  if (!v->is_string()) {
    throw ConfigError(std::string("config: '") + key + "' must be a string");
  }
  return v->get<std::string>();
}

ModelConfig parse_model(const json& obj, uint32_t seq_len) {
  check_keys(obj, {"embed_dim", "num_layers", "num_heads", "hidden_dim"}, "model");
  ModelConfig cfg;
  cfg.seq_len = seq_len;
  cfg.embed_dim = get_u32(obj, "embed_dim");
  cfg.num_layers = get_u32(obj, "num_layers");
  cfg.num_heads = get_u32(obj, "num_heads");
  cfg.hidden_dim = get_u32(obj, "hidden_dim");
  return cfg;
}

TrainConfig parse_train(const json& obj) {
  check_keys(obj,
             {"epochs", "batch_size", "init_lr", "peak_lr", "final_lr", "warmup_steps",
              "weight_decay", "clip_norm", "schedule", "log_every"},
             "train");
  TrainConfig tc;
  tc.epochs = get_u32(obj, "epochs", tc.epochs);
  tc.batch_size = get_u32(obj, "batch_size", tc.batch_size);
  tc.init_lr = get_f64(obj, "init_lr", tc.init_lr);
  tc.peak_lr = get_f64(obj, "peak_lr", tc.peak_lr);
  tc.final_lr = get_f64(obj, "final_lr", tc.final_lr);
  if (const json* w = find(obj, "warmup_steps")) {
    if (w->is_string()) {
      if (w->get<std::string>() != "auto") {
        throw ConfigError("config: warmup_steps must be an integer or \"auto\"");
      }
      tc.warmup_steps = kAutoWarmup;
    } else {
      tc.warmup_steps = get_u32(obj, "warmup_steps");
    }
  }
  tc.weight_decay = get_f64(obj, "weight_decay", tc.weight_decay);
  tc.clip_norm = get_f64(obj, "clip_norm", tc.clip_norm);
  if (find(obj, "schedule")) tc.schedule = lr_schedule_from_name(get_str(obj, "schedule"));
  tc.log_every = get_u32(obj, "log_every", tc.log_every);
  return tc;
}

AttackSpec parse_attack(const json& obj, size_t index) {
  const std::string where = "attacks[" + std::to_string(index) + "]";
  check_keys(obj, {"kind", "signal", "variance_floor", "gamma", "z_count", "max_refs_per_side"},
             where.c_str());
  AttackSpec spec;
  spec.kind = attack_kind_from_name(get_str(obj, "kind"));
  spec.signal = signal_kind_from_name(get_str(obj, "signal", "loss"));
  spec.variance_floor = get_f64(obj, "variance_floor", spec.variance_floor);
  spec.gamma = get_f64(obj, "gamma", spec.gamma);
  spec.z_count = get_u32(obj, "z_count", spec.z_count);
  spec.max_refs_per_side = get_u32(obj, "max_refs_per_side", spec.max_refs_per_side);
  return spec;
}

ExtractionConfig parse_extraction(const json& obj) {
  check_keys(obj, {"top_k", "prefix_len", "suffix_len", "target_prob"}, "report.extraction");
  ExtractionConfig ec;
  ec.top_k = get_u32(obj, "top_k", ec.top_k);
  ec.prefix_len = get_u32(obj, "prefix_len");
  ec.suffix_len = get_u32(obj, "suffix_len");
  ec.target_prob = get_f64(obj, "target_prob", ec.target_prob);
  return ec;
}

ReportConfig parse_report(const json& obj) {
  check_keys(obj, {"target_model", "fpr_grid", "partition_k", "primary_attack", "extraction"},
             "report");
  ReportConfig rc;
  rc.target_model = get_u32(obj, "target_model", rc.target_model);
  if (const json* grid = find(obj, "fpr_grid")) {
    if (!grid->is_array() || grid->empty()) {
      throw ConfigError("config: fpr_grid must be a non-empty array");
    }
    rc.fpr_grid.clear();
    for (const json& v : *grid) {
      if (!v.is_number()) throw ConfigError("config: fpr_grid entries must be numbers");
      rc.fpr_grid.push_back(v.get<double>());
    }
  }
  rc.partition_k = get_u32(obj, "partition_k", rc.partition_k);
  rc.primary_attack = get_u32(obj, "primary_attack", rc.primary_attack);
  if (const json* ext = find(obj, "extraction")) {
    if (!ext->is_object()) throw ConfigError("config: report.extraction must be an object");
    rc.extraction = parse_extraction(*ext);
  }
  return rc;
}

json attack_to_json(const AttackSpec& spec) {
  return {{"kind", attack_kind_name(spec.kind)},
          {"signal", signal_kind_name(spec.signal)},
          {"variance_floor", spec.variance_floor},
          {"gamma", spec.gamma},
          {"z_count", spec.z_count},
          {"max_refs_per_side", spec.max_refs_per_side}};
}

}  // namespace

void RunConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("config: corpus path is empty");
  if (!(df_sample_frac > 0.0) || df_sample_frac > 1.0) {
    throw ConfigError("config: df_sample_frac must lie in (0, 1]");
  }
  if (num_models == 0) throw ConfigError("config: num_models must be at least 1");
  if (parallelism == 0) throw ConfigError("config: parallelism must be at least 1");
  if (model.seq_len != seq_len) {
    throw ConfigError("config: model seq_len must equal the top-level seq_len");
  }
  model.validate();
  train_tpl.validate();
  if (attacks.empty()) throw ConfigError("config: at least one attack is required");
  for (size_t i = 0; i < attacks.size(); ++i) {
    const AttackSpec& a = attacks[i];
    const std::string where = "config: attacks[" + std::to_string(i) + "]: ";
    if (!(a.variance_floor > 0.0)) throw ConfigError(where + "variance_floor must be positive");
    if (!(a.gamma > 0.0)) throw ConfigError(where + "gamma must be positive");
    const bool needs_z =
        a.kind == AttackKind::kRmiaOnline || a.kind == AttackKind::kRmiaOffline;
    if (needs_z && a.z_count == 0) {
      throw ConfigError(where + std::string(attack_kind_name(a.kind)) +
                        " requires z_count >= 1");
    }
    if (!needs_z && a.z_count != 0) {
      throw ConfigError(where + std::string(attack_kind_name(a.kind)) +
                        " does not take z_count");
    }
  }
  if (report.target_model >= num_models) {
    throw ConfigError("config: report.target_model is out of range");
  }
  if (report.primary_attack >= attacks.size()) {
    throw ConfigError("config: report.primary_attack is out of range");
  }
  if (report.partition_k == 0) throw ConfigError("config: partition_k must be at least 1");
  for (double f : report.fpr_grid) {
    if (!(f > 0.0) || f > 1.0) throw ConfigError("config: fpr_grid entries must lie in (0, 1]");
  }
  if (report.extraction) report.extraction->validate();
}

RunConfig run_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(doc,
             {"corpus", "seq_len", "dedup_threshold", "df_sample_frac", "master_seed",
              "num_models", "parallelism", "model", "train", "attacks", "report"},
             "the top level");

  RunConfig cfg;
  cfg.corpus_path = get_str(doc, "corpus");
  cfg.seq_len = get_u32(doc, "seq_len");
  cfg.dedup_threshold = get_u32(doc, "dedup_threshold", 0u);
  cfg.df_sample_frac = get_f64(doc, "df_sample_frac", 1.0);
  cfg.master_seed = get_u64(doc, "master_seed");
  cfg.num_models = get_u32(doc, "num_models");
  cfg.parallelism = get_u32(doc, "parallelism", 1u);

  const json* model = find(doc, "model");
  if (!model || !model->is_object()) throw ConfigError("config: 'model' object is required");
  cfg.model = parse_model(*model, cfg.seq_len);

  const json* train = find(doc, "train");
  if (!train || !train->is_object()) throw ConfigError("config: 'train' object is required");
  cfg.train_tpl = parse_train(*train);

  const json* attacks = find(doc, "attacks");
  if (!attacks || !attacks->is_array() || attacks->empty()) {
    throw ConfigError("config: 'attacks' must be a non-empty array");
  }
  for (size_t i = 0; i < attacks->size(); ++i) {
    if (!(*attacks)[i].is_object()) {
      throw ConfigError("config: attacks[" + std::to_string(i) + "] must be an object");
    }
    cfg.attacks.push_back(parse_attack((*attacks)[i], i));
  }

  if (const json* report = find(doc, "report")) {
    if (!report->is_object()) throw ConfigError("config: 'report' must be an object");
    cfg.report = parse_report(*report);
  }

  cfg.validate();
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
  json train = {{"epochs", cfg.train_tpl.epochs},
                {"batch_size", cfg.train_tpl.batch_size},
                {"init_lr", cfg.train_tpl.init_lr},
                {"peak_lr", cfg.train_tpl.peak_lr},
                {"final_lr", cfg.train_tpl.final_lr},
                {"weight_decay", cfg.train_tpl.weight_decay},
                {"clip_norm", cfg.train_tpl.clip_norm},
                {"schedule", lr_schedule_name(cfg.train_tpl.schedule)},
                {"log_every", cfg.train_tpl.log_every}};
  if (cfg.train_tpl.warmup_steps == kAutoWarmup) {
    train["warmup_steps"] = "auto";
  } else {
    train["warmup_steps"] = cfg.train_tpl.warmup_steps;
  }
  json attacks = json::array();
  for (const AttackSpec& a : cfg.attacks) attacks.push_back(attack_to_json(a));
  json report = {{"target_model", cfg.report.target_model},
                 {"fpr_grid", cfg.report.fpr_grid},
                 {"partition_k", cfg.report.partition_k},
                 {"primary_attack", cfg.report.primary_attack}};
  if (cfg.report.extraction) {
    report["extraction"] = {{"top_k", cfg.report.extraction->top_k},
                            {"prefix_len", cfg.report.extraction->prefix_len},
                            {"suffix_len", cfg.report.extraction->suffix_len},
                            {"target_prob", cfg.report.extraction->target_prob}};
  }
  const json doc = {{"corpus", cfg.corpus_path},
                    {"seq_len", cfg.seq_len},
                    {"dedup_threshold", cfg.dedup_threshold},
                    {"df_sample_frac", cfg.df_sample_frac},
                    {"master_seed", cfg.master_seed},
                    {"num_models", cfg.num_models},
                    {"parallelism", cfg.parallelism},
                    {"model",
                     {{"embed_dim", cfg.model.embed_dim},
                      {"num_layers", cfg.model.num_layers},
                      {"num_heads", cfg.model.num_heads},
                      {"hidden_dim", cfg.model.hidden_dim}}},
                    {"train", train},
                    {"attacks", attacks},
                    {"report", report}};
  return doc.dump(2) + "\n";
}

namespace {

uint64_t fnv1a(uint64_t h, const void* data, size_t size) {
  const uint8_t* b = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < size; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t run_config_hash(const RunConfig& cfg, const std::vector<uint8_t>& corpus_bytes) {
  // The config's own corpus path is excluded from the hash (the bytes are
  // what matter); hashing the normalized JSON minus that field would be
  // brittle, so hash the normalized JSON of a copy with a fixed path.
  RunConfig keyed = cfg;
  keyed.corpus_path = "<corpus>";
  const std::string text = run_config_json(keyed);
  uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, text.data(), text.size());
  h = mix64(h ^ corpus_bytes.size());
  h = fnv1a(h, corpus_bytes.data(), corpus_bytes.size());
  return mix64(h);
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kPrepare:
      return "prepare";
    case Stage::kFarmTrain:
      return "farm-train";
    case Stage::kFarmScore:
      return "farm-score";
    case Stage::kAttack:
      return "attack";
    case Stage::kReport:
      return "report";
    case Stage::kExtract:
      return "extract";
    case Stage::kAll:
      return "all";
  }
  throw ConfigError("unknown stage value");
}

Stage stage_from_name(std::string_view name) {
  if (name == "prepare") return Stage::kPrepare;
  if (name == "farm-train") return Stage::kFarmTrain;
  if (name == "farm-score") return Stage::kFarmScore;
  if (name == "attack") return Stage::kAttack;
  if (name == "report") return Stage::kReport;
  if (name == "extract") return Stage::kExtract;
  if (name == "all") return Stage::kAll;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string attack_csv_name(uint32_t index, AttackKind kind) {
  return "attack_" + std::to_string(index) + "_" + attack_kind_name(kind) + ".csv";
}

std::string roc_tsv_name(uint32_t index, AttackKind kind) {
  return "roc_" + std::to_string(index) + "_" + attack_kind_name(kind) + ".tsv";
}

std::string resolve_run_dir(const RunConfig& cfg, const std::vector<uint8_t>& corpus_bytes,
                            const std::string& run_dir_override) {
  if (!run_dir_override.empty()) return run_dir_override;
  const char* root = std::getenv("TINYMIA_RUN_ROOT");
  const std::string base = (root && *root) ? root : "runs";
  return base + "/run_" + hash_hex(run_config_hash(cfg, corpus_bytes));
}

std::vector<uint32_t> select_z_population(uint64_t master_seed, uint32_t z_count,
                                          uint64_t num_examples) {
  if (z_count == 0) return {};
  if (z_count >= num_examples) {
    throw ConfigError("z_count " + std::to_string(z_count) +
                      " must leave at least one audited example");
  }
  std::vector<uint32_t> ids(num_examples);
  for (uint64_t i = 0; i < num_examples; ++i) ids[i] = static_cast<uint32_t>(i);
  std::sort(ids.begin(), ids.end(), [&](uint32_t a, uint32_t b) {
    const uint64_t ha = hash3(master_seed, StreamTag::kZSelect, a, 0);
    const uint64_t hb = hash3(master_seed, StreamTag::kZSelect, b, 0);
    if (ha != hb) return ha < hb;
    return a < b;
  });
  ids.resize(z_count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

AttackConfig make_attack_config(const AttackSpec& spec, uint64_t master_seed,
                                uint64_t num_examples) {
  AttackConfig cfg;
  cfg.kind = spec.kind;
  cfg.signal = spec.signal;
  cfg.variance_floor = spec.variance_floor;
  cfg.gamma = spec.gamma;
  cfg.max_refs_per_side = spec.max_refs_per_side;
  if (spec.kind == AttackKind::kRmiaOnline || spec.kind == AttackKind::kRmiaOffline) {
    cfg.z_population = select_z_population(master_seed, spec.z_count, num_examples);
  }
  return cfg;
}

namespace {

// Shared state for one pipeline invocation; datasets and matrices are
// derived lazily and cached.
struct Context {
  RunConfig cfg;
  std::vector<uint8_t> corpus_bytes;
  uint64_t config_hash = 0;
  std::string run_dir;
  uint32_t parallelism = 1;
  std::ostream* log = nullptr;

  std::optional<Dataset> ds;
  std::vector<std::pair<uint32_t, uint32_t>> id_map;
  std::optional<std::vector<ExampleStats>> stats;
  std::optional<MembershipMatrix> mm;
  std::optional<FarmManifest> manifest;
  std::optional<ScoreMatrix> loss_scores;
  std::optional<ScoreMatrix> logit_scores;

  std::string path(const std::string& name) const { return run_dir + "/" + name; }

  void require(const std::string& name) const {
    if (!file_exists(path(name))) {
      throw PrereqError("missing artifact '" + name + "' in " + run_dir +
                        "; run the earlier stages first");
    }
  }

  const Dataset& dataset() {
    if (!ds) {
      Dataset d0 = load_corpus(cfg.corpus_path, cfg.seq_len);
      if (cfg.dedup_threshold > 0) {
        DedupResult dd = dedup_prefix(d0, cfg.dedup_threshold);
        ds = std::move(dd.dataset);
        id_map = std::move(dd.id_map);
      } else {
        ds = std::move(d0);
      }
    }
    return *ds;
  }

  const std::vector<ExampleStats>& dataset_statistics() {
    if (!stats) {
      const Dataset& d = dataset();
      const DfTable df = build_df_table(d, cfg.df_sample_frac, cfg.master_seed);
      stats = dataset_stats(d, df);
    }
    return *stats;
  }

  const MembershipMatrix& membership() {
    if (!mm) {
      require(kMembershipName);
      MembershipMatrix loaded = read_membership(path(kMembershipName));
      const Dataset& d = dataset();
      if (loaded.num_models() != cfg.num_models || loaded.num_examples() != d.examples.size()) {
        throw DataError("membership matrix dimensions do not match the configuration");
      }
      if (!(loaded == assign_membership(cfg.master_seed, cfg.num_models, d.examples.size()))) {
        throw DataError("membership matrix does not match the master seed");
      }
      mm = std::move(loaded);
    }
    return *mm;
  }

  const FarmManifest& farm_manifest() {
    if (!manifest) {
      require(kManifestName);
      manifest = load_manifest(path(kManifestName));
    }
    return *manifest;
  }

  const ScoreMatrix& scores(SignalKind kind) {
    auto& slot = kind == SignalKind::kLoss ? loss_scores : logit_scores;
    if (!slot) {
      const char* name = kind == SignalKind::kLoss ? kLossScoresName : kLogitScoresName;
      require(name);
      slot = read_score_matrix(path(name));
      if (slot->kind != kind) {
        throw DataError(std::string("score file '") + name + "' holds the wrong signal kind");
      }
    }
    return *slot;
  }

  FarmConfig farm_config() const {
    FarmConfig fc;
    fc.master_seed = cfg.master_seed;
    fc.num_models = cfg.num_models;
    fc.model = cfg.model;
    fc.train_tpl = cfg.train_tpl;
    fc.parallelism = parallelism;
    return fc;
  }

  AttackResult attack_result(uint32_t index) {
    const AttackSpec& spec = cfg.attacks[index];
    const AttackConfig acfg =
        make_attack_config(spec, cfg.master_seed, dataset().examples.size());
    return run_attack(scores(spec.signal), membership(), cfg.report.target_model, acfg);
  }

  void note(const std::string& line) const {
    if (log) *log << line << "\n";
  }
};

bool all_exist(const Context& ctx, const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    if (!file_exists(ctx.path(name))) return false;
  }
  return true;
}

void stage_prepare(Context& ctx) {
  std::vector<std::string> outputs = {kLockName, kMembershipName, kStatsName};
  if (ctx.cfg.dedup_threshold > 0) outputs.push_back(kIdMapName);
  if (all_exist(ctx, outputs)) {
    ctx.note("[skip] prepare: outputs present");
    return;
  }
  const Dataset& ds = ctx.dataset();
  ctx.note("[prepare] " + std::to_string(ds.examples.size()) + " examples, seq_len " +
           std::to_string(ds.seq_len));
  if (ctx.cfg.dedup_threshold > 0) {
    write_text_atomic(ctx.path(kIdMapName), id_map_csv(ctx.id_map));
  }
  write_text_atomic(ctx.path(kStatsName), stats_csv(ctx.dataset_statistics()));
  const MembershipMatrix mm =
      assign_membership(ctx.cfg.master_seed, ctx.cfg.num_models, ds.examples.size());
  write_membership(ctx.path(kMembershipName), mm);
  const json lock = {{"config_hash", hash_hex(ctx.config_hash)},
                     {"config", json::parse(run_config_json(ctx.cfg))}};
  write_text_atomic(ctx.path(kLockName), lock.dump(2) + "\n");
}

void stage_farm_train(Context& ctx) {
  const std::string manifest_path = ctx.path(kManifestName);
  if (file_exists(manifest_path)) {
    const FarmManifest existing = load_manifest(manifest_path);
    const bool all_done =
        existing.rows.size() == ctx.cfg.num_models &&
        std::all_of(existing.rows.begin(), existing.rows.end(),
                    [](const FarmRow& r) { return r.status == ModelStatus::kDone; });
    if (all_done) {
      ctx.note("[skip] farm-train: all models done");
      ctx.manifest = existing;
      return;
    }
  }
  ctx.require(kMembershipName);
  ctx.note("[farm-train] training " + std::to_string(ctx.cfg.num_models) + " models");
  ctx.manifest = train_farm(ctx.dataset(), ctx.membership(), ctx.farm_config(), ctx.run_dir);
}

void stage_farm_score(Context& ctx) {
  if (all_exist(ctx, {kLossScoresName, kLogitScoresName})) {
    ctx.note("[skip] farm-score: score matrices present");
    return;
  }
  ctx.note("[farm-score] evaluating the farm on every example");
  score_farm(ctx.farm_manifest(), ctx.dataset(), ctx.membership(), ctx.run_dir,
             ctx.parallelism);
}

void stage_attack(Context& ctx) {
  std::vector<std::string> outputs;
  for (uint32_t i = 0; i < ctx.cfg.attacks.size(); ++i) {
    outputs.push_back(attack_csv_name(i, ctx.cfg.attacks[i].kind));
  }
  if (all_exist(ctx, outputs)) {
    ctx.note("[skip] attack: all attack outputs present");
    return;
  }
  for (uint32_t i = 0; i < ctx.cfg.attacks.size(); ++i) {
    const AttackResult res = ctx.attack_result(i);
    write_text_atomic(ctx.path(outputs[i]), attack_csv(res));
    ctx.note("[attack] " + outputs[i] + ": " + std::to_string(res.rows.size()) + " rows, " +
             std::to_string(res.excluded_ids.size()) + " excluded");
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json partition_medians(const std::vector<uint32_t>& ids,
                       const std::vector<ExampleStats>& stats) {
  std::vector<double> lens, tfidfs;
  for (uint32_t id : ids) {
    const ExampleStats& s = stats[id];
    lens.push_back(static_cast<double>(s.token_len));
    tfidfs.push_back(s.mean_tfidf);
  }
  return {{"median_token_len", median_of(lens)}, {"median_mean_tfidf", median_of(tfidfs)}};
}

// Parses "example_id,last_seen_step" CSVs written by the farm.
std::vector<std::pair<uint32_t, uint32_t>> parse_order_csv(const std::string& text) {
  std::vector<std::pair<uint32_t, uint32_t>> out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line != "example_id,last_seen_step") {
        throw DataError("unexpected training-order CSV header: " + line);
      }
      continue;
    }
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed training-order CSV line: " + line);
    out.emplace_back(static_cast<uint32_t>(std::stoul(line.substr(0, comma))),
                     static_cast<uint32_t>(std::stoul(line.substr(comma + 1))));
  }
  return out;
}

void stage_report(Context& ctx) {
  if (file_exists(ctx.path(kSummaryName))) {
    ctx.note("[skip] report: summary present");
    return;
  }
  // The attack stage must have materialized its outputs first.
  for (uint32_t i = 0; i < ctx.cfg.attacks.size(); ++i) {
    ctx.require(attack_csv_name(i, ctx.cfg.attacks[i].kind));
  }

  json attack_summaries = json::array();
  for (uint32_t i = 0; i < ctx.cfg.attacks.size(); ++i) {
    const AttackSpec& spec = ctx.cfg.attacks[i];
    const AttackResult res = ctx.attack_result(i);
    const RocCurve curve = roc(res.rows);
    const std::string roc_file = roc_tsv_name(i, spec.kind);
    write_text_atomic(ctx.path(roc_file), roc_tsv(curve));
    if (i == ctx.cfg.report.primary_attack) {
      write_text_atomic(ctx.path(kRocName), roc_tsv(curve));
    }

    const double fpr_floor = 1.0 / static_cast<double>(curve.n_neg);
    json grid = json::array();
    for (double target : ctx.cfg.report.fpr_grid) {
      const bool clamped = target < fpr_floor;
      const double effective = clamped ? fpr_floor : target;
      grid.push_back({{"fpr", target},
                      {"effective_fpr", effective},
                      {"clamped_to_floor", clamped},
                      {"tpr", tpr_at_fpr(curve, effective)}});
    }
    attack_summaries.push_back(
        {{"index", i},
         {"kind", attack_kind_name(spec.kind)},
         {"signal", signal_kind_name(spec.signal)},
         {"rows", res.rows.size()},
         {"excluded", res.excluded_ids.size()},
         {"n_pos", curve.n_pos},
         {"n_neg", curve.n_neg},
         {"auc", curve.auc},
         {"roc_file", roc_file},
         {"fpr_floor", fpr_floor},
         {"fpr_floor_note",
          "empirical curves cannot resolve FPR below 1/n_neg = " + format_double(fpr_floor) +
              "; grid entries below it are evaluated at the floor and marked clamped"},
         {"tpr_at_fpr", grid}});
  }

  // Per-example vulnerability under the primary attack, when that attack
  // has a calibrated member threshold.
  const uint32_t pi = ctx.cfg.report.primary_attack;
  const AttackSpec& primary = ctx.cfg.attacks[pi];
  json vulnerability;
  if (primary.kind == AttackKind::kLossBaseline) {
    vulnerability = {{"available", false},
                     {"reason", "the loss baseline has no calibrated member threshold"}};
  } else if (ctx.cfg.num_models < 3) {
    vulnerability = {{"available", false},
                     {"reason", "leave-one-out vulnerability needs a farm of at least 3"}};
  } else {
    const AttackConfig acfg =
        make_attack_config(primary, ctx.cfg.master_seed, ctx.dataset().examples.size());
    const VulnerabilityReport rep =
        per_example_tp_prob(ctx.scores(primary.signal), ctx.membership(), acfg,
                            ctx.parallelism);
    write_text_atomic(ctx.path(kVulnerabilityName),
                      vulnerability_csv(rep.rows, ctx.dataset_statistics()));

    ctx.require(order_name(ctx.cfg.report.target_model));
    const std::vector<std::pair<uint32_t, uint32_t>> order =
        parse_order_csv(read_file_text(ctx.path(order_name(ctx.cfg.report.target_model))));
    const std::vector<StepBucket> buckets = vulnerability_by_step(rep.rows, order);
    write_text_atomic(ctx.path(kByStepName), step_buckets_csv(buckets));

    double mean_tp = 0.0;
    for (const VulnerabilityRow& row : rep.rows) mean_tp += row.tp_mean;
    if (!rep.rows.empty()) mean_tp /= static_cast<double>(rep.rows.size());

    json partitions;
    if (rep.rows.size() >= 3 * static_cast<size_t>(ctx.cfg.report.partition_k)) {
      const VulnerabilityPartitions parts =
          partition_vulnerability(rep.rows, ctx.cfg.report.partition_k);
      const std::vector<ExampleStats>& stats = ctx.dataset_statistics();
      partitions = {{"k", parts.k},
                    {"least", parts.least},
                    {"most", parts.most},
                    {"hardest", parts.hardest},
                    {"least_stats", partition_medians(parts.least, stats)},
                    {"most_stats", partition_medians(parts.most, stats)},
                    {"hardest_stats", partition_medians(parts.hardest, stats)}};
    } else {
      partitions = {{"unavailable_reason", "needs at least 3k examples with trials"}};
    }

    vulnerability = {{"available", true},
                     {"attack_index", pi},
                     {"kind", attack_kind_name(primary.kind)},
                     {"threshold", member_threshold(primary.kind)},
                     {"examples_reported", rep.rows.size()},
                     {"never_member", rep.never_member.size()},
                     {"total_trials", rep.total_trials},
                     {"pooled_recall",
                      rep.total_trials == 0
                          ? 0.0
                          : static_cast<double>(rep.total_successes) /
                                static_cast<double>(rep.total_trials)},
                     {"mean_tp_prob", mean_tp},
                     {"excluded_in_attacks", rep.per_attack_excluded},
                     {"by_step_file", kByStepName},
                     {"partitions", partitions}};
  }

  const json summary = {{"config_hash", hash_hex(ctx.config_hash)},
                        {"target_model", ctx.cfg.report.target_model},
                        {"attacks", attack_summaries},
                        {"vulnerability", vulnerability}};
  write_text_atomic(ctx.path(kSummaryName), summary.dump(2) + "\n");
  ctx.note("[report] wrote " + std::string(kSummaryName));
}

void stage_extract(Context& ctx, bool invoked_directly) {
  if (!ctx.cfg.report.extraction) {
    if (invoked_directly) {
      throw ConfigError("config: report.extraction is required for the extract stage");
    }
    ctx.note("[skip] extract: not configured");
    return;
  }
  if (file_exists(ctx.path(kExtractionName))) {
    ctx.note("[skip] extract: output present");
    return;
  }
  const uint32_t pi = ctx.cfg.report.primary_attack;
  ctx.require(attack_csv_name(pi, ctx.cfg.attacks[pi].kind));
  const FarmManifest& manifest = ctx.farm_manifest();
  const FarmRow& target_row = manifest.rows.at(ctx.cfg.report.target_model);
  ctx.require(target_row.checkpoint);

  const Model target = load_checkpoint(ctx.path(target_row.checkpoint));
  const AttackResult res = ctx.attack_result(pi);
  const ExtractionReport report =
      extraction_report(target, ctx.dataset(), res, *ctx.cfg.report.extraction);
  write_text_atomic(ctx.path(kExtractionName), extraction_csv(report));

  const json summary = {{"attack_index", pi},
                        {"kind", attack_kind_name(ctx.cfg.attacks[pi].kind)},
                        {"target_model", ctx.cfg.report.target_model},
                        {"top_k", ctx.cfg.report.extraction->top_k},
                        {"prefix_len", report.prefix_len},
                        {"suffix_len", report.suffix_len},
                        {"target_prob", ctx.cfg.report.extraction->target_prob},
                        {"rows", report.rows.size()},
                        {"member_count", report.member_count},
                        {"skipped_too_short", report.skipped_too_short},
                        {"spearman_score_vs_logprob", report.spearman_score_vs_logprob}};
  write_text_atomic(ctx.path(kExtractionSummaryName), summary.dump(2) + "\n");
  ctx.note("[extract] wrote " + std::string(kExtractionName));
}

void dispatch(Context& ctx, Stage stage) {
  switch (stage) {
    case Stage::kPrepare:
      stage_prepare(ctx);
      return;
    case Stage::kFarmTrain:
      stage_farm_train(ctx);
      return;
    case Stage::kFarmScore:
      stage_farm_score(ctx);
      return;
    case Stage::kAttack:
      stage_attack(ctx);
      return;
    case Stage::kReport:
      stage_report(ctx);
      return;
    case Stage::kExtract:
      stage_extract(ctx, /*invoked_directly=*/true);
      return;
    case Stage::kAll:
      stage_prepare(ctx);
      stage_farm_train(ctx);
      stage_farm_score(ctx);
      stage_attack(ctx);
      stage_report(ctx);
      stage_extract(ctx, /*invoked_directly=*/false);
      return;
  }
  throw ConfigError("unknown stage value");
}

}  // namespace

void run_pipeline(const std::string& config_path, const std::string& run_dir_override,
                  uint32_t parallelism_override, Stage stage, std::ostream& log) {
  Context ctx;
  ctx.log = &log;
  if (!file_exists(config_path)) {
    throw ConfigError("config file '" + config_path + "' does not exist");
  }
  ctx.cfg = run_config_from_json(read_file_text(config_path));
  if (!file_exists(ctx.cfg.corpus_path)) {
    throw ConfigError("config: corpus file '" + ctx.cfg.corpus_path + "' does not exist");
  }
  ctx.corpus_bytes = read_file_bytes(ctx.cfg.corpus_path);
  ctx.config_hash = run_config_hash(ctx.cfg, ctx.corpus_bytes);
  ctx.run_dir = resolve_run_dir(ctx.cfg, ctx.corpus_bytes, run_dir_override);
  ctx.parallelism = parallelism_override > 0 ? parallelism_override : ctx.cfg.parallelism;
  std::filesystem::create_directories(ctx.run_dir);

  // Hash guard: a run directory never mixes configurations.
  const std::string lock_path = ctx.path(kLockName);
  if (file_exists(lock_path)) {
    json lock;
    try {
      lock = json::parse(read_file_text(lock_path));
    } catch (const json::exception& e) {
      throw DataError(std::string("corrupt ") + kLockName + ": " + e.what());
    }
    const std::string prev = lock.value("config_hash", "");
    if (prev != hash_hex(ctx.config_hash)) {
      throw ConfigError("run directory " + ctx.run_dir + " belongs to config " + prev +
                        " but this config hashes to " + hash_hex(ctx.config_hash) +
                        "; use a fresh --run-dir");
    }
  } else if (stage != Stage::kPrepare && stage != Stage::kAll) {
    throw PrereqError(std::string("missing artifact '") + kLockName + "' in " + ctx.run_dir +
                      "; run the prepare stage first");
  }

  log << "[run] dir " << ctx.run_dir << " config " << hash_hex(ctx.config_hash) << " stage "
      << stage_name(stage) << " parallelism " << ctx.parallelism << "\n";
  dispatch(ctx, stage);
}

}  // namespace tinymia
