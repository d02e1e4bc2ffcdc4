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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "tinymia/attacks.hpp"
#include "tinymia/common.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/extraction.hpp"
#include "tinymia/metrics.hpp"
#include "tinymia/model.hpp"
#include "tinymia/pipeline.hpp"
#include "tinymia/scorestore.hpp"

namespace py = pybind11;
using namespace tinymia;

namespace {

GaussianFit fit_from_pair(const std::pair<double, double>& p) {
  GaussianFit f;
  f.mu = p.first;
  f.sigma = p.second;
  return f;
}

MembershipMatrix membership_from_rows(const std::vector<std::vector<int>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw ConfigError("membership must be a non-empty list of equal-length rows");
  }
  const uint64_t n = rows.front().size();
  MembershipMatrix mm(static_cast<uint32_t>(rows.size()), n);
  for (uint32_t m = 0; m < rows.size(); ++m) {
    if (rows[m].size() != n) throw ConfigError("membership rows differ in length");
    for (uint64_t x = 0; x < n; ++x) mm.set(m, x, rows[m][x] != 0);
  }
  return mm;
}

ScoreMatrix scores_from_rows(SignalKind kind, const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw ConfigError("scores must be a non-empty list of equal-length rows");
  }
  const uint64_t n = rows.front().size();
  ScoreMatrix sm(kind, static_cast<uint32_t>(rows.size()), n);
  for (uint32_t m = 0; m < rows.size(); ++m) {
    if (rows[m].size() != n) throw ConfigError("score rows differ in length");
    for (uint64_t x = 0; x < n; ++x) sm.set(m, x, static_cast<float>(rows[m][x]));
  }
  return sm;
}

py::dict attack_result_dict(const AttackResult& r) {
  std::vector<uint32_t> ids;
  std::vector<double> scores;
  std::vector<bool> members;
  ids.reserve(r.rows.size());
  for (const AttackScore& row : r.rows) {
    ids.push_back(row.example_id);
    scores.push_back(row.score);
    members.push_back(row.is_member);
  }
  py::dict d;
  d["kind"] = attack_kind_name(r.kind);
  d["signal"] = signal_kind_name(r.signal);
  d["target_model"] = r.target_model;
  d["example_ids"] = ids;
  d["scores"] = scores;
  d["is_member"] = members;
  d["excluded_ids"] = r.excluded_ids;
  return d;
}

py::dict signal_dict(const SignalRecord& s) {
  py::dict d;
  d["example_id"] = s.example_id;
  d["loss"] = s.loss;
  d["mean_logit"] = s.mean_logit;
  d["token_logprobs"] = s.token_logprobs;
  return d;
}

std::vector<AttackScore> rows_from_lists(const std::vector<double>& scores,
                                         const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ConfigError("scores and labels must be the same non-zero length");
  }
  std::vector<AttackScore> rows(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    rows[i].example_id = static_cast<uint32_t>(i);
    rows[i].score = scores[i];
    rows[i].is_member = labels[i] != 0;
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Membership-inference auditing core: byte-level transformer training, "
            "shadow-model attacks, and their evaluation metrics.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<PrereqError>(m, "PrereqError", PyExc_FileNotFoundError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.attr("PAD_ID") = kPadId;
  m.attr("UNK_ID") = kUnkId;
  m.attr("VOCAB_SIZE") = kVocabSize;

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](uint32_t seq_len, uint32_t embed_dim, uint32_t num_layers,
                       uint32_t num_heads, uint32_t hidden_dim) {
             ModelConfig cfg;
             cfg.seq_len = seq_len;
             cfg.embed_dim = embed_dim;
             cfg.num_layers = num_layers;
             cfg.num_heads = num_heads;
             cfg.hidden_dim = hidden_dim;
             cfg.validate();
             return cfg;
           }),
           py::arg("seq_len"), py::arg("embed_dim"), py::arg("num_layers"),
           py::arg("num_heads"), py::arg("hidden_dim"))
      .def_readonly("seq_len", &ModelConfig::seq_len)
      .def_readonly("embed_dim", &ModelConfig::embed_dim)
      .def_readonly("num_layers", &ModelConfig::num_layers)
      .def_readonly("num_heads", &ModelConfig::num_heads)
      .def_readonly("hidden_dim", &ModelConfig::hidden_dim)
      .def("param_count", &ModelConfig::param_count);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](uint64_t seed, uint32_t epochs, uint32_t batch_size, double init_lr,
                       double peak_lr, double final_lr, uint32_t warmup_steps,
                       double weight_decay, double clip_norm, const std::string& schedule,
                       uint32_t log_every) {
             TrainConfig tc;
             tc.seed = seed;
             tc.epochs = epochs;
             tc.batch_size = batch_size;
             tc.init_lr = init_lr;
             tc.peak_lr = peak_lr;
             tc.final_lr = final_lr;
             tc.warmup_steps = warmup_steps;
             tc.weight_decay = weight_decay;
             tc.clip_norm = clip_norm;
             if (schedule == "cosine") {
               tc.schedule = LrSchedule::kCosine;
             } else if (schedule == "linear") {
               tc.schedule = LrSchedule::kLinear;
             } else {
               throw ConfigError("schedule must be 'cosine' or 'linear'");
             }
             tc.log_every = log_every;
             tc.validate();
             return tc;
           }),
           py::arg("seed") = 0, py::arg("epochs") = 1, py::arg("batch_size") = 32,
           py::arg("init_lr") = 1e-7, py::arg("peak_lr") = 3e-4, py::arg("final_lr") = 3e-5,
           py::arg("warmup_steps") = kAutoWarmup, py::arg("weight_decay") = 0.1,
           py::arg("clip_norm") = 1.0, py::arg("schedule") = "cosine", py::arg("log_every") = 10)
      .def_readonly("seed", &TrainConfig::seed)
      .def_readonly("epochs", &TrainConfig::epochs)
      .def_readonly("batch_size", &TrainConfig::batch_size);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const std::vector<std::string>& lines, uint32_t seq_len) {
             return dataset_from_lines(lines, seq_len);
           }),
           py::arg("lines"), py::arg("seq_len"))
      .def_readonly("seq_len", &Dataset::seq_len)
      .def("__len__", &Dataset::size)
      .def("tokens",
           [](const Dataset& ds, size_t i) {
             if (i >= ds.size()) throw py::index_error();
             const auto& t = ds.examples[i].tokens;
             return std::vector<uint32_t>(t.begin(), t.end());
           },
           py::arg("i"))
      .def("real_len",
           [](const Dataset& ds, size_t i) {
             if (i >= ds.size()) throw py::index_error();
             return ds.examples[i].real_len;
           },
           py::arg("i"))
      .def("dedup",
           [](const Dataset& ds, uint32_t threshold) {
             DedupResult r = dedup_prefix(ds, threshold);
             return py::make_tuple(std::move(r.dataset), r.id_map);
           },
           py::arg("threshold"),
           "Drop examples sharing their first `threshold` tokens with a lower id; "
           "returns (survivors, [(old_id, new_id), ...]).");

  m.def("load_corpus", &load_corpus, py::arg("path"), py::arg("seq_len"));

  m.def(
      "tokenize",
      [](const std::string& text, uint32_t seq_len) {
        const Example ex = tokenize(text, seq_len);
        return py::make_tuple(std::vector<uint32_t>(ex.tokens.begin(), ex.tokens.end()),
                              ex.real_len);
      },
      py::arg("text"), py::arg("seq_len"),
      "Byte-level tokens padded/truncated to seq_len; returns (tokens, real_len).");

  py::class_<MembershipMatrix>(m, "Membership")
      .def(py::init(&membership_from_rows), py::arg("rows"))
      .def_property_readonly("num_models", &MembershipMatrix::num_models)
      .def_property_readonly("num_examples", &MembershipMatrix::num_examples)
      .def("get", &MembershipMatrix::get, py::arg("model"), py::arg("example"))
      .def("members_of", &MembershipMatrix::members_of, py::arg("model"))
      .def("row_count", &MembershipMatrix::row_count, py::arg("model"));

  m.def("assign_membership", &assign_membership, py::arg("master_seed"), py::arg("num_models"),
        py::arg("num_examples"),
        "Independent coin-flip membership, a pure function of its arguments.");

  py::class_<Model>(m, "Model")
      .def_property_readonly("config", [](const Model& mdl) { return mdl.cfg; })
      .def("param_count", [](const Model& mdl) { return mdl.cfg.param_count(); });

  m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));

  m.def(
      "train",
      [](Model& model, const Dataset& ds, const std::vector<uint32_t>& member_ids,
         const TrainConfig& tc) {
        TrainLog log;
        {
          py::gil_scoped_release release;
          log = train(model, ds, member_ids, tc);
        }
        py::dict d;
        std::vector<py::tuple> trace;
        trace.reserve(log.trace.size());
        for (const TraceEntry& e : log.trace) trace.push_back(py::make_tuple(e.step, e.lr, e.loss));
        d["trace"] = trace;
        d["last_seen_step"] = log.last_seen_step;
        d["total_steps"] = log.total_steps;
        return d;
      },
      py::arg("model"), py::arg("dataset"), py::arg("member_ids"), py::arg("train_config"));

  m.def(
      "eval_example",
      [](const Model& model, const Dataset& ds, size_t i) {
        if (i >= ds.size()) throw py::index_error();
        return signal_dict(eval_example(model, ds.examples[i]));
      },
      py::arg("model"), py::arg("dataset"), py::arg("i"));

  m.def(
      "eval_text",
      [](const Model& model, const std::string& text) {
        return signal_dict(eval_example(model, tokenize(text, model.cfg.seq_len)));
      },
      py::arg("model"), py::arg("text"),
      "Loss, mean realized logit, and per-position log-probs for one string.");

  m.def(
      "save_checkpoint",
      [](const std::string& path, const Model& model, uint64_t seed, uint64_t row_hash,
         uint32_t steps) {
        CheckpointMeta meta;
        meta.seed = seed;
        meta.membership_row_hash = row_hash;
        meta.steps_completed = steps;
        save_checkpoint(path, model, meta);
      },
      py::arg("path"), py::arg("model"), py::arg("seed") = 0,
      py::arg("membership_row_hash") = 0, py::arg("steps_completed") = 0);

  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        CheckpointMeta meta;
        Model model = load_checkpoint(path, &meta);
        py::dict d;
        d["seed"] = meta.seed;
        d["membership_row_hash"] = meta.membership_row_hash;
        d["steps_completed"] = meta.steps_completed;
        return py::make_tuple(std::move(model), d);
      },
      py::arg("path"));

  m.def(
      "lr_at",
      [](uint64_t step, uint64_t total, uint64_t warmup, double init_lr, double peak_lr,
         double final_lr, const std::string& schedule) {
        LrSchedule s;
        if (schedule == "cosine") {
          s = LrSchedule::kCosine;
        } else if (schedule == "linear") {
          s = LrSchedule::kLinear;
        } else {
          throw ConfigError("schedule must be 'cosine' or 'linear'");
        }
        return lr_at(step, total, warmup, init_lr, peak_lr, final_lr, s);
      },
      py::arg("step"), py::arg("total_steps"), py::arg("warmup_steps"), py::arg("init_lr"),
      py::arg("peak_lr"), py::arg("final_lr"), py::arg("schedule") = "cosine");

  m.def("chinchilla_examples", &chinchilla_examples, py::arg("param_count"),
        py::arg("tokens_per_example"),
        "Compute-optimal training-set size: round(20 * params / tokens_per_example).");

  m.def(
      "fit_gaussian",
      [](const std::vector<double>& samples, double variance_floor) {
        const GaussianFit f = fit_gaussian(samples, variance_floor);
        return py::make_tuple(f.mu, f.sigma);
      },
      py::arg("samples"), py::arg("variance_floor") = 1e-6,
      "Permutation-invariant (mu, sigma) with sigma floored away from zero.");

  m.def(
      "lira_online_score",
      [](double t, const std::pair<double, double>& in_fit,
         const std::pair<double, double>& out_fit) {
        return lira_online_score(t, fit_from_pair(in_fit), fit_from_pair(out_fit));
      },
      py::arg("t"), py::arg("in_fit"), py::arg("out_fit"),
      "log N(t; in) - log N(t; out) for (mu, sigma) pairs.");

  m.def(
      "lira_offline_score",
      [](double t, const std::pair<double, double>& out_fit) {
        return lira_offline_score(t, fit_from_pair(out_fit));
      },
      py::arg("t"), py::arg("out_fit"),
      "Probability mass of the OUT fit at or below t (0.5 at the OUT mean).");

  m.def("rmia_alpha", &rmia_alpha, py::arg("target_positive"), py::arg("ref_positive"));
  m.def("rmia_score", &rmia_score, py::arg("alpha_target"), py::arg("alpha_z"),
        py::arg("gamma") = 1.0);

  m.def(
      "member_threshold",
      [](const std::string& kind) { return member_threshold(attack_kind_from_name(kind)); },
      py::arg("kind"));

  m.def(
      "normalize_signal",
      [](const std::string& kind, double raw) {
        return normalize_signal(signal_kind_from_name(kind), raw);
      },
      py::arg("kind"), py::arg("raw"),
      "Orient a raw signal so larger = more member-like.");

  m.def(
      "run_attack",
      [](const std::vector<std::vector<double>>& scores,
         const std::vector<std::vector<int>>& membership, uint32_t target_model,
         const std::string& kind, const std::string& signal, double variance_floor, double gamma,
         const std::vector<uint32_t>& z_population, uint32_t max_refs_per_side) {
        AttackConfig cfg;
        cfg.kind = attack_kind_from_name(kind);
        cfg.signal = signal_kind_from_name(signal);
        cfg.variance_floor = variance_floor;
        cfg.gamma = gamma;
        cfg.z_population = z_population;
        cfg.max_refs_per_side = max_refs_per_side;
        const ScoreMatrix sm = scores_from_rows(cfg.signal, scores);
        const MembershipMatrix mm = membership_from_rows(membership);
        return attack_result_dict(run_attack(sm, mm, target_model, cfg));
      },
      py::arg("scores"), py::arg("membership"), py::arg("target_model"), py::arg("kind"),
      py::arg("signal") = "loss", py::arg("variance_floor") = 1e-6, py::arg("gamma") = 1.0,
      py::arg("z_population") = std::vector<uint32_t>{}, py::arg("max_refs_per_side") = 0,
      "Leave-one-out attack on a model-major score matrix given 0/1 membership rows.");

  m.def(
      "roc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const RocCurve c = roc(rows_from_lists(scores, labels));
        py::dict d;
        d["thresholds"] = c.thresholds;
        d["fpr"] = c.fpr;
        d["tpr"] = c.tpr;
        d["auc"] = c.auc;
        d["n_pos"] = c.n_pos;
        d["n_neg"] = c.n_neg;
        return d;
      },
      py::arg("scores"), py::arg("labels"),
      "Exact tie-aware ROC of 'member when score >= threshold'.");

  m.def(
      "tpr_at_fpr",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double fpr_target) {
        return tpr_at_fpr(roc(rows_from_lists(scores, labels)), fpr_target);
      },
      py::arg("scores"), py::arg("labels"), py::arg("fpr_target"));

  m.def("spearman", &spearman, py::arg("a"), py::arg("b"));

  m.def("np_attempts", &np_attempts, py::arg("p_seq"), py::arg("target_prob") = 0.9,
        "Attempts needed for 1-(1-p_seq)^n >= target_prob; inf when p_seq = 0.");

  m.def(
      "suffix_logprob",
      [](const Model& model, const std::string& text, uint32_t prefix_len, uint32_t suffix_len) {
        return suffix_logprob(model, tokenize(text, model.cfg.seq_len), prefix_len, suffix_len);
      },
      py::arg("model"), py::arg("text"), py::arg("prefix_len"), py::arg("suffix_len"));

  m.def(
      "read_score_matrix",
      [](const std::string& path) {
        const ScoreMatrix sm = read_score_matrix(path);
        std::vector<std::vector<double>> rows(sm.num_models);
        for (uint32_t r = 0; r < sm.num_models; ++r) {
          rows[r].assign(sm.row(r), sm.row(r) + sm.num_examples);
        }
        return py::make_tuple(signal_kind_name(sm.kind), rows);
      },
      py::arg("path"), "Returns (signal_kind, rows) from an SMX1 file.");

  m.def(
      "run_pipeline",
      [](const std::string& config_path, const std::string& run_dir, uint32_t parallelism,
         const std::string& stage) {
        std::ostringstream log;
        {
          py::gil_scoped_release release;
          run_pipeline(config_path, run_dir, parallelism, stage_from_name(stage), log);
        }
        return log.str();
      },
      py::arg("config_path"), py::arg("run_dir") = std::string(), py::arg("parallelism") = 0,
      py::arg("stage") = "all",
      "Drive the artifact pipeline from a JSON config; returns the stage log.");
}
