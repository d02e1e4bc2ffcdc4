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

#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>
#include <string>
#include <vector>

#include "tinymia/common.hpp"
#include "tinymia/corpus.hpp"
#include "tinymia/model.hpp"
#include "tinymia/net_impl.hpp"

namespace fs = std::filesystem;
using namespace tinymia;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.seq_len = 12;
  cfg.embed_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.hidden_dim = 32;
  return cfg;
}

std::string temp_path(const char* tag) {
  static int counter = 0;
  return (fs::temp_directory_path() /
          ("tinymia_model_" + std::string(tag) + "_" + std::to_string(++counter) + "_" +
           std::to_string(static_cast<unsigned>(::getpid()))))
      .string();
}

}  // namespace

TEST_CASE("model config validation and parameter count") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  // param_count must equal the flat layout's total allocation.
  CHECK(cfg.param_count() == ParamLayout::make(cfg).total);
  SUBCASE("heads must divide embed_dim") {
    cfg.num_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("byte vocabulary is fixed") {
    cfg.vocab_size = 1000;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("zero dimension rejected") {
    cfg.embed_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("initialization is a pure function of config and seed") {
  const ModelConfig cfg = tiny_config();
  const Model a = init_model(cfg, 11);
  const Model b = init_model(cfg, 11);
  const Model c = init_model(cfg, 12);
  CHECK(a.params == b.params);
  CHECK(a.params != c.params);
  CHECK(a.params.size() == cfg.param_count());
}

TEST_CASE("untrained model predicts near-uniformly") {
  const ModelConfig cfg = tiny_config();
  const double uniform = std::log(static_cast<double>(kVocabSize));
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const Model m = init_model(cfg, seed);
    for (const char* text : {"hello world", "zzzzzz", "a b c d e"}) {
      const SignalRecord sr = eval_example(m, tokenize(text, cfg.seq_len));
      CHECK(sr.loss == doctest::Approx(uniform).epsilon(0.5 / uniform));
    }
  }
}

TEST_CASE("evaluation signals are definitionally consistent") {
  const ModelConfig cfg = tiny_config();
  const Model m = init_model(cfg, 5);
  const Example ex = tokenize("abcdefg", cfg.seq_len);
  const SignalRecord sr = eval_example(m, ex);
  // One log-prob per predicted (non-pad) position: positions 1..real_len-1.
  CHECK(sr.token_logprobs.size() == ex.real_len - 1);
  double sum = 0.0;
  for (double lp : sr.token_logprobs) {
    CHECK(lp <= 0.0);
    sum += lp;
  }
  CHECK(sr.loss == doctest::Approx(-sum / static_cast<double>(sr.token_logprobs.size()))
                       .epsilon(1e-6));
  CHECK(sr.loss >= 0.0);

  SUBCASE("too-short examples rejected") {
    CHECK_THROWS_AS(eval_example(m, tokenize("a", cfg.seq_len)), DataError);
    CHECK_THROWS_AS(eval_example(m, tokenize("", cfg.seq_len)), DataError);
  }
  SUBCASE("evaluation is deterministic and read-only") {
    const SignalRecord again = eval_example(m, ex);
    CHECK(again.loss == sr.loss);
    CHECK(again.mean_logit == sr.mean_logit);
    CHECK(again.token_logprobs == sr.token_logprobs);
  }
}

TEST_CASE("batched evaluation matches single-example evaluation") {
  const ModelConfig cfg = tiny_config();
  const Model m = init_model(cfg, 9);
  const std::vector<std::string> texts = {"alpha beta", "gamma", "delta epsilon zeta",
                                          "the quick brown"};
  std::vector<Example> exs;
  for (const auto& t : texts) exs.push_back(tokenize(t, cfg.seq_len));
  std::vector<const Example*> ptrs;
  for (const auto& e : exs) ptrs.push_back(&e);
  const std::vector<SignalRecord> batch = eval_batch(m, ptrs.data(), ptrs.size());
  REQUIRE(batch.size() == exs.size());
  for (size_t i = 0; i < exs.size(); ++i) {
    const SignalRecord solo = eval_example(m, exs[i]);
    CHECK(batch[i].loss == doctest::Approx(solo.loss).epsilon(1e-6));
    CHECK(batch[i].mean_logit == doctest::Approx(solo.mean_logit).epsilon(1e-6));
    REQUIRE(batch[i].token_logprobs.size() == solo.token_logprobs.size());
    for (size_t j = 0; j < solo.token_logprobs.size(); ++j) {
      CHECK(batch[i].token_logprobs[j] == doctest::Approx(solo.token_logprobs[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("per-position softmax normalizes to one") {
  ModelConfig cfg = tiny_config();
  const ModelT<double> m = init_model_t<double>(cfg, 21);
  const ParamLayout lay = ParamLayout::make(cfg);
  const Example ex = tokenize("normalization", cfg.seq_len);
  const Example* ptr = &ex;
  const BatchRows batch = make_batch_ptrs(&ptr, 1);
  ForwardState<double> st;
  forward_net(m, lay, batch, st);
  for (Eigen::Index r = 0; r < st.logits.rows(); ++r) {
    const double mx = st.logits.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index v = 0; v < st.logits.cols(); ++v) z += std::exp(st.logits(r, v) - mx);
    const double logsum = mx + std::log(z);
    double total = 0.0;
    for (Eigen::Index v = 0; v < st.logits.cols(); ++v) {
      total += std::exp(st.logits(r, v) - logsum);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  // 1-layer, 8-dim model in double precision; both examples exercise the
  // ragged-batch path (different real lengths).
  ModelConfig cfg;
  cfg.seq_len = 10;
  cfg.embed_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.hidden_dim = 16;
  ModelT<double> m = init_model_t<double>(cfg, 77);
  const ParamLayout lay = ParamLayout::make(cfg);
  const Example e0 = tokenize("gradient!", cfg.seq_len);
  const Example e1 = tokenize("check", cfg.seq_len);
  const Example* ptrs[2] = {&e0, &e1};
  const BatchRows batch = make_batch_ptrs(ptrs, 2);

  AlignedVec<double> grad;
  loss_and_grad<double>(m, lay, batch, &grad);
  REQUIRE(grad.size() == m.params.size());

  const double h = 1e-5;
  double max_rel = 0.0;
  for (size_t i = 0; i < m.params.size(); ++i) {
    const double keep = m.params[i];
    m.params[i] = keep + h;
    const double up = loss_and_grad<double>(m, lay, batch, nullptr);
    m.params[i] = keep - h;
    const double dn = loss_and_grad<double>(m, lay, batch, nullptr);
    m.params[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-2});
    max_rel = std::max(max_rel, std::abs(grad[i] - fd) / denom);
  }
  MESSAGE("max relative gradient error ", max_rel);
  CHECK(max_rel < 1e-4);
}

TEST_CASE("learning-rate schedule endpoints and continuity") {
  const double init = 1e-7, peak = 3e-4, fin = 3e-5;
  SUBCASE("cosine endpoints") {
    CHECK(lr_at(0, 100, 10, init, peak, fin, LrSchedule::kCosine) == init);
    CHECK(lr_at(10, 100, 10, init, peak, fin, LrSchedule::kCosine) == peak);
    CHECK(lr_at(100, 100, 10, init, peak, fin, LrSchedule::kCosine) == fin);
  }
  SUBCASE("continuous at the warmup junction") {
    const double before = lr_at(9, 100, 10, init, peak, fin, LrSchedule::kCosine);
    const double at = lr_at(10, 100, 10, init, peak, fin, LrSchedule::kCosine);
    const double after = lr_at(11, 100, 10, init, peak, fin, LrSchedule::kCosine);
    CHECK(std::abs(at - before) < (peak - init) / 10.0 * 1.5);
    CHECK(std::abs(after - at) < (peak - fin) * 0.01);
    // Monotone: up during warmup, down after.
    for (uint64_t s = 1; s <= 10; ++s) {
      CHECK(lr_at(s, 100, 10, init, peak, fin, LrSchedule::kCosine) >=
            lr_at(s - 1, 100, 10, init, peak, fin, LrSchedule::kCosine));
    }
    for (uint64_t s = 11; s <= 100; ++s) {
      CHECK(lr_at(s, 100, 10, init, peak, fin, LrSchedule::kCosine) <=
            lr_at(s - 1, 100, 10, init, peak, fin, LrSchedule::kCosine));
    }
  }
  SUBCASE("linear variant is a straight line after warmup") {
    const double mid = lr_at(55, 100, 10, init, peak, fin, LrSchedule::kLinear);
    CHECK(mid == doctest::Approx((peak + fin) / 2.0));
  }
  SUBCASE("invalid spans rejected") {
    CHECK_THROWS_AS(lr_at(0, 5, 10, init, peak, fin, LrSchedule::kCosine), ConfigError);
    CHECK_THROWS_AS(lr_at(101, 100, 10, init, peak, fin, LrSchedule::kCosine), ConfigError);
  }
}

TEST_CASE("training overfits one example and is deterministic") {
  const ModelConfig cfg = tiny_config();
  Dataset ds = dataset_from_lines({"abcabcabcab", "xyzxyzxyzxy"}, cfg.seq_len);
  TrainConfig tc;
  tc.seed = 3;
  tc.epochs = 12;
  tc.batch_size = 1;
  tc.peak_lr = 3e-3;
  tc.warmup_steps = 2;
  tc.log_every = 1;

  SUBCASE("loss decreases while memorizing one example") {
    Model m = init_model(cfg, 1);
    const TrainLog log = train(m, ds, {0}, tc);
    REQUIRE(log.trace.size() >= 10);
    // Mean-per-interval trace with log_every=1: strict decrease over the
    // first 10 optimizer steps.
    for (size_t i = 1; i < 10; ++i) CHECK(log.trace[i].loss < log.trace[i - 1].loss);
    CHECK(log.total_steps == 12);
  }
  SUBCASE("same seed and data give bit-identical checkpoints") {
    Model a = init_model(cfg, 1);
    Model b = init_model(cfg, 1);
    train(a, ds, {0, 1}, tc);
    train(b, ds, {0, 1}, tc);
    CHECK(a.params == b.params);
    Model c = init_model(cfg, 1);
    TrainConfig tc2 = tc;
    tc2.seed = 4;
    train(c, ds, {0, 1}, tc2);
    CHECK(a.params != c.params);
  }
  SUBCASE("zero step size leaves parameters unchanged") {
    Model m = init_model(cfg, 1);
    const AlignedVec<float> before = m.params;
    TrainConfig frozen = tc;
    frozen.init_lr = frozen.peak_lr = frozen.final_lr = 0.0;
    frozen.weight_decay = 0.0;
    frozen.clip_norm = std::numeric_limits<double>::infinity();
    frozen.epochs = 1;
    train(m, ds, {0, 1}, frozen);
    CHECK(m.params == before);
  }
  SUBCASE("training only touches member examples") {
    Model a = init_model(cfg, 1);
    Model b = init_model(cfg, 1);
    train(a, ds, {0}, tc);
    train(b, ds, {1}, tc);
    CHECK(a.params != b.params);
  }
  SUBCASE("empty member set rejected") {
    Model m = init_model(cfg, 1);
    CHECK_THROWS_AS(train(m, ds, {}, tc), ConfigError);
  }
}

TEST_CASE("memorized examples score lower loss than held-out ones") {
  const ModelConfig cfg = tiny_config();
  const Dataset ds = dataset_from_lines({"member text one", "held-out text"}, cfg.seq_len);
  int wins = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Model m = init_model(cfg, 100 + t);
    TrainConfig tc;
    tc.seed = 200 + t;
    tc.epochs = 30;
    tc.batch_size = 1;
    tc.peak_lr = 3e-3;
    tc.warmup_steps = 3;
    train(m, ds, {0}, tc);
    const double member = eval_example(m, ds.examples[0]).loss;
    const double heldout = eval_example(m, ds.examples[1]).loss;
    if (member < heldout) ++wins;
  }
  MESSAGE("member-loss wins: ", wins, "/", trials);
  CHECK(wins >= 19);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
  const ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, 8);
  CheckpointMeta meta;
  meta.seed = 42;
  meta.membership_row_hash = 0xdeadbeefcafe1234ull;
  meta.steps_completed = 17;
  const std::string path = temp_path("ckpt");
  save_checkpoint(path, m, meta);

  SUBCASE("round-trip is bit-exact with metadata") {
    CheckpointMeta got;
    const Model back = load_checkpoint(path, &got);
    CHECK(back.cfg == cfg);
    CHECK(back.params == m.params);
    CHECK(got.seed == meta.seed);
    CHECK(got.membership_row_hash == meta.membership_row_hash);
    CHECK(got.steps_completed == meta.steps_completed);
  }
  SUBCASE("truncation rejected") {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    write_file_bytes(path, bytes.data(), bytes.size() - 5);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
  SUBCASE("non-finite parameter rejected on load") {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + bytes.size() - sizeof(float), &nan, sizeof(float));
    write_file_bytes(path, bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("non-finite"), DataError);
  }
  SUBCASE("non-finite parameter rejected on save") {
    m.params[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(save_checkpoint(temp_path("bad"), m, meta), NumericError);
  }
  SUBCASE("bad magic rejected") {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    bytes[0] = 'Z';
    write_file_bytes(path, bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), DataError);
  }
  std::error_code ec;
  fs::remove(path, ec);
}

TEST_CASE("compute-optimal example counts") {
  CHECK(chinchilla_examples(140000000ull, 400) == 7000000ull);
  CHECK(chinchilla_examples(1018000000ull, 400) == 50900000ull);
  CHECK(chinchilla_examples(20, 20) == 20ull);
  CHECK_THROWS_AS(chinchilla_examples(100, 0), ConfigError);
}

TEST_CASE("training provenance renders to CSV") {
  std::vector<TraceEntry> trace = {{0, 1e-7, 5.5}, {10, 3e-4, 4.2}};
  const std::string t = trace_csv(trace);
  CHECK(t.substr(0, 13) == "step,lr,loss\n");
  CHECK(t.find("10,") != std::string::npos);
  const std::string o = order_csv({{0, 3}, {2, 7}});
  CHECK(o == "example_id,last_seen_step\n0,3\n2,7\n");
}

TEST_CASE("membership row hash distinguishes rows and seeds") {
  const MembershipMatrix mm = assign_membership(5, 4, 64);
  CHECK(membership_row_hash(mm, 0) != membership_row_hash(mm, 1));
  const MembershipMatrix mm2 = assign_membership(6, 4, 64);
  CHECK(membership_row_hash(mm, 0) != membership_row_hash(mm2, 0));
  CHECK(membership_row_hash(mm, 2) == membership_row_hash(mm, 2));
}
