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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "tinymia/corpus.hpp"

using namespace tinymia;

TEST_CASE("tokenize pads, truncates, and maps the unk marker") {
  SUBCASE("short text is right-padded") {
    const Example ex = tokenize("ab", 4);
    CHECK(ex.real_len == 2);
    REQUIRE(ex.tokens.size() == 4);
    CHECK(ex.tokens[0] == uint32_t('a'));
    CHECK(ex.tokens[1] == uint32_t('b'));
    CHECK(ex.tokens[2] == kPadId);
    CHECK(ex.tokens[3] == kPadId);
  }
  SUBCASE("long text truncates to seq_len with no pads") {
    const Example ex = tokenize("abcdefgh", 4);
    CHECK(ex.real_len == 4);
    CHECK(std::count(ex.tokens.begin(), ex.tokens.end(), kPadId) == 0);
  }
  SUBCASE("determinism") {
    CHECK(tokenize("same text", 16).tokens == tokenize("same text", 16).tokens);
  }
  SUBCASE("the unk marker collapses to one token") {
    const Example ex = tokenize("a<unk>b", 8);
    CHECK(ex.real_len == 3);
    CHECK(ex.tokens[0] == uint32_t('a'));
    CHECK(ex.tokens[1] == kUnkId);
    CHECK(ex.tokens[2] == uint32_t('b'));
  }
}

TEST_CASE("dataset_from_lines rejects degenerate inputs") {
  CHECK_THROWS_AS(dataset_from_lines({}, 8), DataError);
  CHECK_THROWS_WITH_AS(dataset_from_lines({"ok line", "x"}, 8), doctest::Contains("line 2"),
                       DataError);
}

namespace {

// Brute-force reference: example i survives unless some earlier example
// shares its first `threshold` tokens and both have at least that many.
std::vector<uint32_t> dedup_oracle(const Dataset& ds, uint32_t threshold) {
  std::vector<uint32_t> survivors;
  for (size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& a = ds.examples[i];
    bool dup = false;
    for (size_t j = 0; j < i && !dup; ++j) {
      const Example& b = ds.examples[j];
      if (a.real_len < threshold || b.real_len < threshold) continue;
      dup = std::equal(a.tokens.begin(), a.tokens.begin() + threshold, b.tokens.begin());
    }
    if (!dup) survivors.push_back(static_cast<uint32_t>(i));
  }
  return survivors;
}

std::vector<std::string> random_collision_lines(size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> len_d(2, 10);
  std::uniform_int_distribution<int> ch_d(0, 1);
  std::vector<std::string> lines;
  lines.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::string s;
    const int len = len_d(rng);
    for (int j = 0; j < len; ++j) s.push_back(ch_d(rng) ? 'a' : 'b');
    lines.push_back(s);
  }
  return lines;
}

}  // namespace

TEST_CASE("dedup keeps the lowest id of each shared-prefix group") {
  const Dataset ds = dataset_from_lines({"abcXXXX", "abcYYYY"}, 8);
  const DedupResult dd = dedup_prefix(ds, 3);
  REQUIRE(dd.dataset.examples.size() == 1);
  CHECK(dd.dataset.examples[0].tokens[3] == uint32_t('X'));
  REQUIRE(dd.id_map.size() == 1);
  CHECK(dd.id_map[0] == std::pair<uint32_t, uint32_t>{0, 0});
}

TEST_CASE("dedup leaves disjoint-prefix corpora unchanged") {
  const Dataset ds = dataset_from_lines({"alpha one", "beta two", "gamma three"}, 12);
  for (uint32_t t : {1u, 2u, 3u, 5u}) {
    const DedupResult dd = dedup_prefix(ds, t);
    CHECK(dd.dataset.examples.size() == 3);
  }
}

TEST_CASE("dedup ignores examples shorter than the threshold") {
  const Dataset ds = dataset_from_lines({"ab", "ab", "ab"}, 8);
  CHECK(dedup_prefix(ds, 3).dataset.examples.size() == 3);
  CHECK(dedup_prefix(ds, 2).dataset.examples.size() == 1);
}

TEST_CASE("dedup threshold zero is rejected") {
  const Dataset ds = dataset_from_lines({"ab", "cd"}, 4);
  CHECK_THROWS_AS(dedup_prefix(ds, 0), ConfigError);
}

TEST_CASE("dedup matches the quadratic oracle on random corpora") {
  for (unsigned seed : {1u, 2u, 3u, 4u}) {
    const Dataset ds = dataset_from_lines(random_collision_lines(200, seed), 10);
    for (uint32_t t : {2u, 3u, 4u}) {
      const DedupResult dd = dedup_prefix(ds, t);
      const std::vector<uint32_t> expect = dedup_oracle(ds, t);
      REQUIRE(dd.dataset.examples.size() == expect.size());
      REQUIRE(dd.id_map.size() == expect.size());
      for (size_t i = 0; i < expect.size(); ++i) {
        CHECK(dd.id_map[i].first == expect[i]);
        CHECK(dd.id_map[i].second == static_cast<uint32_t>(i));
        CHECK(dd.dataset.examples[i].id == static_cast<uint32_t>(i));
        CHECK(dd.dataset.examples[i].tokens == ds.examples[expect[i]].tokens);
      }
    }
  }
}

TEST_CASE("dedup collapses planted duplicate groups to their first member") {
  std::vector<std::string> lines;
  for (int g = 0; g < 10; ++g) {
    for (int d = 0; d < 10; ++d) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%08d tail %d", g, d * 7);
      lines.push_back(buf);
    }
  }
  const Dataset ds = dataset_from_lines(lines, 24);
  const DedupResult dd = dedup_prefix(ds, 8);
  CHECK(dd.dataset.examples.size() == 10);
  for (size_t i = 0; i < dd.id_map.size(); ++i) {
    CHECK(dd.id_map[i].first == static_cast<uint32_t>(i * 10));  // group leaders
  }
  // Idempotence: a second pass changes nothing.
  const DedupResult dd2 = dedup_prefix(dd.dataset, 8);
  CHECK(dd2.dataset.examples.size() == dd.dataset.examples.size());
  for (size_t i = 0; i < dd.dataset.examples.size(); ++i) {
    CHECK(dd2.dataset.examples[i].tokens == dd.dataset.examples[i].tokens);
  }
}

TEST_CASE("membership assignment is reproducible and balanced") {
  const MembershipMatrix mm = assign_membership(42, 8, 4000);
  const MembershipMatrix mm2 = assign_membership(42, 8, 4000);
  CHECK(mm == mm2);
  for (uint32_t m = 0; m < 8; ++m) {
    const uint64_t c = mm.row_count(m);
    // 5 sigma around N/2 for N = 4000.
    CHECK(c > 2000 - 159);
    CHECK(c < 2000 + 159);
    const std::vector<uint32_t> members = mm.members_of(m);
    CHECK(members.size() == c);
    for (uint32_t x : members) CHECK(mm.get(m, x));
  }
  CHECK(mm.get(3, 17) == membership_bit(42, 3, 17));
  CHECK(!(assign_membership(43, 8, 4000) == mm));
}

TEST_CASE("tf-idf stats match a hand computation") {
  const Dataset ds = dataset_from_lines({"aa", "ab"}, 4);
  const DfTable df = build_df_table(ds, 1.0, 1);
  CHECK(df.num_docs == 2);
  CHECK(df.doc_freq[uint32_t('a')] == 2);
  CHECK(df.doc_freq[uint32_t('b')] == 1);

  const std::vector<ExampleStats> stats = dataset_stats(ds, df);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].token_len == 2);
  CHECK(stats[0].mean_tfidf == doctest::Approx(0.0));
  CHECK(stats[1].mean_tfidf == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(stats[0].unk_count == 0);

  const ExampleStats unk = text_stats(tokenize("a<unk>", 4), df);
  CHECK(unk.unk_count == 1);
}

TEST_CASE("df subsampling is deterministic and rejects empty samples") {
  const Dataset ds = dataset_from_lines(random_collision_lines(64, 9), 10);
  const DfTable a = build_df_table(ds, 0.5, 7);
  const DfTable b = build_df_table(ds, 0.5, 7);
  CHECK(a.num_docs == b.num_docs);
  CHECK(a.num_docs > 0);
  CHECK(a.num_docs < 64);
  CHECK_THROWS_AS(build_df_table(ds, 0.0, 7), ConfigError);
  CHECK_THROWS_AS(build_df_table(ds, 1.5, 7), ConfigError);
}

TEST_CASE("csv renderings carry the pinned headers") {
  const Dataset ds = dataset_from_lines({"aa", "ab"}, 4);
  const DfTable df = build_df_table(ds, 1.0, 1);
  const std::string stats = stats_csv(dataset_stats(ds, df));
  CHECK(stats.rfind("id,token_len,mean_tfidf,unk_count\n", 0) == 0);
  const std::string ids = id_map_csv({{0, 0}, {2, 1}});
  CHECK(ids == "old_id,new_id\n0,0\n2,1\n");
}
