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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "tinymia/common.hpp"

using namespace tinymia;

TEST_CASE("mix64 is a bijection-grade mixer on simple counters") {
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 4096; ++i) seen.insert(mix64(i));
  CHECK(seen.size() == 4096);
  CHECK(mix64(0) != 0);  // no fixed point at the common counter start
}

TEST_CASE("hash3 separates streams and counters") {
  const uint64_t seed = 7;
  CHECK(hash3(seed, StreamTag::kMembership, 1, 2) != hash3(seed, StreamTag::kModelSeed, 1, 2));
  CHECK(hash3(seed, StreamTag::kMembership, 1, 2) != hash3(seed, StreamTag::kMembership, 2, 1));
  CHECK(hash3(seed, StreamTag::kMembership, 1, 2) == hash3(seed, StreamTag::kMembership, 1, 2));
  CHECK(hash3(seed, StreamTag::kMembership, 1, 2) != hash3(seed + 1, StreamTag::kMembership, 1, 2));
}

TEST_CASE("membership bits are balanced across examples") {
  int ones = 0;
  const int n = 20000;
  for (int x = 0; x < n; ++x) ones += membership_bit(123, 0, static_cast<uint64_t>(x)) ? 1 : 0;
  const double frac = static_cast<double>(ones) / n;
  // 5 sigma of a fair coin over 20k draws is about 0.0177.
  CHECK(frac > 0.5 - 0.018);
  CHECK(frac < 0.5 + 0.018);
}

TEST_CASE("unit_uniform lands in [0,1) with mean near one half") {
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = unit_uniform(9, StreamTag::kDocSample, static_cast<uint64_t>(i), 0);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.011);  // 5 sigma = 0.0102
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1e-300, 2.2250738585072014e-308, 3.141592653589793,
                   1.7976931348623157e308, -0.0}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1e-05) == "1e-05");
}

TEST_CASE("atomic text write replaces the file completely") {
  const std::string dir = "tmp_common_test";
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/x.txt";
  write_text_atomic(path, "first version");
  write_text_atomic(path, "v2");
  CHECK(read_file_text(path) == "v2");
  CHECK(!file_exists(path + ".tmp"));
  CHECK(file_exists(path));
  std::filesystem::remove_all(dir);
}

TEST_CASE("read_file_bytes on a missing path names the file") {
  CHECK_THROWS_WITH_AS(read_file_bytes("no/such/file.bin"),
                       doctest::Contains("no/such/file.bin"), DataError);
}
