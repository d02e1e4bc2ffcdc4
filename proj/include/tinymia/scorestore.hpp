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

#ifndef TINYMIA_SCORESTORE_HPP_
#define TINYMIA_SCORESTORE_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tinymia/common.hpp"
#include "tinymia/corpus.hpp"

namespace tinymia {

// Which per-example signal a score matrix holds.
enum class SignalKind : uint32_t { kLoss = 0, kMeanLogit = 1 };

const char* signal_kind_name(SignalKind kind);
SignalKind signal_kind_from_name(std::string_view name);

// Dense model x example signal matrix, row per model.
struct ScoreMatrix {
  SignalKind kind = SignalKind::kLoss;
  uint32_t num_models = 0;
  uint64_t num_examples = 0;
  std::vector<float> values;  // row-major

  ScoreMatrix() = default;
  ScoreMatrix(SignalKind k, uint32_t models, uint64_t examples)
      : kind(k),
        num_models(models),
        num_examples(examples),
        values(static_cast<size_t>(models) * examples, 0.0f) {}

  float at(uint32_t m, uint64_t x) const {
    return values[static_cast<size_t>(m) * num_examples + x];
  }
  void set(uint32_t m, uint64_t x, float v) {
    values[static_cast<size_t>(m) * num_examples + x] = v;
  }
  const float* row(uint32_t m) const {
    return values.data() + static_cast<size_t>(m) * num_examples;
  }

  bool operator==(const ScoreMatrix& o) const {
    return kind == o.kind && num_models == o.num_models && num_examples == o.num_examples &&
           values == o.values;
  }
};

// SMX1 container: magic, version, signal kind, dims, per-row CRC32 table,
// then row-major IEEE-754 32-bit little-endian values. The writer rejects
// non-finite values; the full reader verifies every row checksum and names
// the first corrupt row.
void write_score_matrix(const std::string& path, const ScoreMatrix& m);
ScoreMatrix read_score_matrix(const std::string& path);

// Reads only columns [col_begin, col_end) of every row, seeking within the
// file rather than loading it. Row checksums cover whole rows only, so
// block reads skip checksum verification; use read_score_matrix for a
// verified pass.
ScoreMatrix read_score_columns(const std::string& path, uint64_t col_begin, uint64_t col_end);

// MBM1 container for membership bits: magic, version, dims, per-row CRC32
// table, then LSB-first packed rows.
void write_membership(const std::string& path, const MembershipMatrix& mm);
MembershipMatrix read_membership(const std::string& path);

}  // namespace tinymia

#endif  // TINYMIA_SCORESTORE_HPP_
