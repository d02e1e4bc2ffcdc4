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

#ifndef TINYMIA_CORPUS_HPP_
#define TINYMIA_CORPUS_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tinymia/common.hpp"

namespace tinymia {

// Byte-level vocabulary: ids 0..255 are raw bytes, plus PAD and UNK.
inline constexpr uint16_t kPadId = 256;
inline constexpr uint16_t kUnkId = 257;
inline constexpr uint32_t kVocabSize = 258;

// The literal marker that tokenizes to UNK, so corpora can plant unknown
// tokens explicitly.
inline constexpr std::string_view kUnkMarker = "<unk>";

struct Example {
  uint32_t id = 0;
  std::vector<uint16_t> tokens;  // length seq_len; positions >= real_len are PAD
  uint32_t real_len = 0;         // non-pad prefix length
};

struct Dataset {
  uint32_t seq_len = 0;
  std::vector<Example> examples;  // ids dense and ascending from 0

  size_t size() const { return examples.size(); }
};

struct ExampleStats {
  uint32_t id = 0;
  uint32_t token_len = 0;  // == real_len
  double mean_tfidf = 0.0;
  uint32_t unk_count = 0;
};

// Document frequencies over a (sub)sample of the corpus.
struct DfTable {
  uint64_t num_docs = 0;
  std::vector<uint64_t> doc_freq;  // size kVocabSize
};

// Dense bit matrix: row per model, column per example, bit = "example is
// in this model's training set". Rows are packed LSB-first.
class MembershipMatrix {
 public:
  MembershipMatrix() = default;
  MembershipMatrix(uint32_t num_models, uint64_t num_examples)
      : num_models_(num_models),
        num_examples_(num_examples),
        stride_((num_examples + 7) / 8),
        bits_(static_cast<size_t>(num_models) * stride_, 0) {}

  uint32_t num_models() const { return num_models_; }
  uint64_t num_examples() const { return num_examples_; }
  size_t row_stride() const { return stride_; }

  bool get(uint32_t m, uint64_t x) const {
    return (bits_[static_cast<size_t>(m) * stride_ + (x >> 3)] >> (x & 7)) & 1u;
  }
  void set(uint32_t m, uint64_t x, bool v) {
    uint8_t& b = bits_[static_cast<size_t>(m) * stride_ + (x >> 3)];
    const uint8_t mask = static_cast<uint8_t>(1u << (x & 7));
    b = v ? (b | mask) : (b & ~mask);
  }

  const uint8_t* row(uint32_t m) const { return bits_.data() + static_cast<size_t>(m) * stride_; }
  uint8_t* row(uint32_t m) { return bits_.data() + static_cast<size_t>(m) * stride_; }

  // Number of members in model m's training set.
  uint64_t row_count(uint32_t m) const;

  // Example ids with bit set (ascending) for model m.
  std::vector<uint32_t> members_of(uint32_t m) const;

  bool operator==(const MembershipMatrix& o) const {
    return num_models_ == o.num_models_ && num_examples_ == o.num_examples_ && bits_ == o.bits_;
  }

 private:
  uint32_t num_models_ = 0;
  uint64_t num_examples_ = 0;
  size_t stride_ = 0;
  std::vector<uint8_t> bits_;
};

// Maps a UTF-8 string to its byte-token sequence, truncated/padded to
// seq_len. Deterministic; "<unk>" collapses to the UNK id.
Example tokenize(std::string_view text, uint32_t seq_len);

// Newline-delimited corpus, one example per line, ids in line order.
// Rejects empty corpora, empty lines, and lines shorter than two tokens
// (such examples have no next-token prediction targets).
Dataset load_corpus(const std::string& path, uint32_t seq_len);
Dataset dataset_from_lines(const std::vector<std::string>& lines, uint32_t seq_len);

struct DedupResult {
  Dataset dataset;                                  // survivors, ids re-densified
  std::vector<std::pair<uint32_t, uint32_t>> id_map;  // survivor old id -> new id
};

// Drops every example that shares its first `threshold` non-pad tokens
// with a lower-id example. Examples shorter than `threshold` tokens never
// match anything. Idempotent; threshold counts non-pad tokens.
DedupResult dedup_prefix(const Dataset& ds, uint32_t threshold);

// Independent Bernoulli(1/2) membership per (model, example), a pure
// function of (master_seed, model, example).
MembershipMatrix assign_membership(uint64_t master_seed, uint32_t num_models,
                                   uint64_t num_examples);

// Document frequencies over a deterministic subsample of the dataset.
// sample_frac = 1 keeps every document; an empty sample is rejected.
DfTable build_df_table(const Dataset& ds, double sample_frac, uint64_t seed);

// Per-example correlates: token_len, mean tf-idf over non-pad token
// positions (tf = raw count within the example, idf = ln(num_docs /
// doc_freq) with unseen tokens taking doc_freq = 1), and unk count.
ExampleStats text_stats(const Example& x, const DfTable& df);
std::vector<ExampleStats> dataset_stats(const Dataset& ds, const DfTable& df);

// CSV renderings ("old_id,new_id" and "id,token_len,mean_tfidf,unk_count").
std::string id_map_csv(const std::vector<std::pair<uint32_t, uint32_t>>& id_map);
std::string stats_csv(const std::vector<ExampleStats>& stats);

}  // namespace tinymia

#endif  // TINYMIA_CORPUS_HPP_
