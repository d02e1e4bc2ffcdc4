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

#include "tinymia/corpus.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace tinymia {

uint64_t MembershipMatrix::row_count(uint32_t m) const {
  const uint8_t* r = row(m);
  uint64_t n = 0;
  for (size_t i = 0; i < stride_; ++i) n += std::popcount(static_cast<unsigned>(r[i]));
  return n;
}

std::vector<uint32_t> MembershipMatrix::members_of(uint32_t m) const {
  std::vector<uint32_t> ids;
  ids.reserve(static_cast<size_t>(row_count(m)));
  for (uint64_t x = 0; x < num_examples_; ++x) {
    if (get(m, x)) ids.push_back(static_cast<uint32_t>(x));
  }
  return ids;
}

Example tokenize(std::string_view text, uint32_t seq_len) {
  if (seq_len == 0) throw ConfigError("tokenize: seq_len must be positive");
  Example ex;
  ex.tokens.assign(seq_len, kPadId);
  uint32_t n = 0;
  size_t i = 0;
  while (i < text.size() && n < seq_len) {
    if (text.compare(i, kUnkMarker.size(), kUnkMarker) == 0) {
      ex.tokens[n++] = kUnkId;
      i += kUnkMarker.size();
    } else {
      ex.tokens[n++] = static_cast<uint8_t>(text[i]);
      ++i;
    }
  }
  ex.real_len = n;
  return ex;
}

Dataset dataset_from_lines(const std::vector<std::string>& lines, uint32_t seq_len) {
  if (lines.empty()) throw DataError("corpus is empty");
  Dataset ds;
  ds.seq_len = seq_len;
  ds.examples.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    Example ex = tokenize(lines[i], seq_len);
    if (ex.real_len < 2) {
      throw DataError("corpus line " + std::to_string(i + 1) +
                      " has fewer than 2 tokens; every example needs at least one "
                      "next-token target");
    }
    ex.id = static_cast<uint32_t>(i);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset load_corpus(const std::string& path, uint32_t seq_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty()) throw DataError("corpus is empty: " + path);
  return dataset_from_lines(lines, seq_len);
}

DedupResult dedup_prefix(const Dataset& ds, uint32_t threshold) {
  if (threshold == 0) throw ConfigError("dedup_prefix: threshold must be positive");
  DedupResult out;
  out.dataset.seq_len = ds.seq_len;
  std::unordered_map<std::string, uint32_t> seen;  // prefix key -> surviving old id
  seen.reserve(ds.size());
  for (const Example& ex : ds.examples) {
    bool keep = true;
    if (ex.real_len >= threshold) {
      std::string key(reinterpret_cast<const char*>(ex.tokens.data()),
                      static_cast<size_t>(threshold) * sizeof(uint16_t));
      keep = seen.emplace(std::move(key), ex.id).second;
    }
    if (keep) {
      const uint32_t new_id = static_cast<uint32_t>(out.dataset.examples.size());
      out.id_map.emplace_back(ex.id, new_id);
      Example survivor = ex;
      survivor.id = new_id;
      out.dataset.examples.push_back(std::move(survivor));
    }
  }
  return out;
}

MembershipMatrix assign_membership(uint64_t master_seed, uint32_t num_models,
                                   uint64_t num_examples) {
  if (num_models == 0 || num_examples == 0) {
    throw ConfigError("assign_membership: num_models and num_examples must be positive");
  }
  MembershipMatrix mm(num_models, num_examples);
  for (uint32_t m = 0; m < num_models; ++m) {
    for (uint64_t x = 0; x < num_examples; ++x) {
      if (membership_bit(master_seed, m, x)) mm.set(m, x, true);
    }
  }
  return mm;
}

DfTable build_df_table(const Dataset& ds, double sample_frac, uint64_t seed) {
  if (!(sample_frac > 0.0) || sample_frac > 1.0) {
    throw ConfigError("build_df_table: sample_frac must be in (0, 1]");
  }
  DfTable df;
  df.doc_freq.assign(kVocabSize, 0);
  std::vector<bool> present(kVocabSize);
  for (const Example& ex : ds.examples) {
    if (unit_uniform(seed, StreamTag::kDocSample, ex.id, 0) >= sample_frac) continue;
    ++df.num_docs;
    std::fill(present.begin(), present.end(), false);
    for (uint32_t i = 0; i < ex.real_len; ++i) present[ex.tokens[i]] = true;
    for (uint32_t t = 0; t < kVocabSize; ++t) {
      if (present[t]) ++df.doc_freq[t];
    }
  }
  if (df.num_docs == 0) {
    throw ConfigError("build_df_table: the document sample is empty; raise sample_frac");
  }
  return df;
}

ExampleStats text_stats(const Example& x, const DfTable& df) {
  ExampleStats st;
  st.id = x.id;
  st.token_len = x.real_len;
  if (x.real_len == 0) return st;
  std::vector<uint32_t> tf(kVocabSize, 0);
  for (uint32_t i = 0; i < x.real_len; ++i) ++tf[x.tokens[i]];
  st.unk_count = tf[kUnkId];
  double sum = 0.0;
  for (uint32_t i = 0; i < x.real_len; ++i) {
    const uint16_t t = x.tokens[i];
    const uint64_t freq = df.doc_freq[t] > 0 ? df.doc_freq[t] : 1;
    sum += static_cast<double>(tf[t]) *
           std::log(static_cast<double>(df.num_docs) / static_cast<double>(freq));
  }
  st.mean_tfidf = sum / static_cast<double>(x.real_len);
  return st;
}

std::vector<ExampleStats> dataset_stats(const Dataset& ds, const DfTable& df) {
  std::vector<ExampleStats> out;
  out.reserve(ds.size());
  for (const Example& ex : ds.examples) out.push_back(text_stats(ex, df));
  return out;
}

std::string id_map_csv(const std::vector<std::pair<uint32_t, uint32_t>>& id_map) {
  std::string csv = "old_id,new_id\n";
  for (const auto& [old_id, new_id] : id_map) {
    csv += std::to_string(old_id);
    csv += ',';
    csv += std::to_string(new_id);
    csv += '\n';
  }
  return csv;
}

std::string stats_csv(const std::vector<ExampleStats>& stats) {
  std::string csv = "id,token_len,mean_tfidf,unk_count\n";
  for (const ExampleStats& st : stats) {
    csv += std::to_string(st.id);
    csv += ',';
    csv += std::to_string(st.token_len);
    csv += ',';
    csv += format_double(st.mean_tfidf);
    csv += ',';
    csv += std::to_string(st.unk_count);
    csv += '\n';
  }
  return csv;
}

}  // namespace tinymia
