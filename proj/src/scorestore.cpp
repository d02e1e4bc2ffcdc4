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

#include "tinymia/scorestore.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace tinymia {

const char* signal_kind_name(SignalKind kind) {
  switch (kind) {
    case SignalKind::kLoss:
      return "loss";
    case SignalKind::kMeanLogit:
      return "mean_logit";
  }
  throw ConfigError("unknown signal kind value");
}

SignalKind signal_kind_from_name(std::string_view name) {
  if (name == "loss") return SignalKind::kLoss;
  if (name == "mean_logit") return SignalKind::kMeanLogit;
  throw ConfigError("unknown signal kind '" + std::string(name) + "'");
}

namespace {

constexpr char kScoreMagic[4] = {'S', 'M', 'X', '1'};
constexpr char kMembershipMagic[4] = {'M', 'B', 'M', '1'};
constexpr uint32_t kFormatVersion = 1;

uint32_t row_crc(const void* data, size_t size) {
  return static_cast<uint32_t>(
      crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

void append_pod(std::vector<uint8_t>& out, const void* p, size_t n) {
  const uint8_t* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void append_le(std::vector<uint8_t>& out, T v) {
  append_pod(out, &v, sizeof(T));
}

template <typename T>
T read_le(const std::vector<uint8_t>& bytes, size_t& off, const std::string& path) {
  if (off + sizeof(T) > bytes.size()) throw DataError("truncated file: " + path);
  T v;
  std::memcpy(&v, bytes.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void check_magic(const std::vector<uint8_t>& bytes, const char (&magic)[4],
                 const std::string& path) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw DataError("bad magic, not a " + std::string(magic, 4) + " file: " + path);
  }
}

}  // namespace

void write_score_matrix(const std::string& path, const ScoreMatrix& m) {
  if (m.num_models == 0 || m.num_examples == 0) {
    throw ConfigError("write_score_matrix: empty matrix");
  }
  for (float v : m.values) {
    if (!std::isfinite(v)) {
      throw NumericError("write_score_matrix: non-finite value, refusing to write " + path);
    }
  }
  const size_t row_bytes = static_cast<size_t>(m.num_examples) * sizeof(float);
  std::vector<uint8_t> out;
  out.reserve(4 + 4 + 4 + 4 + 8 + 4 * static_cast<size_t>(m.num_models) +
              row_bytes * m.num_models);
  append_pod(out, kScoreMagic, 4);
  append_le<uint32_t>(out, kFormatVersion);
  append_le<uint32_t>(out, static_cast<uint32_t>(m.kind));
  append_le<uint32_t>(out, m.num_models);
  append_le<uint64_t>(out, m.num_examples);
  for (uint32_t r = 0; r < m.num_models; ++r) {
    append_le<uint32_t>(out, row_crc(m.row(r), row_bytes));
  }
  for (uint32_t r = 0; r < m.num_models; ++r) append_pod(out, m.row(r), row_bytes);
  write_file_atomic(path, out.data(), out.size());
}

namespace {

struct ScoreHeader {
  SignalKind kind;
  uint32_t num_models;
  uint64_t num_examples;
  std::vector<uint32_t> crcs;
  size_t data_off;
};

ScoreHeader read_score_header(const std::vector<uint8_t>& bytes, const std::string& path) {
  check_magic(bytes, kScoreMagic, path);
  size_t off = 4;
  ScoreHeader h;
  const uint32_t version = read_le<uint32_t>(bytes, off, path);
  if (version != kFormatVersion) {
    throw DataError("unsupported SMX1 version " + std::to_string(version) + ": " + path);
  }
  const uint32_t kind = read_le<uint32_t>(bytes, off, path);
  if (kind > static_cast<uint32_t>(SignalKind::kMeanLogit)) {
    throw DataError("unknown signal kind in " + path);
  }
  h.kind = static_cast<SignalKind>(kind);
  h.num_models = read_le<uint32_t>(bytes, off, path);
  h.num_examples = read_le<uint64_t>(bytes, off, path);
  if (h.num_models == 0 || h.num_examples == 0) throw DataError("empty matrix in " + path);
  h.crcs.resize(h.num_models);
  for (uint32_t r = 0; r < h.num_models; ++r) h.crcs[r] = read_le<uint32_t>(bytes, off, path);
  h.data_off = off;
  return h;
}

}  // namespace

ScoreMatrix read_score_matrix(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  const ScoreHeader h = read_score_header(bytes, path);
  const size_t row_bytes = static_cast<size_t>(h.num_examples) * sizeof(float);
  if (h.data_off + row_bytes * h.num_models != bytes.size()) {
    throw DataError("size mismatch in " + path);
  }
  ScoreMatrix m(h.kind, h.num_models, h.num_examples);
  for (uint32_t r = 0; r < h.num_models; ++r) {
    const uint8_t* src = bytes.data() + h.data_off + static_cast<size_t>(r) * row_bytes;
    if (row_crc(src, row_bytes) != h.crcs[r]) {
      throw DataError("checksum mismatch on row " + std::to_string(r) + " of " + path);
    }
    std::memcpy(m.values.data() + static_cast<size_t>(r) * h.num_examples, src, row_bytes);
  }
  return m;
}

ScoreMatrix read_score_columns(const std::string& path, uint64_t col_begin, uint64_t col_end) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  // Header through the CRC table is small; read it in one shot.
  std::vector<uint8_t> head(4 + 4 + 4 + 4 + 8);
  if (!in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()))) {
    throw DataError("truncated file: " + path);
  }
  check_magic(head, kScoreMagic, path);
  size_t off = 4;
  const uint32_t version = read_le<uint32_t>(head, off, path);
  if (version != kFormatVersion) {
    throw DataError("unsupported SMX1 version " + std::to_string(version) + ": " + path);
  }
  const uint32_t kind = read_le<uint32_t>(head, off, path);
  const uint32_t num_models = read_le<uint32_t>(head, off, path);
  const uint64_t num_examples = read_le<uint64_t>(head, off, path);
  if (col_begin > col_end || col_end > num_examples) {
    throw ConfigError("read_score_columns: column range out of bounds");
  }
  const uint64_t width = col_end - col_begin;
  ScoreMatrix m(static_cast<SignalKind>(kind), num_models, width);
  const uint64_t data_off = head.size() + 4ull * num_models;
  const uint64_t row_bytes = num_examples * sizeof(float);
  for (uint32_t r = 0; r < num_models; ++r) {
    const uint64_t pos = data_off + r * row_bytes + col_begin * sizeof(float);
    in.seekg(static_cast<std::streamoff>(pos));
    if (!in.read(reinterpret_cast<char*>(m.values.data() + static_cast<size_t>(r) * width),
                 static_cast<std::streamsize>(width * sizeof(float)))) {
      throw DataError("truncated row " + std::to_string(r) + " in " + path);
    }
  }
  return m;
}

void write_membership(const std::string& path, const MembershipMatrix& mm) {
  if (mm.num_models() == 0 || mm.num_examples() == 0) {
    throw ConfigError("write_membership: empty matrix");
  }
  std::vector<uint8_t> out;
  out.reserve(4 + 4 + 4 + 8 + 4 * static_cast<size_t>(mm.num_models()) +
              mm.row_stride() * mm.num_models());
  append_pod(out, kMembershipMagic, 4);
  append_le<uint32_t>(out, kFormatVersion);
  append_le<uint32_t>(out, mm.num_models());
  append_le<uint64_t>(out, mm.num_examples());
  for (uint32_t r = 0; r < mm.num_models(); ++r) {
    append_le<uint32_t>(out, row_crc(mm.row(r), mm.row_stride()));
  }
  for (uint32_t r = 0; r < mm.num_models(); ++r) append_pod(out, mm.row(r), mm.row_stride());
  write_file_atomic(path, out.data(), out.size());
}

MembershipMatrix read_membership(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  check_magic(bytes, kMembershipMagic, path);
  size_t off = 4;
  const uint32_t version = read_le<uint32_t>(bytes, off, path);
  if (version != kFormatVersion) {
    throw DataError("unsupported MBM1 version " + std::to_string(version) + ": " + path);
  }
  const uint32_t num_models = read_le<uint32_t>(bytes, off, path);
  const uint64_t num_examples = read_le<uint64_t>(bytes, off, path);
  if (num_models == 0 || num_examples == 0) throw DataError("empty matrix in " + path);
  std::vector<uint32_t> crcs(num_models);
  for (uint32_t r = 0; r < num_models; ++r) crcs[r] = read_le<uint32_t>(bytes, off, path);
  MembershipMatrix mm(num_models, num_examples);
  if (off + mm.row_stride() * num_models != bytes.size()) {
    throw DataError("size mismatch in " + path);
  }
  for (uint32_t r = 0; r < num_models; ++r) {
    const uint8_t* src = bytes.data() + off + static_cast<size_t>(r) * mm.row_stride();
    if (row_crc(src, mm.row_stride()) != crcs[r]) {
      throw DataError("checksum mismatch on row " + std::to_string(r) + " of " + path);
    }
    std::memcpy(mm.row(r), src, mm.row_stride());
  }
  return mm;
}

}  // namespace tinymia
