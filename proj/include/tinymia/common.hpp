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

#ifndef TINYMIA_COMMON_HPP_
#define TINYMIA_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinymia {

// Process exit codes shared by the CLI and the pipeline error types.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrereq = 3;
inline constexpr int kExitNumeric = 4;

// Invalid or inconsistent configuration (also: config-hash mismatch).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage was invoked before its prerequisites produced output.
class PrereqError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (loss, scores, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or corrupt input data (corpus, checkpoints, score files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Allocator pinning buffers to a fixed 64-byte alignment. Vectorized
// kernels pick code paths by pointer alignment; malloc's alignment varies
// with heap state and thread arena, which would let the same computation
// produce different low-order bits from run to run. Pinning the base
// makes every derived pointer's alignment a pure function of the data
// layout, keeping numeric results bit-reproducible across runs, threads,
// and resumes.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

// Numeric work buffer: a vector whose data() is always 64-byte aligned.
template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

// 64-bit finalizer with full avalanche (the splitmix64 step). Used as the
// building block for all counter-based deterministic randomness so that
// results never depend on iteration order or thread schedule. The pre-add
// keeps zero from being a fixed point, so chained accumulators cannot get
// stuck at zero.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Domain tags keep independent random streams (membership bits, derived
// model seeds, subsampling decisions) from colliding on equal counters.
enum class StreamTag : uint64_t {
  kMembership = 0x9e3779b97f4a7c15ULL,
  kModelSeed = 0xbf58476d1ce4e5b9ULL,
  kDocSample = 0x94d049bb133111ebULL,
  kZSelect = 0xd6e8feb86659fd93ULL,
  kEpochShuffle = 0x8ebc6af09c88c6e3ULL,
  kParamInit = 0x589965cc75374cc3ULL,
};

inline uint64_t hash3(uint64_t seed, StreamTag tag, uint64_t a, uint64_t b) {
  uint64_t h = mix64(seed ^ static_cast<uint64_t>(tag));
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  return h;
}

// Bernoulli(1/2) membership bit for (model, example), reproducible from
// the master seed alone.
inline bool membership_bit(uint64_t master_seed, uint64_t model, uint64_t example) {
  return (hash3(master_seed, StreamTag::kMembership, model, example) & 1u) != 0;
}

// Per-model training seed derived from the master seed.
inline uint64_t derive_model_seed(uint64_t master_seed, uint64_t model) {
  return hash3(master_seed, StreamTag::kModelSeed, model, 0);
}

// Uniform draw in [0, 1) keyed by (seed, tag, a, b).
inline double unit_uniform(uint64_t seed, StreamTag tag, uint64_t a, uint64_t b) {
  return static_cast<double>(hash3(seed, tag, a, b) >> 11) * 0x1.0p-53;
}

// Shortest round-trip decimal representation of a double (for CSV/JSON
// output that must be byte-stable and reloadable without loss).
std::string format_double(double v);

// Whole-file helpers; throw DataError on I/O failure.
std::vector<uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t size);

// Writes to `path + ".tmp"` then renames, so partially written artifacts
// never shadow completed ones when a run is interrupted and resumed.
void write_file_atomic(const std::string& path, const void* data, size_t size);
void write_text_atomic(const std::string& path, const std::string& text);

bool file_exists(const std::string& path);

}  // namespace tinymia

#endif  // TINYMIA_COMMON_HPP_
