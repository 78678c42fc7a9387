// Copyright 2026 The cnnidx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "cnnidx/vecio.h"

namespace cnnidx {

struct Neighbor {
  std::uint32_t id = 0;
  double distance = 0.0;  // squared Euclidean

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact search: all N distances, the top_k smallest, ties to the smaller id.
std::vector<Neighbor> brute_force(const FeatureSet& db, std::span<const float> q,
                                  std::size_t top_k);

struct LshConfig {
  std::size_t tables = 8;
  std::size_t bits_per_table = 16;
  std::uint64_t seed = 1;
};

/// Sign-random-projection LSH. Candidates from every table's bucket are
/// re-ranked by exact distance.
class LshIndex {
 public:
  LshIndex(const FeatureSet& db, const LshConfig& cfg, unsigned threads = 0);

  std::vector<Neighbor> query(std::span<const float> q, std::size_t top_k) const;
  /// Union of the query's buckets, ascending.
  std::vector<std::uint32_t> candidates(std::span<const float> q) const;

  const LshConfig& config() const { return cfg_; }
  /// Hyperplanes plus bucket tables (excludes the referenced database).
  std::size_t memory_bytes() const;

 private:
  std::uint64_t hash(std::size_t table, std::span<const float> x) const;

  const FeatureSet& db_;
  LshConfig cfg_;
  std::vector<float> planes_;  // tables * bits * dim
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> buckets_;
};

LshIndex lsh_build(const FeatureSet& db, const LshConfig& cfg, unsigned threads = 0);
std::vector<Neighbor> lsh_query(const LshIndex& index, std::span<const float> q,
                                std::size_t top_k);

}  // namespace cnnidx
