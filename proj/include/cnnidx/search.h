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
#include <vector>

#include "cnnidx/index.h"

namespace cnnidx {

struct QueryConfig {
  std::size_t assignment_count = 40;   // W
  std::size_t hamming_threshold = 180; // T: an entry votes iff distance < T
  std::size_t top_k = 100;
};

/// Threshold scaled from the 180-of-512 operating point to other code lengths.
std::size_t default_hamming_threshold(std::size_t code_length);

struct RankedEntry {
  std::uint32_t image_id = 0;
  std::uint32_t votes = 0;
  std::uint32_t min_hamming = 0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Sorted by votes desc, then min_hamming asc, then image id asc.
struct RankedResult {
  std::vector<RankedEntry> entries;
  /// Posting entries examined by the Hamming filter.
  std::size_t scanned_entries = 0;
  /// Entries that passed the filter, i.e. votes cast before truncation.
  std::size_t total_votes = 0;

  friend bool operator==(const RankedResult&, const RankedResult&) = default;
};

/// Runs queries against one index, reusing vote accumulators sized to the
/// database. Not thread-safe; use one per worker.
class Searcher {
 public:
  explicit Searcher(const InvertedIndex& index);

  RankedResult query(std::span<const float> q, const QueryConfig& cfg);

  struct Hit {
    std::uint32_t image_id;
    std::uint32_t distance;
  };

 private:
  const InvertedIndex& index_;
  std::vector<std::uint32_t> votes_;
  std::vector<std::uint32_t> min_hamming_;
  std::vector<std::uint32_t> touched_;
  std::vector<Hit> hits_;
  std::vector<float> word_vec_;
  std::vector<std::uint8_t> query_code_;
};

RankedResult query(const InvertedIndex& index, std::span<const float> q, const QueryConfig& cfg);

/// Every image linked to any of the W selected words, ascending.
std::vector<std::uint32_t> candidate_set(const InvertedIndex& index, std::span<const float> q,
                                         std::size_t assignment_count);

struct QueryOutcome {
  RankedResult result;
  double seconds = 0.0;
};

/// Queries run concurrently; output order and content match sequential runs.
std::vector<QueryOutcome> query_batch(const InvertedIndex& index, const FeatureSet& queries,
                                      const QueryConfig& cfg, unsigned threads = 0);

}  // namespace cnnidx
