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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cnnidx/baseline.h"
#include "cnnidx/index.h"
#include "cnnidx/search.h"
#include "cnnidx/vecio.h"

namespace cnnidx {

/// AP over a ranked list: mean, over relevant items, of precision at the
/// rank where each one appears. Unretrieved relevant items contribute 0.
double average_precision(std::span<const std::uint32_t> ranked,
                         std::span<const std::uint32_t> relevant);

/// |ranked[:k] ∩ reference[:k]| / min(k, |reference|).
double recall_at_k(std::span<const std::uint32_t> ranked,
                   std::span<const std::uint32_t> reference, std::size_t k);

/// One query's output from any search method.
struct QueryRun {
  std::vector<std::uint32_t> ranked;
  double seconds = 0.0;
  /// Distinct database ids examined before filtering.
  std::size_t candidates = 0;
  std::size_t total_votes = 0;
};

struct EvalOptions {
  std::size_t database_size = 0;
  std::size_t index_bytes = 0;
  /// Drop each query's own database id from its ranking and relevant set.
  bool exclude_self = false;
  std::vector<std::uint32_t> self_ids;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

struct EvalReport {
  double map = 0.0;
  /// In ground-truth query id order.
  std::vector<std::uint32_t> query_ids;
  std::vector<double> per_query_ap;
  double mean_query_time = 0.0;
  double scan_fraction = 0.0;
  std::size_t index_bytes = 0;
  std::size_t queries = 0;
  nlohmann::ordered_json config;
};

EvalReport evaluate(std::span<const QueryRun> runs, const GroundTruth& gt,
                    const EvalOptions& options);

nlohmann::ordered_json to_json(const EvalReport& report);

// Runners turning each method's output into QueryRuns. Timing covers the
// search call only; candidate counting happens outside the timed region.
std::vector<QueryRun> run_index(const InvertedIndex& index, const FeatureSet& queries,
                                const QueryConfig& cfg, unsigned threads = 0);
std::vector<QueryRun> run_brute_force(const FeatureSet& db, const FeatureSet& queries,
                                      std::size_t top_k);
std::vector<QueryRun> run_lsh(const LshIndex& index, const FeatureSet& queries,
                              std::size_t top_k);

struct SweepAxis {
  std::string param;  // one of L, T, S, W, K, M
  std::vector<std::int64_t> values;
};

struct SweepSpec {
  BuildConfig build;
  std::size_t top_k = 100;
  /// Unset: W follows S.
  std::optional<std::size_t> assignment_count;
  /// Unset: default_hamming_threshold(L).
  std::optional<std::size_t> hamming_threshold;
  std::vector<SweepAxis> grid;
  bool exclude_self = false;
  /// Run each point's queries in parallel; MAP is unchanged, timings are noisier.
  bool parallel = false;
};

struct SweepData {
  const FeatureSet& database;
  const FeatureSet& queries;
  const GroundTruth& ground_truth;
  std::vector<std::uint32_t> self_ids;
  const FeatureSet* training = nullptr;
};

struct SweepRow {
  std::vector<std::pair<std::string, std::int64_t>> point;
  std::optional<EvalReport> report;
  double mean_candidates = 0.0;
  std::uint64_t total_votes = 0;
  std::string error;
};

/// One row per grid point, first axis outermost. A point that violates a
/// precondition records its error and the sweep continues.
std::vector<SweepRow> sweep(const SweepSpec& spec, const SweepData& data, unsigned threads = 0);

SweepSpec parse_sweep_spec(const nlohmann::json& j);
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);
nlohmann::ordered_json sweep_to_json(std::span<const SweepRow> rows);

}  // namespace cnnidx
