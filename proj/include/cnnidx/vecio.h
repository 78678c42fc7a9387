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
#include <vector>

namespace cnnidx {

/// N feature vectors of a common dimension D, stored row-major. Image ids
/// are the implicit 0-based row positions.
class FeatureSet {
 public:
  FeatureSet() = default;
  explicit FeatureSet(std::size_t dim);
  /// Takes ownership of `values`; its length must be a multiple of dim and
  /// every component finite.
  FeatureSet(std::size_t dim, std::vector<float> values);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const { return values_.empty(); }

  std::span<const float> operator[](std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<float> mutable_row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }

  void append(std::span<const float> vector);
  void reserve(std::size_t n) { values_.reserve(n * dim_); }

  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

/// Relevant database ids per query id. Each set is sorted and non-empty.
struct GroundTruth {
  std::map<std::uint32_t, std::vector<std::uint32_t>> entries;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SynthSpec {
  std::size_t n_clusters = 100;
  std::size_t points_per_cluster = 100;
  std::size_t dim = 64;
  double cluster_stddev = 1.0;
  double noise_stddev = 0.1;
  /// Per-component standard deviation of the cluster centers.
  double center_stddev = 5.0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  FeatureSet database;
  FeatureSet queries;
  GroundTruth ground_truth;
  /// Database id each query was perturbed from.
  std::vector<std::uint32_t> query_sources;
};

/// Reads concatenated `[int32 dim][dim x float32]` little-endian records.
FeatureSet read_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureSet& features, const std::filesystem::path& path);

/// Same record layout with int32 payloads; records may differ in length.
std::vector<std::vector<std::int32_t>> read_int_file(const std::filesystem::path& path);
void write_int_file(std::span<const std::vector<std::int32_t>> records,
                    const std::filesystem::path& path);

/// Parses `qid: id id ...` lines. When database_size is given every id is
/// checked against it.
GroundTruth parse_ground_truth(std::string_view text,
                               std::optional<std::size_t> database_size = std::nullopt);
GroundTruth read_ground_truth(const std::filesystem::path& path,
                              std::optional<std::size_t> database_size = std::nullopt);
void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);

/// Database = Gaussian clusters; one query per cluster, perturbed from a
/// randomly chosen member. Deterministic for a fixed spec.
SyntheticData generate_synthetic(const SynthSpec& spec);

/// Scales every vector to unit L2 norm; zero vectors are left unchanged.
void normalize_l2(FeatureSet& features);

}  // namespace cnnidx
