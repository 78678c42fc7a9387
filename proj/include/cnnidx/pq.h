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

#include "cnnidx/vecio.h"

namespace cnnidx {

/// Word id in a dictionary. For a product dictionary it is the mixed-radix
/// number (w_1 .. w_M) in base K, segment 1 most significant.
using WordId = std::uint64_t;

struct PqConfig {
  std::size_t segments = 2;             // M
  std::size_t words_per_segment = 1000; // K
  std::size_t kmeans_iters = 25;
  std::uint64_t kmeans_seed = 1;
  std::size_t kmeans_restarts = 3;

  friend bool operator==(const PqConfig&, const PqConfig&) = default;
};

struct WordDistance {
  WordId word = 0;
  double distance = 0.0;

  friend bool operator==(const WordDistance&, const WordDistance&) = default;
};

/// M sub-codebooks of K centroids over consecutive D/M-dimensional segments.
class PqCodebook {
 public:
  /// centroids: M*K*(D/M) floats, segment-major then word-major.
  PqCodebook(std::size_t dim, PqConfig config, std::vector<float> centroids);

  std::size_t dim() const { return dim_; }
  std::size_t segments() const { return config_.segments; }
  std::size_t words_per_segment() const { return config_.words_per_segment; }
  std::size_t sub_dim() const { return dim_ / config_.segments; }
  /// K^M.
  WordId word_count() const { return word_count_; }
  const PqConfig& config() const { return config_; }
  const std::vector<float>& centroids() const { return centroids_; }

  std::span<const float> centroid(std::size_t segment, std::size_t word) const {
    return {centroids_.data() + (segment * words_per_segment() + word) * sub_dim(), sub_dim()};
  }

  WordId encode_word(std::span<const std::uint32_t> sub_words) const;
  std::vector<std::uint32_t> decode_word(WordId word) const;

  friend bool operator==(const PqCodebook&, const PqCodebook&) = default;

 private:
  std::size_t dim_;
  PqConfig config_;
  WordId word_count_;
  std::vector<float> centroids_;
};

struct KMeansResult {
  std::vector<float> centroids;       // k * dim
  std::vector<std::uint32_t> labels;  // one per point
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> sse_history;
  double sse = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from a k-means++ seeding. Stops early once no label
/// changes. Deterministic for a fixed seed regardless of `threads`.
KMeansResult kmeans(std::span<const float> points, std::size_t dim, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed, unsigned threads = 0);

/// Trains each segment with the best of `kmeans_restarts` runs by SSE.
PqCodebook train(const FeatureSet& training, const PqConfig& config, unsigned threads = 0);

/// Nearest product word: the per-segment nearest sub-words, ties to the
/// smaller sub-word id.
WordId assign(std::span<const float> x, const PqCodebook& codebook);

/// The `count` product words closest to x by summed segment distance,
/// ascending, ties to the smaller word id. Enumerated by a multi-sequence
/// heap merge; cost grows with count rather than K^M.
std::vector<WordDistance> nearest_words(std::span<const float> x, const PqCodebook& codebook,
                                        std::size_t count);

std::vector<float> reconstruct(WordId word, const PqCodebook& codebook);
void reconstruct_into(WordId word, const PqCodebook& codebook, std::span<float> out);

/// Squared Euclidean distance accumulated in double.
double squared_l2(std::span<const float> a, std::span<const float> b);

}  // namespace cnnidx
