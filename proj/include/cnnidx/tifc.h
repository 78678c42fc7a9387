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

#include <cstdint>
#include <span>
#include <vector>

#include "cnnidx/vecio.h"

namespace cnnidx {

/// Softmax of a feature vector: one probability per virtual concept word.
struct TermFrequencyVector {
  std::vector<double> probs;
};

struct WordScore {
  std::uint32_t word = 0;
  double prob = 0.0;

  friend bool operator==(const WordScore&, const WordScore&) = default;
};

/// One random D-dimensional vector per virtual word, regenerated from
/// (dim, seed) wherever an index is loaded.
class VirtualWordBank {
 public:
  VirtualWordBank(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return vectors_.dim(); }
  std::uint64_t seed() const { return seed_; }
  std::span<const float> word(std::size_t id) const { return vectors_[id]; }

  friend bool operator==(const VirtualWordBank&, const VirtualWordBank&) = default;

 private:
  std::uint64_t seed_;
  FeatureSet vectors_;
};

/// Max-subtracted softmax; throws InvalidArgument on empty or non-finite input.
TermFrequencyVector softmax(std::span<const float> x);

/// The `count` largest bins, descending, ties to the smaller word id.
std::vector<WordScore> top_words(const TermFrequencyVector& tf, std::size_t count);

VirtualWordBank make_virtual_words(std::size_t dim, std::uint64_t seed);

}  // namespace cnnidx
