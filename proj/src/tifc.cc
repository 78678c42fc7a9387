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

#include "cnnidx/tifc.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "cnnidx/error.h"
#include "cnnidx/random.h"

namespace cnnidx {

VirtualWordBank::VirtualWordBank(std::size_t dim, std::uint64_t seed)
    : seed_(seed), vectors_(dim) {
  Rng rng(seed);
  vectors_.reserve(dim);
  std::vector<float> v(dim);
  for (std::size_t w = 0; w < dim; ++w) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
    vectors_.append(v);
  }
}

VirtualWordBank make_virtual_words(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw InvalidArgument("virtual word dimension must be >= 1");
  return VirtualWordBank(dim, seed);
}

TermFrequencyVector softmax(std::span<const float> x) {
  if (x.empty()) throw InvalidArgument("softmax of an empty vector");
  float peak = x[0];
  for (float v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("softmax input has a non-finite component");
    peak = std::max(peak, v);
  }
  TermFrequencyVector tf;
  tf.probs.resize(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    tf.probs[i] = std::exp(static_cast<double>(x[i]) - static_cast<double>(peak));
    total += tf.probs[i];
  }
  for (auto& p : tf.probs) p /= total;
  return tf;
}

std::vector<WordScore> top_words(const TermFrequencyVector& tf, std::size_t count) {
  if (count < 1 || count > tf.probs.size()) {
    throw InvalidArgument("top_words count " + std::to_string(count) + " outside [1, " +
                          std::to_string(tf.probs.size()) + "]");
  }
  std::vector<WordScore> all(tf.probs.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = {static_cast<std::uint32_t>(i), tf.probs[i]};
  }
  auto before = [](const WordScore& a, const WordScore& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.word < b.word;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count), all.end(),
                    before);
  all.resize(count);
  return all;
}

}  // namespace cnnidx
