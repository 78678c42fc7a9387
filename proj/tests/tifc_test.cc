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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cnnidx/error.h"

namespace cnnidx {
namespace {

std::vector<float> grid_vector(std::mt19937_64& gen, std::size_t d) {
  // Multiples of 1/1024 in [-50, 50].
  std::uniform_int_distribution<int> dist(-50 * 1024, 50 * 1024);
  std::vector<float> x(d);
  for (auto& v : x) v = static_cast<float>(dist(gen)) / 1024.0f;
  return x;
}

TEST(SoftmaxTest, UniformCases) {
  for (const float c : {0.0f, -7.5f, 3.0f, 1e4f}) {
    const std::vector<float> x(4, c);
    const auto tf = softmax(x);
    for (double p : tf.probs) EXPECT_DOUBLE_EQ(p, 0.25);
  }
}

TEST(SoftmaxTest, OneTwoThree) {
  const std::vector<float> x = {1, 2, 3};
  const auto tf = softmax(x);
  // Direct evaluation in extended precision.
  const long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(tf.probs[i], static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z),
                1e-15);
  }
  EXPECT_NEAR(tf.probs[0], 0.090031, 1e-6);
  EXPECT_NEAR(tf.probs[1], 0.244728, 1e-6);
  EXPECT_NEAR(tf.probs[2], 0.665241, 1e-6);
}

TEST(SoftmaxTest, Normalization) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto x = grid_vector(gen, 1 + trial % 300);
    const auto tf = softmax(x);
    EXPECT_NEAR(std::accumulate(tf.probs.begin(), tf.probs.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(SoftmaxTest, ShiftInvariance) {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> shift(-1000, 1000);
  for (int trial = 0; trial < 2000; ++trial) {
    auto x = grid_vector(gen, 1 + trial % 64);
    const auto base = softmax(x);
    const float c = static_cast<float>(shift(gen));
    for (auto& v : x) v += c;
    const auto shifted = softmax(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(shifted.probs[i], base.probs[i], 1e-12);
  }
}

TEST(SoftmaxTest, OverflowSafe) {
  const std::vector<float> x = {1e4f, -1e4f, 0.0f, 9999.0f};
  const auto tf = softmax(x);
  for (double p : tf.probs) EXPECT_TRUE(std::isfinite(p));
  EXPECT_NEAR(std::accumulate(tf.probs.begin(), tf.probs.end(), 0.0), 1.0, 1e-12);
  EXPECT_GT(tf.probs[0], tf.probs[3]);
}

TEST(SoftmaxTest, RejectsBadInput) {
  EXPECT_THROW(softmax(std::vector<float>{}), InvalidArgument);
  EXPECT_THROW(softmax(std::vector<float>{1.0f, NAN}), InvalidArgument);
  EXPECT_THROW(softmax(std::vector<float>{INFINITY}), InvalidArgument);
}

TEST(TopWordsTest, Example) {
  const auto words = top_words(softmax(std::vector<float>{5, 1, 9, 3}), 2);
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0].word, 2u);
  EXPECT_EQ(words[1].word, 0u);
  EXPECT_GT(words[0].prob, words[1].prob);
}

TEST(TopWordsTest, FullSelectionSorted) {
  const auto tf = softmax(std::vector<float>{0.5f, -2, 7, 1, 3});
  const auto words = top_words(tf, 5);
  const std::vector<std::uint32_t> expect = {2, 4, 3, 0, 1};
  ASSERT_EQ(words.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(words[i].word, expect[i]);
}

TEST(TopWordsTest, TieGoesToSmallerId) {
  TermFrequencyVector tf;
  tf.probs.assign(10, 0.05);
  tf.probs[3] = 0.2;
  tf.probs[7] = 0.2;
  const auto words = top_words(tf, 1);
  ASSERT_EQ(words.size(), 1u);
  EXPECT_EQ(words[0].word, 3u);
  EXPECT_EQ(top_words(tf, 2)[1].word, 7u);
}

TEST(TopWordsTest, MatchesRawOrder) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + trial % 100;
    std::vector<float> x(d);
    std::iota(x.begin(), x.end(), -static_cast<float>(d) / 2);
    std::shuffle(x.begin(), x.end(), gen);
    const std::size_t s = 1 + gen() % d;
    std::vector<std::uint32_t> order(d);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] > x[b]; });
    const auto words = top_words(softmax(x), s);
    ASSERT_EQ(words.size(), s);
    for (std::size_t i = 0; i < s; ++i) ASSERT_EQ(words[i].word, order[i]);
  }
}

TEST(TopWordsTest, CountOutOfRange) {
  const auto tf = softmax(std::vector<float>{1, 2});
  EXPECT_THROW(top_words(tf, 0), InvalidArgument);
  EXPECT_THROW(top_words(tf, 3), InvalidArgument);
}

TEST(VirtualWordsTest, Deterministic) {
  EXPECT_EQ(make_virtual_words(32, 9), make_virtual_words(32, 9));
  const auto a = make_virtual_words(32, 9);
  const auto b = make_virtual_words(32, 10);
  bool differ = false;
  for (std::size_t w = 0; w < 32 && !differ; ++w) {
    differ = !std::equal(a.word(w).begin(), a.word(w).end(), b.word(w).begin());
  }
  EXPECT_TRUE(differ);
}

TEST(VirtualWordsTest, Shapes) {
  const auto one = make_virtual_words(1, 3);
  EXPECT_EQ(one.dim(), 1u);
  EXPECT_EQ(one.word(0).size(), 1u);
  EXPECT_EQ(one.seed(), 3u);
  EXPECT_THROW(make_virtual_words(0, 1), InvalidArgument);
}

TEST(VirtualWordsTest, RoughlyStandardNormal) {
  const auto bank = make_virtual_words(256, 4);
  double sum = 0, sq = 0;
  for (std::size_t w = 0; w < 256; ++w) {
    for (float v : bank.word(w)) {
      sum += v;
      sq += double(v) * v;
    }
  }
  const double n = 256.0 * 256.0;
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.03);
}

}  // namespace
}  // namespace cnnidx
