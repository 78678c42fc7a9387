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


#include "cnnidx/baseline.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "cnnidx/error.h"
#include "cnnidx/eval.h"
#include "test_util.h"

namespace cnnidx {
namespace {

std::vector<std::uint32_t> ids_of(const std::vector<Neighbor>& ns) {
  std::vector<std::uint32_t> ids;
  for (const auto& n : ns) ids.push_back(n.id);
  return ids;
}

double mean_recall(const LshIndex& lsh, const FeatureSet& db, const FeatureSet& queries,
                   std::size_t k) {
  double total = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    total += recall_at_k(ids_of(lsh.query(queries[q], k)), ids_of(brute_force(db, queries[q], k)), k);
  }
  return total / double(queries.size());
}

TEST(BruteForceTest, SelfMatch) {
  const auto db = testing::random_features(50, 8, 1);
  const auto r = brute_force(db, db[7], 5);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r[0].id, 7u);
  EXPECT_EQ(r[0].distance, 0.0);
}

TEST(BruteForceTest, HandComputedOrder) {
  const FeatureSet db(2, {3, 4, 1, 0, -2, 0});
  const std::vector<float> q = {0, 0};
  const auto r = brute_force(db, q, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(ids_of(r), (std::vector<std::uint32_t>{1, 2, 0}));
  EXPECT_EQ(r[0].distance, 1.0);
  EXPECT_EQ(r[1].distance, 4.0);
  EXPECT_EQ(r[2].distance, 25.0);
}

TEST(BruteForceTest, TiesBySmallerId) {
  const FeatureSet db(1, {1, -1, 1, 0});
  const auto r = brute_force(db, std::vector<float>{0}, 4);
  EXPECT_EQ(ids_of(r), (std::vector<std::uint32_t>{3, 0, 1, 2}));
}

TEST(BruteForceTest, TopKBeyondN) {
  const auto db = testing::random_features(6, 3, 2);
  EXPECT_EQ(brute_force(db, db[0], 100).size(), 6u);
  EXPECT_THROW(brute_force(db, std::vector<float>(4), 1), InvalidArgument);
}

TEST(BruteForceTest, MatchesFullSort) {
  const auto db = testing::random_features(300, 12, 3);
  const auto queries = testing::random_features(20, 12, 4);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < 300; ++i) {
      double d = 0;
      for (std::size_t j = 0; j < 12; ++j) d += (double(db[i][j]) - queries[q][j]) * (double(db[i][j]) - queries[q][j]);
      all.push_back({d, i});
    }
    std::sort(all.begin(), all.end());
    const auto r = brute_force(db, queries[q], 25);
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(r[i].id, all[i].second);
  }
}

TEST(LshTest, DuplicateIsAlwaysCandidateAndFirst) {
  const auto db = testing::random_features(500, 16, 5);
  const auto lsh = lsh_build(db, LshConfig{4, 12, 7}, 1);
  for (std::uint32_t i = 0; i < 500; i += 13) {
    const auto cand = lsh.candidates(db[i]);
    EXPECT_TRUE(std::binary_search(cand.begin(), cand.end(), i));
    const auto r = lsh_query(lsh, db[i], 3);
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].id, i);
  }
}

TEST(LshTest, InvalidConfig) {
  const auto db = testing::random_features(10, 4, 6);
  EXPECT_THROW(LshIndex(db, LshConfig{1, 0, 1}), InvalidArgument);
  EXPECT_THROW(LshIndex(db, LshConfig{0, 8, 1}), InvalidArgument);
  EXPECT_THROW(LshIndex(db, LshConfig{1, 65, 1}), InvalidArgument);
  const LshIndex lsh(db, LshConfig{2, 4, 1});
  EXPECT_THROW(lsh.query(std::vector<float>(3), 1), InvalidArgument);
  EXPECT_GT(lsh.memory_bytes(), 0u);
}

TEST(LshTest, Deterministic) {
  const auto db = testing::random_features(300, 8, 8);
  const LshIndex a(db, LshConfig{3, 6, 9}, 1);
  const LshIndex b(db, LshConfig{3, 6, 9}, 3);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(a.query(db[i], 10), b.query(db[i], 10));
}

TEST(LshTest, RecallOnSynthetic) {
  SynthSpec spec;
  spec.seed = 11;
  const auto data = generate_synthetic(spec);
  const LshIndex lsh(data.database, LshConfig{8, 16, 1});
  const double recall = mean_recall(lsh, data.database, data.queries, 10);
  std::cout << "lsh 8x16 recall@10 " << recall << "\n";
  EXPECT_GT(recall, 0.5);
}

TEST(LshTest, RecallNonDecreasingInTables) {
  SynthSpec spec;
  spec.n_clusters = 50;
  spec.points_per_cluster = 40;
  spec.seed = 12;
  auto data = generate_synthetic(spec);
  const auto queries = testing::random_features(100, 64, 13, -1.5f, 1.5f);
  double prev = 0;
  for (std::size_t tables : {1, 2, 4, 8, 16}) {
    const LshIndex lsh(data.database, LshConfig{tables, 14, 5});
    const double r = mean_recall(lsh, data.database, queries, 10);
    EXPECT_GE(r, prev) << tables << " tables";
    prev = r;
  }
}

}  // namespace
}  // namespace cnnidx
