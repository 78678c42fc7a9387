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


#include "cnnidx/vecio.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "cnnidx/baseline.h"
#include "cnnidx/error.h"
#include "test_util.h"

namespace cnnidx {
namespace {

using testing::TempDir;

std::vector<std::uint8_t> record_bytes(std::int32_t dim, std::vector<float> values) {
  std::vector<std::uint8_t> out(4 + 4 * values.size());
  std::memcpy(out.data(), &dim, 4);
  std::memcpy(out.data() + 4, values.data(), 4 * values.size());
  return out;
}

void append_bytes(std::vector<std::uint8_t>& dst, const std::vector<std::uint8_t>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

template <typename Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(FeatureFileTest, SingleRecord) {
  TempDir dir;
  testing::write_bytes(dir / "a.fvecs", record_bytes(4, {1, 2, 3, 4}));
  const auto fs = read_feature_file(dir / "a.fvecs");
  ASSERT_EQ(fs.size(), 1u);
  ASSERT_EQ(fs.dim(), 4u);
  EXPECT_EQ(fs[0][0], 1.0f);
  EXPECT_EQ(fs[0][3], 4.0f);
}

TEST(FeatureFileTest, HandBuiltThreeRecords) {
  TempDir dir;
  std::vector<std::uint8_t> bytes;
  append_bytes(bytes, record_bytes(2, {0.5f, -1.0f}));
  append_bytes(bytes, record_bytes(2, {2.0f, 3.0f}));
  append_bytes(bytes, record_bytes(2, {-4.0f, 8.25f}));
  ASSERT_EQ(bytes.size(), 36u);
  testing::write_bytes(dir / "three.fvecs", bytes);

  const auto fs = read_feature_file(dir / "three.fvecs");
  ASSERT_EQ(fs.size(), 3u);
  ASSERT_EQ(fs.dim(), 2u);
  EXPECT_EQ(fs[0][0], 0.5f);
  EXPECT_EQ(fs[0][1], -1.0f);
  EXPECT_EQ(fs[1][0], 2.0f);
  EXPECT_EQ(fs[1][1], 3.0f);
  EXPECT_EQ(fs[2][0], -4.0f);
  EXPECT_EQ(fs[2][1], 8.25f);
}

TEST(FeatureFileTest, ZeroVectorIsTwelveBytes) {
  TempDir dir;
  write_feature_file(FeatureSet(2, {0.0f, 0.0f}), dir / "z.fvecs");
  const auto bytes = testing::read_bytes(dir / "z.fvecs");
  ASSERT_EQ(bytes.size(), 12u);
  EXPECT_EQ(bytes, record_bytes(2, {0.0f, 0.0f}));
}

TEST(FeatureFileTest, RoundTripRandom) {
  TempDir dir;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 1 + seed * 7 % 100;
    const std::size_t d = 1 + seed * 3 % 16;
    const auto fs = testing::random_features(n, d, seed, -1e6f, 1e6f);
    write_feature_file(fs, dir / "r.fvecs");
    EXPECT_EQ(read_feature_file(dir / "r.fvecs"), fs) << "seed " << seed;
  }
  const auto fs = testing::random_features(100, 16, 99);
  write_feature_file(fs, dir / "r.fvecs");
  EXPECT_EQ(read_feature_file(dir / "r.fvecs"), fs);
}

TEST(FeatureFileTest, EmptySetRejected) {
  TempDir dir;
  EXPECT_THROW(write_feature_file(FeatureSet(3), dir / "e.fvecs"), InvalidArgument);
}

TEST(FeatureFileTest, DimensionMismatchNamesRecord) {
  TempDir dir;
  std::vector<std::uint8_t> bytes;
  append_bytes(bytes, record_bytes(2, {1, 2}));
  append_bytes(bytes, record_bytes(3, {1, 2, 3}));
  testing::write_bytes(dir / "m.fvecs", bytes);
  const auto msg = error_of([&] { read_feature_file(dir / "m.fvecs"); });
  EXPECT_NE(msg.find("record 1"), std::string::npos) << msg;
}

TEST(FeatureFileTest, TruncatedPayloadNamesRecord) {
  TempDir dir;
  std::vector<std::uint8_t> bytes;
  append_bytes(bytes, record_bytes(2, {1, 2}));
  append_bytes(bytes, record_bytes(2, {1, 2}));
  append_bytes(bytes, record_bytes(2, {1, 2}));
  bytes.resize(bytes.size() - 3);
  testing::write_bytes(dir / "t.fvecs", bytes);
  const auto msg = error_of([&] { read_feature_file(dir / "t.fvecs"); });
  EXPECT_NE(msg.find("record 2"), std::string::npos) << msg;
}

TEST(FeatureFileTest, TruncatedHeaderAndMalformedHeader) {
  TempDir dir;
  auto bytes = record_bytes(2, {1, 2});
  bytes.push_back(2);
  bytes.push_back(0);
  testing::write_bytes(dir / "h.fvecs", bytes);
  EXPECT_NE(error_of([&] { read_feature_file(dir / "h.fvecs"); }).find("record 1"),
            std::string::npos);

  testing::write_bytes(dir / "neg.fvecs", record_bytes(-5, {}));
  EXPECT_NE(error_of([&] { read_feature_file(dir / "neg.fvecs"); }).find("record 0"),
            std::string::npos);
}

TEST(FeatureFileTest, NonFiniteRejected) {
  TempDir dir;
  testing::write_bytes(dir / "nan.fvecs",
                       record_bytes(2, {1.0f, std::numeric_limits<float>::quiet_NaN()}));
  EXPECT_THROW(read_feature_file(dir / "nan.fvecs"), FormatError);
}

TEST(FeatureFileTest, MissingFile) {
  TempDir dir;
  EXPECT_THROW(read_feature_file(dir / "nope.fvecs"), IoError);
}

TEST(IntFileTest, RoundTrip) {
  TempDir dir;
  std::vector<std::vector<std::int32_t>> records = {{3, 1, 2}, {7}, {0, 0, 9, 4}};
  write_int_file(records, dir / "r.ivecs");
  EXPECT_EQ(read_int_file(dir / "r.ivecs"), records);
}

TEST(GroundTruthTest, ParsesLine) {
  const auto gt = parse_ground_truth("0: 0 1 2\n");
  ASSERT_EQ(gt.entries.size(), 1u);
  EXPECT_EQ(gt.entries.at(0), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(GroundTruthTest, IdsSortedAndUnique) {
  const auto gt = parse_ground_truth("2: 9 3 9 1\n");
  EXPECT_EQ(gt.entries.at(2), (std::vector<std::uint32_t>{1, 3, 9}));
}

TEST(GroundTruthTest, CommentsAndBlankLines) {
  const auto gt = parse_ground_truth("# header\n\n3: 5 6\n1:7\n");
  ASSERT_EQ(gt.entries.size(), 2u);
  EXPECT_EQ(gt.entries.at(1), std::vector<std::uint32_t>{7});
  EXPECT_EQ(gt.entries.at(3), (std::vector<std::uint32_t>{5, 6}));
}

TEST(GroundTruthTest, Errors) {
  EXPECT_THROW(parse_ground_truth("5:\n"), FormatError);
  EXPECT_THROW(parse_ground_truth("5 1 2\n"), FormatError);
  EXPECT_THROW(parse_ground_truth("x: 1\n"), FormatError);
  EXPECT_THROW(parse_ground_truth("1: 1\n1: 2\n"), FormatError);
  EXPECT_THROW(parse_ground_truth("1: 1 q\n"), FormatError);
  EXPECT_THROW(parse_ground_truth("0: 10\n", 10), FormatError);
  EXPECT_NO_THROW(parse_ground_truth("0: 9\n", 10));
}

TEST(GroundTruthTest, FileRoundTrip) {
  TempDir dir;
  GroundTruth gt;
  gt.entries[0] = {2, 4};
  gt.entries[9] = {1};
  write_ground_truth(gt, dir / "gt.txt");
  EXPECT_EQ(read_ground_truth(dir / "gt.txt"), gt);
}

TEST(SyntheticTest, Deterministic) {
  SynthSpec spec;
  spec.n_clusters = 10;
  spec.points_per_cluster = 7;
  spec.dim = 8;
  spec.seed = 42;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.database, b.database);
  EXPECT_EQ(a.queries, b.queries);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  EXPECT_EQ(a.query_sources, b.query_sources);
  spec.seed = 43;
  EXPECT_NE(generate_synthetic(spec).database, a.database);
}

TEST(SyntheticTest, Counts) {
  SynthSpec spec;
  const auto data = generate_synthetic(spec);
  EXPECT_EQ(data.database.size(), 10000u);
  EXPECT_EQ(data.database.dim(), 64u);
  EXPECT_EQ(data.queries.size(), 100u);
  ASSERT_EQ(data.ground_truth.entries.size(), 100u);
  for (const auto& [qid, ids] : data.ground_truth.entries) {
    EXPECT_EQ(ids.size(), 100u);
    EXPECT_EQ(std::set<std::uint32_t>(ids.begin(), ids.end()).size(), 100u);
  }
}

TEST(SyntheticTest, GroupsOfFour) {
  SynthSpec spec;
  spec.n_clusters = 25;
  spec.points_per_cluster = 4;
  spec.dim = 16;
  const auto data = generate_synthetic(spec);
  for (const auto& [qid, ids] : data.ground_truth.entries) EXPECT_EQ(ids.size(), 4u);
}

TEST(SyntheticTest, ZeroNoiseQueryIsItsSource) {
  SynthSpec spec;
  spec.n_clusters = 20;
  spec.points_per_cluster = 10;
  spec.dim = 16;
  spec.noise_stddev = 0.0;
  const auto data = generate_synthetic(spec);
  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const auto src = data.query_sources[q];
    const auto row = data.database[src];
    EXPECT_TRUE(std::equal(row.begin(), row.end(), data.queries[q].begin()));
    const auto& members = data.ground_truth.entries.at(static_cast<std::uint32_t>(q));
    EXPECT_NE(std::find(members.begin(), members.end(), src), members.end());
    const auto top = brute_force(data.database, data.queries[q], 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].id, src);
    EXPECT_EQ(top[0].distance, 0.0);
  }
}

TEST(SyntheticTest, InvalidSpec) {
  SynthSpec spec;
  spec.n_clusters = 0;
  EXPECT_THROW(generate_synthetic(spec), InvalidArgument);
  spec = SynthSpec{};
  spec.cluster_stddev = -1.0;
  EXPECT_THROW(generate_synthetic(spec), InvalidArgument);
}

TEST(NormalizeTest, UnitLength) {
  auto fs = testing::random_features(50, 12, 3);
  normalize_l2(fs);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    double s = 0;
    for (float v : fs[i]) s += double(v) * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
}

}  // namespace
}  // namespace cnnidx
